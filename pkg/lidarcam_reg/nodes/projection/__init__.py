# Projection nodes
