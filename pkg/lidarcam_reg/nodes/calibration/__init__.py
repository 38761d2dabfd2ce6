# Calibration nodes
