# features: dual-path extraction, positional encoding and attention.
# Weight files live in .weights (imported explicitly: it depends on matching).
from .extractor import (
    BRANCHES, DTYPE, HANDCRAFTED_CHANNELS, FeaturePyramid, ConvBackbone,
    extract_pyramid, cell_validity, pad_to_multiple, l2_normalize,
)
from .encoding import FlatFeatures, flatten, encoding_table, positional_encode
from .attention import AttentionLayer, AttentionWeights, attend, attend_tokens

__all__ = [
    'BRANCHES', 'DTYPE', 'HANDCRAFTED_CHANNELS', 'FeaturePyramid', 'ConvBackbone',
    'extract_pyramid', 'cell_validity', 'pad_to_multiple', 'l2_normalize',
    'FlatFeatures', 'flatten', 'encoding_table', 'positional_encode',
    'AttentionLayer', 'AttentionWeights', 'attend', 'attend_tokens',
]
