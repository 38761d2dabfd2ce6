# matcher: coarse matching, sub-pixel refinement and match dumps
from .coarse import (
    SimilarityMatrix, ProbMatrix, ConfidenceMatrix, RepeatabilityMLP, RepeatabilityMap,
    CoarseMatchSet, cosine_similarity, dual_softmax, repeatability, fuse_confidence,
    extract_coarse_matches,
)
from .refine import FineMatchSet, refine, soft_argmax, spatial_expectation, fine_to_pixel, cell_to_fine
from .dump import MatchRecords, write_matches, read_matches

__all__ = [
    'SimilarityMatrix', 'ProbMatrix', 'ConfidenceMatrix', 'RepeatabilityMLP', 'RepeatabilityMap',
    'CoarseMatchSet', 'cosine_similarity', 'dual_softmax', 'repeatability', 'fuse_confidence',
    'extract_coarse_matches',
    'FineMatchSet', 'refine', 'soft_argmax', 'spatial_expectation', 'fine_to_pixel', 'cell_to_fine',
    'MatchRecords', 'write_matches', 'read_matches',
]
