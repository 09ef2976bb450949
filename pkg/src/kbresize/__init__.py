"""Zero-shot resizing of vector-quantization codebooks.

A parent codebook is embedded in the Poincare ball, connected by a
hyperbolic minimum spanning tree, and pruned leaf by leaf; the survival
order is a reusable importance ranking from which a child codebook of any
size is cut without retraining.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .codebook import EuclideanCodebook, read_codebook, write_codebook
from .codec import (
    FeatureGrid,
    IndexGrid,
    Payload,
    bits_per_index,
    dequantize,
    pack,
    quantize,
    unpack,
)
from .errors import DecodeError, DomainError, InvalidInputError, KBResizeError, StaleRankingError
from .geometry import exp_map, hyperbolic_distance, log_map
from .ranking import ImportanceRanking, compute_ranking, resize, verify_ranking
from .tree import build_mst, compute_removal_order, prune_to_size, select_root

__all__ = [
    "BACKEND",
    "DecodeError",
    "DomainError",
    "EuclideanCodebook",
    "FeatureGrid",
    "ImportanceRanking",
    "IndexGrid",
    "InvalidInputError",
    "KBResizeError",
    "Payload",
    "StaleRankingError",
    "bits_per_index",
    "build_mst",
    "compute_ranking",
    "compute_removal_order",
    "dequantize",
    "exp_map",
    "hyperbolic_distance",
    "log_map",
    "pack",
    "prune_to_size",
    "quantize",
    "read_codebook",
    "resize",
    "select_root",
    "unpack",
    "verify_ranking",
    "write_codebook",
]
