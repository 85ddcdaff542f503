"""Compressed forward indexes for learned sparse retrieval.

Sparse document vectors are stored as gap-coded component IDs (VByte,
Elias gamma/delta, zeta, StreamVByte or DotVByte) next to F32, F16 or 8-bit
fixed-point values, and scored against dense queries by full scans.
"""

from .bisection import (
    BisectionConfig,
    BisectionTrace,
    Permutation,
    apply_permutation,
    bisection_cost,
    build_graph,
    rgb_reorder,
)
from .core import (
    ForwardIndex,
    SparseDataset,
    SparseVector,
    ValueFormat,
    ValueKind,
    build_uncompressed,
    dequantize,
    from_gaps,
    quantize,
    to_gaps,
)
from .errors import (
    BadMagicError,
    ChecksumError,
    CorruptionError,
    FormatError,
    FwdIndexError,
    ValidationError,
    VersionMismatchError,
)
from .formats import load_dataset, save_dataset
from .index import Codec, CompressedForwardIndex, DenseQuery, TopK, build_index, full_scan_topk, top_k

__version__ = "0.1.0"

__all__ = [
    "BadMagicError", "BisectionConfig", "BisectionTrace", "ChecksumError", "Codec",
    "CompressedForwardIndex", "CorruptionError", "DenseQuery", "FormatError", "ForwardIndex",
    "FwdIndexError", "Permutation", "SparseDataset", "SparseVector", "TopK", "ValidationError",
    "ValueFormat", "ValueKind", "VersionMismatchError", "apply_permutation", "bisection_cost",
    "build_graph", "build_index", "build_uncompressed", "dequantize", "from_gaps", "full_scan_topk",
    "load_dataset", "quantize", "rgb_reorder", "save_dataset", "to_gaps", "top_k",
]
