"""Skeleton-sequence restoration (in-context completion) and fine-grained action recognition."""

from .core import SequenceError, SkeletonSequence, SkeletonTopology, coco17_topology, read_sequences, write_sequences
from .nn import NumericError

__version__ = "0.1.0"

__all__ = [
    "NumericError", "SequenceError", "SkeletonSequence", "SkeletonTopology",
    "coco17_topology", "read_sequences", "write_sequences",
]
