"""Modular pipeline for individual-level behavior analysis in group video.

Six file-oriented stages (ingest, detect, track, crop, embed, learn) plus
evaluation and reporting.  Every stage reads and writes documented formats,
so third-party detectors, trackers, and embedders slot in via command
templates without touching this package.
"""

__version__ = "0.1.0"

from .errors import (
    ChunkTrackingError,
    ConflictingAnnotationError,
    CorruptMaskError,
    DecodeError,
    DegenerateCropError,
    DependencyError,
    DivergenceError,
    EmptyMaskError,
    EmptySequenceError,
    FormatError,
    HerdpipeError,
    IncompleteStoreError,
    InvalidClassError,
    InvalidConfigError,
    InvalidGeometryError,
    InvalidInputError,
    NamingOverflowError,
    NoSeedsError,
    NotAnEmbeddingError,
    StageError,
    StoreInconsistentError,
    StratificationError,
    SynthSpecError,
    TruncatedEmbeddingError,
    UndefinedCosineError,
    UndefinedMetricsError,
    UndefinedRecallError,
)
from .geometry import BBox, Detection, Mask, Trajectory, TrajectoryEntry, iou
from .geometry import mask_decode, mask_encode, mask_to_bbox

__all__ = [
    "__version__",
    "BBox", "Detection", "Mask", "Trajectory", "TrajectoryEntry", "iou",
    "mask_decode", "mask_encode", "mask_to_bbox",
    "HerdpipeError", "InvalidConfigError", "DependencyError", "StageError",
    "FormatError", "InvalidGeometryError", "CorruptMaskError", "EmptyMaskError",
    "DecodeError", "NamingOverflowError", "NoSeedsError", "UndefinedRecallError",
    "ChunkTrackingError", "UndefinedMetricsError", "DegenerateCropError",
    "ConflictingAnnotationError", "InvalidInputError", "NotAnEmbeddingError",
    "TruncatedEmbeddingError", "IncompleteStoreError", "StoreInconsistentError",
    "StratificationError", "InvalidClassError", "DivergenceError",
    "EmptySequenceError", "UndefinedCosineError", "SynthSpecError",
]
