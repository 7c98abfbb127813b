"""Exception hierarchy for the pipeline.

Every stage raises a named subclass of :class:`HerdpipeError` so the CLI can
map failures onto its exit-code contract (2 config, 3 dependency, 4 stage).
"""


class HerdpipeError(Exception):
    """Base class for all pipeline errors."""


class InvalidConfigError(HerdpipeError):
    """Bad configuration value, unknown config key, or malformed config file."""


class DependencyError(HerdpipeError):
    """A stage input (file produced by an earlier stage) is missing."""


class StageError(HerdpipeError):
    """A stage failed while executing."""


class FormatError(HerdpipeError):
    """A record file does not parse against its declared schema."""


# --- geometry / masks ---

class InvalidGeometryError(HerdpipeError):
    """Box with non-finite coordinates or negative extent."""


class CorruptMaskError(HerdpipeError):
    """RLE counts inconsistent with the mask dimensions."""


class EmptyMaskError(HerdpipeError):
    """Mask with no set pixels where at least one is required."""


# --- ingest ---

class DecodeError(HerdpipeError):
    """External decoder command failed; carries captured diagnostics."""


class NamingOverflowError(HerdpipeError):
    """Global frame index outside the 7-digit naming range."""


# --- detect / track ---

class NoSeedsError(HerdpipeError):
    """No seeds available; tracking must not start."""


class UndefinedRecallError(HerdpipeError):
    """Detection evaluation with zero ground-truth boxes everywhere."""


class ChunkTrackingError(HerdpipeError):
    """External tracker failed on a chunk; later chunks depend on it."""


class UndefinedMetricsError(HerdpipeError):
    """Tracking evaluation against empty ground truth."""


# --- crop ---

class DegenerateCropError(HerdpipeError):
    """Crop box has zero area after clamping to the frame."""


class ConflictingAnnotationError(HerdpipeError):
    """Two different behavior labels for one identity at the same frame."""


# --- embed ---

class InvalidInputError(HerdpipeError):
    """Operation input outside its domain (e.g. zero-size raster)."""


class NotAnEmbeddingError(HerdpipeError):
    """File does not start with the embedding magic."""


class TruncatedEmbeddingError(HerdpipeError):
    """Embedding file shorter (or longer) than its header promises."""


class IncompleteStoreError(HerdpipeError):
    """Embedding store missing files for some manifest rows."""


class StoreInconsistentError(HerdpipeError):
    """Embedding store mixes vector dimensions."""


# --- learn ---

class StratificationError(HerdpipeError):
    """A class has too few examples to stratify."""


class InvalidClassError(HerdpipeError):
    """Class weighting asked for a class with zero observed examples."""


class DivergenceError(HerdpipeError):
    """Non-finite loss or gradient during training.

    ``history`` carries the finite per-epoch records collected before the
    divergence, so callers can inspect how training went off the rails.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class EmptySequenceError(HerdpipeError):
    """Zero-length sequence passed to a temporal model."""


class UndefinedCosineError(HerdpipeError):
    """Cosine similarity requested for a zero-norm vector."""


# --- synth ---

class SynthSpecError(HerdpipeError):
    """Ill-formed synthetic sequence specification."""
