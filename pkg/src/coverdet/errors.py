"""Exception types raised across the coverdet pipeline.

Every error deliberately carries a short, single-line message so the CLI
can relay it verbatim to stderr.
"""


class CoverdetError(Exception):
    """Base class for all pipeline errors."""


class InvalidParam(CoverdetError):
    """An argument violates a documented precondition."""


# --- audio ingestion ---

class MalformedContainer(CoverdetError):
    """File is not a readable RIFF/WAVE container."""


class UnsupportedEncoding(CoverdetError):
    """WAV encoding outside PCM16 / IEEE-float32, or unusable channel/rate."""


class EmptyAudio(CoverdetError):
    """WAV contains zero samples."""


# --- feature extraction / feature files ---

class ClipTooShort(CoverdetError):
    """Clip shorter than the longest analysis window."""


class IoFailure(CoverdetError):
    """Filesystem read/write failed."""


class FormatVersionMismatch(CoverdetError):
    """Binary file has wrong magic bytes or unknown version."""


class ChecksumMismatch(CoverdetError):
    """Binary file payload fails its CRC32 check (truncated or corrupt)."""


# --- tensor engine / training ---

class ShapeMismatch(CoverdetError):
    """Operand shapes are incompatible for the requested operation."""


class NumericalFault(CoverdetError):
    """NaN or Inf appeared in a forward/backward pass."""


class EmptyDataset(CoverdetError):
    """Training requested on zero pairs."""


# --- dataset / manifests ---

class NoOpenClique(CoverdetError):
    """Track record encountered before any clique header line."""


class DuplicateTrack(CoverdetError):
    """Same track id appears twice in a manifest."""


class EmptyManifest(CoverdetError):
    """Manifest contains no cliques after parsing."""


class InsufficientDiversity(CoverdetError):
    """Cannot produce the requested number of distinct cross-clique pairs."""


# --- evaluation ---

class ZeroVector(CoverdetError):
    """Cosine distance requested against a zero-norm vector."""


class MissingEmbedding(CoverdetError):
    """A track referenced by an evaluation pair has no embedding."""


class MissingFeature(CoverdetError):
    """A manifest track has no feature file on disk."""


class DimMismatch(CoverdetError):
    """Embedding dimensionality disagrees across entries."""


class BatchUnderfull(CoverdetError):
    """Fewer pairs remain than needed to fill one evaluation batch."""


class UsageError(CoverdetError):
    """Bad command-line invocation (exit status 2)."""
