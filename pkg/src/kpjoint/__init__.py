"""kpjoint: keyphrase extraction by jointly trained phrase ranking and chunking.

The engine enumerates n-gram candidates from a document, scores every
occurrence with a per-length convolutional head over token embeddings,
max-pools occurrence scores into one document-level score per distinct
phrase, and trains that scorer with a pairwise ranking hinge plus a
per-occurrence binary chunking loss.
"""

__version__ = "0.1.0"

CHECKPOINT_FORMAT_VERSION = 1


class KpjointError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(KpjointError):
    """Malformed corpus file or invalid document."""


class FormatError(KpjointError):
    """Malformed interchange file (embeddings, predictions, checkpoints)."""


class NumericError(KpjointError):
    """A numeric computation produced a non-finite value."""


class TrainAbort(NumericError):
    """Training aborted because a loss became non-finite."""
