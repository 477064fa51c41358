"""Exception hierarchy shared by all styleforge modules.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numeric failures exit 3.
"""


class StyleforgeError(Exception):
    """Base class for all styleforge errors."""


class DataError(StyleforgeError):
    """Bad or unusable input data (CLI exit code 2)."""


class NumericError(StyleforgeError):
    """Numeric failure during computation (CLI exit code 3)."""


class FileReadError(DataError):
    """A corpus path could not be read."""


class EncodingError(DataError):
    """A corpus file is not valid UTF-8."""


class EmptyCorpusError(DataError):
    """An operation requires a non-empty corpus."""


class CorpusTooSmallError(DataError):
    """The corpus is below the minimum size for training."""


class UnknownIdError(DataError):
    """A token id does not exist in the vocabulary."""


class UnknownWordError(DataError):
    """A word is outside the co-occurrence vocabulary."""


class NoSeedCoverageError(DataError):
    """A seed pole has no words present in the co-occurrence vocabulary."""


class AllPadError(DataError):
    """A token stream has no maskable (non-special) positions."""


class EmptyTargetsError(DataError):
    """A loss was requested over an empty target set."""


class LengthMismatchError(DataError):
    """Paired sequences have different lengths."""


class EmptyInputError(DataError):
    """An operation received an empty input it cannot handle."""


class NegativeComponentError(DataError):
    """A probability vector contains a negative component."""


class AlignmentMismatchError(DataError):
    """Corpora expected to be sentence-aligned are not."""


class ShapeError(NumericError):
    """Array shapes do not agree with the model configuration."""


class NonFiniteGradientError(NumericError):
    """A gradient contained NaN or infinity; training aborted."""
