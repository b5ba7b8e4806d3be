"""Exception hierarchy shared across the package."""


class EmovecError(Exception):
    """Base class for every error raised by emovec."""


# -- WAV / manifest ingestion ------------------------------------------------

class MalformedRiff(EmovecError):
    """RIFF container is structurally broken (bad magic, chunk sizes, ...)."""


class UnsupportedFormat(EmovecError):
    """WAV payload is not 16-bit integer PCM."""


class UnsupportedRate(EmovecError):
    """WAV sample rate differs from the required 16 kHz."""


class DuplicateId(EmovecError):
    """Manifest contains the same utterance id twice."""


class UnknownLabel(EmovecError):
    """Manifest emotion field is not a known code or name."""


class MissingColumn(EmovecError):
    """Manifest header lacks a required column."""


# -- frame pipeline / features -------------------------------------------------

class EmptyInput(EmovecError):
    """Operation received zero frames."""


class EmptyUtterance(EmovecError):
    """Utterance yields no analysis frames."""


class DegenerateBand(EmovecError):
    """Mel band is too narrow for the requested filter count."""


# -- models --------------------------------------------------------------------

class DimensionMismatch(EmovecError):
    """Vector or matrix dimensions do not agree with the model."""


class NotEnoughData(EmovecError):
    """Fewer frames than mixture components."""


class SingleClass(EmovecError):
    """Binary training set contains only one label."""


class ModelError(EmovecError):
    """Model construction failed (wraps per-pair errors, bad files, ...)."""


class TooFewSamples(EmovecError):
    """A class has fewer samples than cross-validation folds."""


# -- evaluation ------------------------------------------------------------------

class ClassTooSmall(EmovecError):
    """Stratified split needs at least two utterances per class."""


class TooManyFailures(EmovecError):
    """More than 10% of the utterances failed to decode."""


class ConfigError(EmovecError):
    """Bad configuration file or key."""


class LengthMismatch(EmovecError):
    """Truth and prediction lists differ in length."""


class UnknownClass(EmovecError):
    """Label outside the declared class list."""


class EmptyMatrix(EmovecError):
    """Confusion matrix holds no samples."""
