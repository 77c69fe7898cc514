"""Exception types shared across the package.

Every data/validation failure raises one of these rather than a bare
ValueError, so callers (and the CLI exit-code mapping) can tell input
problems apart from internal numeric failures.
"""


class TonetraceError(Exception):
    """Base class for all package errors."""


# --- audio I/O and buffer arithmetic ---

class UnsupportedFormat(TonetraceError):
    """WAV encoding other than PCM16 or IEEE float32, or >2 channels."""


class CorruptFile(TonetraceError):
    """Truncated or structurally invalid RIFF/WAVE file."""


class IoError(TonetraceError):
    """Filesystem-level read/write failure."""


class OutOfRange(TonetraceError):
    """Scalar argument outside its documented range."""


class EmptyBuffer(TonetraceError):
    pass


class LengthMismatch(TonetraceError):
    pass


class RateMismatch(TonetraceError):
    pass


class InvalidAttackParams(TonetraceError):
    pass


# --- spectral ---

class TooShort(TonetraceError):
    """Audio shorter than one analysis frame."""


class InvalidRange(TonetraceError):
    """Bad fmin/fmax for a filterbank."""


# --- watermarks ---

class InvalidSpec(TonetraceError):
    """Watermark spec invalid for the audio it is applied to."""


# --- detection / scoring ---

class DegenerateLabels(TonetraceError):
    """Score set lacks at least one sample of each class."""


class EmptyGroup(TonetraceError):
    pass


class ConfigError(TonetraceError):
    """Watermark/detector configuration is internally inconsistent."""


# --- metrics ---

class ZeroReference(TonetraceError):
    pass


class LabelMismatch(TonetraceError):
    pass


class TooFewSamples(TonetraceError):
    pass


class DimMismatch(TonetraceError):
    pass


class NumericalFailure(TonetraceError):
    """A numeric routine (e.g. matrix square root) did not converge."""


# --- tokenizer / generator ---

class TooFewFrames(TonetraceError):
    pass


class InvalidToken(TonetraceError):
    pass


class EmptyCorpus(TonetraceError):
    pass


class PromptTooShort(TonetraceError):
    pass


# --- harness ---

class EmptyDataset(TonetraceError):
    pass


class MissingFile(TonetraceError):
    pass


class BadCsv(TonetraceError):
    pass
