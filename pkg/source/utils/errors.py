"""Exceptions raised across the toolkit.

Two families exist. `ValidationError` covers inputs that violate a
precondition (the command line exits with code 1), `ProcessingError`
covers failures that happen while work is being done (exit code 2).
"""


class AvseError(Exception):
    """Base class of every toolkit error."""

    exit_code = 2


class ValidationError(AvseError, ValueError):
    exit_code = 1


class ProcessingError(AvseError, RuntimeError):
    exit_code = 2


# Configuration.
class ConfigError(ValidationError):
    pass


# Signals and spectrograms.
class AllZeroSignal(ValidationError):
    pass


class SignalTooShort(ValidationError):
    pass


class ZeroWindowOverlap(ProcessingError):
    pass


class ShapeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


# Noise and mixing.
class CorpusTooSmall(ValidationError):
    pass


class ZeroEnergySignal(ValidationError):
    pass


class NoiseTooShort(ValidationError):
    pass


# Enhancement and model inputs.
class MissingModality(ValidationError):
    pass


class VideoAudioLengthMismatch(ValidationError):
    pass


class BadChunkShape(ValidationError):
    pass


# Neural layers.
class NonFiniteValue(ProcessingError):
    pass


class NonFiniteGradient(ProcessingError):
    pass


class MissingForwardCache(ProcessingError):
    pass


class UnreachableOutputShape(ValidationError):
    pass


class OddSpatialDim(ValidationError):
    pass


class DegenerateBatch(ValidationError):
    pass


# Data handling.
class EmptySplit(ValidationError):
    pass


class InsufficientUtterances(ValidationError):
    pass


class BadSpeakerCount(ValidationError):
    pass


class StatsMissing(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class CorruptFile(ProcessingError):
    pass


class ShapeMismatchOnLoad(ProcessingError):
    pass


class IoError(ProcessingError, OSError):
    pass


# Evaluation, training and reporting.
class TooShortAfterVad(ValidationError):
    pass


class ToolNotConfigured(ValidationError):
    pass


class ToolFailed(ProcessingError):
    pass


class EmptyTestSet(ValidationError):
    pass


class DivergedTraining(ProcessingError):
    pass


class MalformedCsv(ValidationError):
    pass
