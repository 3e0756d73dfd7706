"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 1);
``RuntimeFailure`` subclasses signal provider or I/O trouble (exit code 2).
"""


class SynstegoError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(SynstegoError, ValueError):
    pass


class RuntimeFailure(SynstegoError, RuntimeError):
    pass


# payload-codec
class InvalidPayloadLen(ValidationError):
    pass


class InvalidBits(ValidationError):
    pass


# text-corpus
class EmptyInput(ValidationError):
    pass


class CorpusTooSmall(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class IoError(RuntimeFailure):
    pass


# model-provider
class ProviderError(RuntimeFailure):
    pass


class Timeout(ProviderError):
    pass


class RemoteError(ProviderError):
    def __init__(self, status, body):
        super().__init__(f"remote error {status}: {body}")
        self.status = status
        self.body = body


class RateLimited(RemoteError):
    pass


class UnsupportedCapability(ProviderError):
    pass


class EmptyText(ValidationError):
    pass


class InvalidK(ValidationError):
    pass


# stego-codec
class ColorNameLeak(RuntimeFailure):
    pass


class PreconditionError(ValidationError):
    pass


# complexity-metrics
class DistributionMismatch(ValidationError):
    pass


class DegenerateDenominator(ValidationError):
    pass


class ModelMismatch(ValidationError):
    pass


class InvalidBound(ValidationError):
    pass


# channel-analysis
class LengthMismatch(ValidationError):
    pass


class InvalidF(ValidationError):
    pass


class EmptySamples(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


class CompressorMismatch(ValidationError):
    pass


# harness
class ConfigError(ValidationError):
    pass


class StageFailure(RuntimeFailure):
    def __init__(self, stage, entry_id, cause):
        super().__init__(f"stage {stage!r} failed on entry {entry_id!r}: {cause}")
        self.stage = stage
        self.entry_id = entry_id
        self.cause = cause
