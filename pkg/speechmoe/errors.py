"""Exception hierarchy shared by every module.

`ValidationError` covers anything the caller can fix (inputs, files, configs); the CLI maps it to
exit code 1. Everything else derived from `SpeechMoEError` is a runtime failure (exit code 2).
"""


class SpeechMoEError(Exception):
    """Root of all library errors."""


class ValidationError(SpeechMoEError, ValueError):
    """Invalid input, configuration or file content."""


class ShapeError(ValidationError):
    """Operand shapes are inconsistent with an operation."""


class ManifestError(ValidationError):
    """A dataset manifest row is malformed."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class ContainerError(ValidationError):
    """A tensor container is malformed or does not match the expected tensors."""


class AudioError(ValidationError):
    """An audio file cannot be decoded or is too short."""


class NonFiniteError(SpeechMoEError, ArithmeticError):
    """NaN or Inf appeared where finite values are required."""


class GradcheckError(SpeechMoEError, AssertionError):
    """Analytic and numeric gradients disagree beyond tolerance."""

    def __init__(self, message: str, failures: dict[str, float] | None = None):
        self.failures = failures or {}
        super().__init__(message)
