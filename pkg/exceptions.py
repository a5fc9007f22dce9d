class C3Error(Exception):
    """Base class for all errors raised by the toolkit."""

    pass


class DimensionError(C3Error):
    """Raised when spatial dims are not powers of two or do not match."""

    pass


class ShapeMismatchError(DimensionError):
    """Raised when a latent or weight tensor does not match the model config."""

    pass


class SymmetryViolationError(C3Error):
    """Raised when an inverse transform leaves a non-negligible imaginary part."""

    pass


class DomainError(C3Error):
    """Raised when a scalar parameter lies outside its valid range."""

    pass


class TensorFormatError(C3Error):
    """Raised when a tensor file is malformed. Carries the failing byte offset."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(message)
        self.offset = offset


class ScorerUnavailableError(C3Error):
    """Raised when the remote scorer cannot be reached after all retries."""

    pass


class ScorerProtocolError(C3Error):
    """Raised when the remote scorer answers with a malformed body."""

    pass


class ConfigError(C3Error):
    """Raised for invalid experiment configuration or overrides."""

    pass


class ExperimentIOError(C3Error):
    """Raised when an experiment artifact cannot be read or written."""

    pass


class SelectionMissingError(ExperimentIOError):
    """Raised when combine runs before select has written its files."""

    pass


class InvariantViolationError(C3Error):
    """Raised when a checked runtime invariant fails."""

    pass
