"""Exception types shared across the package."""


class PromptFuseError(Exception):
    """Base class for every error this package raises on purpose."""


class DegenerateInput(PromptFuseError):
    """A zero-norm vector was passed where a direction is required."""


class ShapeError(PromptFuseError):
    """Operands are empty or have inconsistent dimensions."""


class NumericError(PromptFuseError):
    """A non-finite value appeared where finite math is required."""


class RangeError(PromptFuseError):
    """A scalar argument lies outside its documented range."""


class ConfigError(PromptFuseError):
    """Invalid configuration, class universe, or run request."""


class TemplateError(PromptFuseError):
    """A prompt template is malformed."""


class DataError(PromptFuseError):
    """A dataset does not satisfy the sampling contract."""


class IoError(PromptFuseError):
    """Reading or writing an archive or report file failed."""
