"""Exception types shared across the package.

Every error raised on a contract violation derives from YoasError so callers
can catch the whole family at the CLI boundary.
"""


class YoasError(Exception):
    """Base class for all package-specific errors."""


class NotFound(YoasError):
    """A channel, electrode or artifact was looked up but does not exist."""


class ConfigError(YoasError):
    """A configuration value violates its constraints."""


class ParseError(YoasError):
    """A file could not be parsed; carries the offending location."""

    def __init__(self, message, *, offset=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte offset {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class SpecError(YoasError):
    """A corpus or run description is invalid."""


class InvalidWindow(YoasError):
    """Segmentation window is out of range for the recording."""


class ShapeError(YoasError):
    """Operands have incompatible shapes."""


class EmptySignal(YoasError):
    """An operation needs finite samples but none are available."""


class ContractError(YoasError):
    """An API precondition was violated (e.g. non-scalar loss)."""


class TrainingDiverged(YoasError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch


class UndefinedCorrelation(YoasError):
    """Pearson correlation is undefined (constant input)."""


class InvalidTriple(YoasError):
    """Hypothesis-2 channels are not pairwise distinct."""


class PlanError(YoasError):
    """A synthesis plan cannot be executed (cycle, empty candidates...)."""


class ModelMissing(YoasError):
    """A plan edge has no registered generation model."""


class StageOrderError(YoasError):
    """A pipeline stage ran before its inputs were produced."""

    def __init__(self, message, missing=None):
        if missing is not None:
            message = f"{message}: missing {missing}"
        super().__init__(message)
        self.missing = missing


class InvalidInput(YoasError):
    """Generic invalid argument for an evaluation metric."""


class InvalidBand(YoasError):
    """A frequency band is empty or outside the Nyquist range."""


class InvalidLabels(YoasError):
    """Classification labels do not form a valid multi-class problem."""
