"""Exception hierarchy shared across the package."""


class TDNError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(TDNError, ValueError):
    pass


class NumericError(TDNError, ArithmeticError):
    pass


class TrainingError(NumericError):
    """Loss or parameters went non-finite during optimisation."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ContractError(TDNError, RuntimeError):
    """A documented invariant was violated (e.g. a frozen model changed)."""


class ModelFormatError(TDNError, ValueError):
    pass


class VersionError(ModelFormatError):
    pass


class TruncatedError(ModelFormatError):
    pass


class ConfigError(TDNError, ValueError):
    pass


class DataError(TDNError, ValueError):
    pass


class SimulationError(NumericError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
