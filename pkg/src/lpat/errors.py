"""Exception types shared across the library."""


class LpatError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(LpatError):
    """Operands have incompatible shapes."""


class ConfigError(LpatError):
    """Invalid or inconsistent configuration."""


class ContractError(LpatError):
    """An operation was invoked outside its documented contract."""


class DegenerateRowError(LpatError):
    """A row-softmax input had no unmasked entry in some row."""


class InstabilityError(LpatError):
    """A numeric check hit a non-finite value."""

    def __init__(self, message: str, param_name: str | None = None,
                 index: int | None = None):
        super().__init__(message)
        self.param_name = param_name
        self.index = index
