"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class ValidationError(ValueError):
    """A pattern, response or code matrix holds illegal values."""


class ConfigError(ValueError):
    """A configuration is inconsistent or incomplete."""


class NumericalError(ArithmeticError):
    """A numerical routine broke down (underflow, non-finite values)."""


class FormatError(ValueError):
    """A binary file has the wrong magic, version or length."""


class ModelStateError(RuntimeError):
    """A model was used before it was initialized."""
