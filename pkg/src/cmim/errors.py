"""Exception types shared across the package."""


class CmimError(Exception):
    """Base class for package errors."""


class DomainError(CmimError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ContractError(CmimError, ValueError):
    """A precondition on shapes or sizes was violated."""


class DivergenceError(CmimError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnsupportedOperation(CmimError):
    """The requested operation does not apply to this model variant."""


class DataError(CmimError):
    """Dataset or file could not be read."""


class ConfigError(CmimError, ValueError):
    """Run configuration is invalid."""
