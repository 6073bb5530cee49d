"""Exception hierarchy shared by all modules."""


class InCVaRError(Exception):
    """Base class for errors raised by this package."""


class DomainError(InCVaRError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(InCVaRError, ValueError):
    """Inputs are individually valid but inconsistent with each other
    (e.g. a parameter vector whose length does not match its model)."""


class UnsupportedCombinationError(InCVaRError, NotImplementedError):
    """The requested (model family, loss) pair or feature is not supported."""


class NumericalFailure(InCVaRError, ArithmeticError):
    """A non-finite value was produced while solving.

    The offending parameter vector is kept on ``theta``.
    """

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class ConfigError(InCVaRError, ValueError):
    """A configuration file or object failed validation.

    ``path`` holds the location of the offending field, e.g. ``solver.restarts``.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
