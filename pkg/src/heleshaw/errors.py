"""Exception hierarchy shared by all modules."""


class HeleShawError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HeleShawError, ValueError):
    """A model or experiment description is malformed or inconsistent."""


class InvalidModel(ConfigError):
    """A field model violates the positivity/boundedness/dichotomy rules."""


class NumericalError(HeleShawError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target."""


class TolNotReached(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class StepCollapse(NumericalError):
    pass


class StalledFront(NumericalError):
    pass


class OutOfTable(NumericalError):
    """A velocity lookup fell outside the tabulated (x, q) range."""

    def __init__(self, message, x=None, q=None):
        super().__init__(message)
        self.x = x
        self.q = q


class OutOfDomain(HeleShawError, ValueError):
    pass


class EmptySupport(HeleShawError, ValueError):
    pass


class ExperimentFailed(HeleShawError):
    """An experiment ran to completion but one of its checks failed."""
