"""Exception hierarchy shared by all modules."""


class MaskScError(Exception):
    """Base class for package errors."""


class InvalidInputError(MaskScError, ValueError):
    """Argument violates an operation's precondition."""


class ConfigError(InvalidInputError):
    """Experiment configuration failed validation.

    ``keys`` lists the offending configuration keys.
    """

    def __init__(self, message, keys=()):
        self.keys = list(keys)
        if self.keys:
            message = f"{message} (keys: {', '.join(self.keys)})"
        super().__init__(message)


class FormatError(MaskScError, ValueError):
    """On-disk data does not match the expected file format."""


class NumericError(MaskScError, ArithmeticError):
    """A numerical routine failed (non-convergence, ill-conditioning)."""


class DivergenceError(NumericError):
    """An iterative solver produced non-finite iterates."""

    def __init__(self, message, iteration=None, mu=None):
        self.iteration = iteration
        self.mu = mu
        super().__init__(message)
