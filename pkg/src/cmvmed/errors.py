class CmvMedError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CmvMedError, ValueError):
    """Malformed or inconsistent user input."""


class UsageError(CmvMedError, RuntimeError):
    """An API was called in a state that does not allow it."""


class NumericalError(CmvMedError, ArithmeticError):
    """A factorization or solve broke down."""


class TrainingError(CmvMedError, RuntimeError):
    """Training failed for a specific view and iteration."""

    def __init__(self, message, view=None, iteration=None):
        super().__init__(message)
        self.view = view
        self.iteration = iteration
