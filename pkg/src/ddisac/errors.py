"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a configuration object or file is invalid."""


class NumericalFailureError(RuntimeError):
    """Raised when an iterative solver produces non-finite values.

    Carries the 1-based iteration index at which the failure was detected
    (0 if the failure happened before the first iteration completed).
    """

    def __init__(self, message: str, iteration: int = 0):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
