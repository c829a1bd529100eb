"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2,
``ConvergenceError`` (and other numerical failures) -> 1.
"""


class ConfigError(ValueError):
    """Invalid parameters or configuration.

    ``key`` holds the offending configuration key path when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(RuntimeError):
    """A computation produced an unusable result (non-finite state, no signal)."""


class ConvergenceError(NumericalError):
    """An iteration hit its budget before meeting its tolerance."""

    def __init__(self, message, last_gap=float("nan"), iterations=0):
        super().__init__(message)
        self.last_gap = last_gap
        self.iterations = iterations
