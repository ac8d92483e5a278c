"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (bad layer sizes, schedule parameters, ...)."""


class DataFormatError(ValueError):
    """Malformed dataset file; carries the offending row when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class DivergenceError(RuntimeError):
    """An integration produced a non-finite state or an unusably small step.

    ``t`` is the time at which the failure was detected, ``last_valid_index``
    the index of the last output point that was still finite (when the failure
    happened inside a multi-point integration), and ``partial`` an optional
    trajectory of the points computed up to that index.
    """

    def __init__(self, message, t=None, last_valid_index=None, partial=None):
        super().__init__(message)
        self.t = t
        self.last_valid_index = last_valid_index
        self.partial = partial


class TrainingAbort(RuntimeError):
    """Training stopped early because too many optimizer steps were rejected."""

    def __init__(self, message, step_index=None, rejected=None):
        super().__init__(message)
        self.step_index = step_index
        self.rejected = rejected
