"""Exception hierarchy shared by all solvers."""


class AtomGuideError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ContractError(AtomGuideError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class ConfigError(ContractError):
    """Invalid run configuration; ``key`` is the dotted path of the culprit."""

    exit_code = 2

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SetupError(AtomGuideError):
    """Grid or scenario cannot support the requested computation."""

    exit_code = 4

    def __init__(self, message, required_points=None):
        self.required_points = required_points
        if required_points is not None:
            message = f"{message} (need about {required_points} points)"
        super().__init__(message)


class NoBoundStatesError(SetupError):
    pass


class NumericFault(AtomGuideError):
    """Non-finite values appeared in a field."""

    exit_code = 3

    def __init__(self, message, step=None, last_valid=None):
        self.step = step
        self.last_valid = last_valid
        if step is not None:
            message = f"{message} at step {step}"
        super().__init__(message)


class GeometryError(AtomGuideError):
    """Guide geometry does not allow a vertical/oblique partition."""

    exit_code = 4


class ConvergenceError(AtomGuideError):
    exit_code = 4

    def __init__(self, message, trace=None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)
