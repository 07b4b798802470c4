"""Exception hierarchy shared across ltnet."""


class LtnetError(Exception):
    """Base class for every error raised by ltnet."""


class InputError(LtnetError):
    """Malformed or unreadable input (file, JSON document, CLI vector)."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class DimensionError(LtnetError):
    pass


class DaleViolation(LtnetError):
    """A weight column mixes signs while Dale compliance was required."""

    def __init__(self, columns: list[int]):
        self.columns = columns
        super().__init__(f"Dale's law violated on column(s) {', '.join(str(c) for c in columns)}")


class HypothesisError(LtnetError):
    """A precondition of the criterion being checked does not hold."""


class NotInhibitoryError(HypothesisError):
    pass


class CapExceededError(LtnetError):
    def __init__(self, what: str, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"{what}: dimension {size} exceeds cap {cap}")


class EigenSolverError(LtnetError):
    pass


class PerronError(LtnetError):
    pass


class SimulationError(LtnetError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(f"{message} (step {step})" if step is not None else message)


class EmptyWindowError(LtnetError):
    pass


class FitError(LtnetError):
    pass
