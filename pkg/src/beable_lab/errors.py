"""Exception types shared across the package."""


class BeableLabError(Exception):
    pass


class DimensionError(BeableLabError, ValueError):
    """Operand dimensions do not match."""


class NumericalFailure(BeableLabError, RuntimeError):
    """A numerical routine did not reach its stated accuracy."""


class ConditionViolation(BeableLabError, ValueError):
    """A current fails an admissibility condition needed to build a transition matrix."""

    def __init__(self, message: str, config: int | None = None, excess: float | None = None):
        super().__init__(message)
        self.config = config
        self.excess = excess
