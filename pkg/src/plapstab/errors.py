"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class UnsupportedConfiguration(ValueError):
    """A configuration the radial implementation deliberately refuses."""


class DerivativeUndefined(ArithmeticError):
    """A requested derivative does not exist at the given radius."""


class DegeneratePoint(ArithmeticError):
    """An operator is degenerate (zero gradient, r = 0) at the given radius."""


class NonPositiveField(ValueError):
    """A power map or substitution needs a strictly positive field."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach tolerance.

    Carries the best value and error estimate reached.
    """

    def __init__(self, msg, value=float("nan"), err_est=float("inf")):
        super().__init__(f"{msg} (value={value!r}, err_est={err_est!r})")
        self.value = value
        self.err_est = err_est


class ScheduleError(ValueError):
    """The extraction parameter schedule is undefined for this input."""


class ExtractionError(RuntimeError):
    """A stage of the extraction pipeline failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
