"""Exception types shared across the package."""


class OptctrlError(Exception):
    """Base class for package errors."""


class DimensionError(OptctrlError, ValueError):
    """Shapes or grids do not line up."""


class DomainError(OptctrlError, ValueError):
    """An argument is outside its mathematical domain."""


class DivergenceError(OptctrlError, RuntimeError):
    """A forward solve produced a non-finite state.

    Attributes:
        t: time at which the first non-finite value appeared.
    """

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"state became non-finite at t={t:.6g}")


class StiffnessError(OptctrlError, RuntimeError):
    """Adaptive step control underflowed the minimum step size."""

    def __init__(self, t, h):
        self.t = t
        self.h = h
        super().__init__(f"step size underflow (h={h:.3g}) at t={t:.6g}; "
                         "problem too stiff for the explicit solver")


class AdjointInstabilityError(OptctrlError, RuntimeError):
    """A backward (adjoint) sweep blew up.

    Carries diagnostics: the time at which the costate became non-finite
    and the largest finite costate magnitude seen before the blow-up.
    """

    def __init__(self, t, max_abs_lambda, message=None):
        self.t = t
        self.max_abs_lambda = max_abs_lambda
        super().__init__(
            message
            or f"adjoint solve became non-finite at t={t:.6g} "
               f"(max |lambda| before failure: {max_abs_lambda:.3e})")
