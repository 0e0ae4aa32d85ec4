"""Exception types shared across the package."""


class CompatibilityError(ValueError):
    """Profile ODE right-hand side violates the solvability condition.

    Carries the defect value ``defect`` = integral of rhs against the kernel.
    """

    def __init__(self, defect, message=None):
        self.defect = defect
        super().__init__(message or f"compatibility defect {defect:.3e} exceeds tolerance")


class DecayError(ValueError):
    """Profile ODE right-hand side does not decay at the window edges."""


class ChartInjectivityError(ValueError):
    """Tube half-width exceeds the focal distance of the interface."""


class GeometryError(ValueError):
    """Degenerate or self-intersecting interface geometry."""


class NoInterfaceError(ValueError):
    """Level-set extraction found no sign change."""


class TopologyError(RuntimeError):
    """Front tracking detected a self-intersection."""


class BlowupError(RuntimeError):
    """Time integration produced NaN/overflow; carries the last stable state."""

    def __init__(self, message, last_state=None, trace=None):
        self.last_state = last_state
        self.trace = trace
        super().__init__(message)


class ConfigurationError(ValueError):
    """Run parameters violate a scale-separation or resolution requirement."""


class NumericalError(RuntimeError):
    """Iterative solver failed to converge; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
