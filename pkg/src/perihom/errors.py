"""Exception types shared across the package."""


class PerihomError(Exception):
    """Base class for all package-specific errors."""


class GridMismatch(PerihomError):
    """Operands live on different grids."""


class NonZeroMean(PerihomError):
    """A mean-zero field was required but the zero-frequency coefficient is too large."""


class NotElliptic(PerihomError):
    """Coefficient tensor violates the required ellipticity bounds."""


class SymmetryViolation(PerihomError):
    """Tensor components do not satisfy the required index symmetries."""


class BadParameters(PerihomError):
    """Coefficient family parameters are structurally invalid."""


class UnsupportedOrder(PerihomError):
    """Smoothing kernel order outside the implemented range."""


class NotSolenoidal(PerihomError):
    """Input matrix field has a non-negligible double divergence."""


class SolenoidalityViolation(PerihomError):
    """An assembled flux failed its divergence-free check (unconverged cell solve)."""


class NoConvergence(PerihomError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, iterations: int, residual: float, what: str = "solver"):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"{what} did not converge within {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class PropertyViolation(PerihomError):
    """A verified inequality or identity failed on concrete inputs."""

    def __init__(self, check_id: str, detail: str):
        self.check_id = check_id
        self.detail = detail
        super().__init__(f"property check '{check_id}' failed: {detail}")
