from __future__ import annotations


class KrylovLindbladError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(KrylovLindbladError, ValueError):
    pass


class ConfigError(KrylovLindbladError, ValueError):
    pass


class SymmetryViolationError(DomainError):
    def __init__(self, symmetry: str, norm: float, tolerance: float) -> None:
        super().__init__(
            f"operator does not commute with {symmetry}: commutator norm {norm:.3e} exceeds {tolerance:.1e}"
        )
        self.symmetry = symmetry
        self.norm = norm
        self.tolerance = tolerance


class ResourceGuardError(KrylovLindbladError, MemoryError):
    def __init__(self, what: str, estimate: float, cap: float, unit: str = "bytes") -> None:
        super().__init__(f"{what}: estimated {estimate:.3g} {unit} exceeds the cap of {cap:.3g} {unit}")
        self.what = what
        self.estimate = estimate
        self.cap = cap
        self.unit = unit


class BreakdownError(KrylovLindbladError):
    pass


class ReorthogonalizationError(KrylovLindbladError):
    def __init__(self, step: int, residual: float, limit: float) -> None:
        super().__init__(
            f"bi-orthonormality lost at step {step}: residual {residual:.3e} exceeds {limit:.1e}"
        )
        self.step = step
        self.residual = residual
        self.limit = limit


class PropertyViolationError(KrylovLindbladError):
    def __init__(self, prop: str, index: int, value: float, tolerance: float) -> None:
        super().__init__(f"{prop} violated at n={index}: {value:.3e} > {tolerance:.1e}")
        self.prop = prop
        self.index = index
        self.value = value
        self.tolerance = tolerance


class IntegrationError(KrylovLindbladError):
    def __init__(self, time: float, message: str) -> None:
        super().__init__(f"integrator failed at t={time:.6g}: {message}")
        self.time = time
