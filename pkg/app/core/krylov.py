"""Krylov tridiagonalization of (non-)Hermitian generators.

Layout shared by every tridiagonal result: ``a`` on the diagonal, ``b`` on the
super-diagonal, ``c`` (real, non-negative) on the sub-diagonal, so that

    L_o p_j = c_{j+1} p_{j+1} + a_j p_j + b_j p_{j-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
import time
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import (
    BreakdownError,
    DomainError,
    PropertyViolationError,
    ReorthogonalizationError,
    ResourceGuardError,
)
from .liouville import SuperOperator, SuperVector
from .spin_algebra import SpinOperator
from .storage import write_csv

logger = logging.getLogger(__name__)

BREAKDOWN = "breakdown"
MAX_STEPS = "max_steps"
DIMENSION_BOUND = "dimension_bound"

DEFAULT_BREAKDOWN_TOL = 1e-8
REORTH_FAILURE_LIMIT = 1e-6
DEFAULT_MEMORY_CAP_BYTES = 8 * 1024**3
SEED_NORM_TOLERANCE = 1e-10
PHASE_SIGN_TOLERANCE = 1e-6
_COMPLEX_BYTES = np.dtype(complex).itemsize


@dataclass(slots=True)
class TridiagonalData:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    termination_reason: str
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=complex)
        self.b = np.asarray(self.b, dtype=complex)
        self.c = np.asarray(self.c, dtype=float)
        if self.a.size < 1:
            raise DomainError("a tridiagonal result needs at least one diagonal entry")
        if self.b.size != self.a.size - 1 or self.c.size != self.a.size - 1:
            raise DomainError(
                f"inconsistent lengths: a={self.a.size}, b={self.b.size}, c={self.c.size}"
            )
        if np.any(self.c < 0):
            raise DomainError("sub-diagonal entries must be non-negative")

    @property
    def krylov_dim(self) -> int:
        return int(self.a.size)

    def rows(self) -> list[tuple[Any, ...]]:
        rows: list[tuple[Any, ...]] = []
        for n in range(self.krylov_dim):
            a_n = self.a[n]
            if n == 0:
                rows.append((n, float(a_n.real), float(a_n.imag), "", "", ""))
                continue
            b_n = self.b[n - 1]
            rows.append((n, float(a_n.real), float(a_n.imag), float(b_n.real), float(b_n.imag), float(self.c[n - 1])))
        return rows


@dataclass(slots=True)
class EffectiveTridiagonal:
    abs_a: np.ndarray
    abs_b: np.ndarray
    phase_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # b_n / |b_n|, either +1 or -1; empty means all +1
    b_signs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        if self.b_signs.size == 0:
            self.b_signs = np.ones(self.abs_b.size)
        elif self.b_signs.size != self.abs_b.size:
            raise DomainError(f"{self.b_signs.size} coupling signs for {self.abs_b.size} couplings")

    @property
    def krylov_dim(self) -> int:
        return int(self.abs_a.size)


@dataclass(slots=True)
class KrylovBases:
    P: np.ndarray
    Q: np.ndarray
    n_sites: int
    basis_tag: str = "full"
    stored: bool = True

    @property
    def size(self) -> int:
        return int(self.P.shape[0])

    def p(self, n: int) -> SuperVector:
        return SuperVector(self.P[n].copy(), self.n_sites, self.basis_tag)

    def q(self, n: int) -> SuperVector:
        return SuperVector(self.Q[n].copy(), self.n_sites, self.basis_tag)


@dataclass(slots=True)
class HessenbergData:
    h: np.ndarray
    basis: np.ndarray
    termination_reason: str

    @property
    def krylov_dim(self) -> int:
        return int(self.h.shape[0])

    @property
    def subdiagonal(self) -> np.ndarray:
        return np.abs(np.diag(self.h, -1))


def krylov_dimension_bound(dimension: int) -> int:
    if dimension < 1:
        raise DomainError(f"Hilbert dimension must be positive, got {dimension}")
    return dimension * dimension - dimension + 1


def basis_storage_bytes(steps: int, vector_dimension: int, copies: int = 2) -> int:
    return copies * steps * vector_dimension * _COMPLEX_BYTES


def _check_memory(steps: int, vector_dimension: int, copies: int, cap_bytes: float) -> None:
    estimate = basis_storage_bytes(steps, vector_dimension, copies)
    if estimate > cap_bytes:
        raise ResourceGuardError("Krylov basis storage", float(estimate), float(cap_bytes))


def _check_seed(seed: np.ndarray) -> None:
    norm = float(np.linalg.norm(seed))
    if abs(norm - 1.0) > SEED_NORM_TOLERANCE:
        raise DomainError(f"seed must have unit norm, got {norm:.12g}")


def _step_limit(generator: SuperOperator, max_steps: int | None) -> tuple[int, str]:
    # D^2 - D + 1 holds for commutator generators only; dissipators can fill all of D^2
    if generator.hermitian_flag:
        bound = krylov_dimension_bound(generator.operator_dimension)
    else:
        bound = generator.dimension
    if max_steps is None or max_steps >= bound:
        return bound, DIMENSION_BOUND
    if max_steps < 1:
        raise DomainError(f"max_steps must be positive, got {max_steps}")
    return max_steps, MAX_STEPS


def _project_out(vector: np.ndarray, coefficient_rows: np.ndarray, span_rows: np.ndarray) -> np.ndarray:
    # vector - sum_i <<coefficient_rows[i] | vector>> span_rows[i]
    if coefficient_rows.shape[0] == 0:
        return vector
    overlaps = coefficient_rows.conj() @ vector
    return vector - overlaps @ span_rows


def lanczos(
    generator: SuperOperator,
    seed: SuperVector,
    max_steps: int | None = None,
    breakdown_tol: float = DEFAULT_BREAKDOWN_TOL,
    reorth: str = "full",
    store_bases: bool = False,
    memory_cap_bytes: float = DEFAULT_MEMORY_CAP_BYTES,
    log_every: int = 500,
) -> tuple[TridiagonalData, KrylovBases | None]:
    """Hermitian Lanczos; ``b`` and ``c`` both hold the real beta_n."""
    scale = max(1.0, float(np.max(np.abs(generator.matrix.data)))) if generator.matrix.nnz else 1.0
    if not generator.hermitian_flag and generator.hermiticity_error() > 1e-12 * scale:
        raise DomainError("generator is not Hermitian; use bilanczos for dissipative generators")
    if reorth not in ("full", "none"):
        raise DomainError(f"unknown reorthogonalization mode {reorth!r}")
    _check_seed(seed.amplitudes)
    limit, limit_reason = _step_limit(generator, max_steps)
    keep = reorth == "full" or store_bases
    if keep:
        _check_memory(limit, seed.dimension, 1, memory_cap_bytes)

    started = time.perf_counter()
    basis = np.zeros((limit if keep else 2, seed.dimension), dtype=complex)
    current = seed.amplitudes.astype(complex, copy=True)
    previous = np.zeros_like(current)
    basis[0] = current

    image = generator.matvec(current)
    alphas = [float(np.vdot(current, image).real)]
    betas: list[float] = []
    residual = image - alphas[0] * current
    reason = limit_reason
    largest = 0.0

    step = 1
    while step < limit:
        beta = float(np.linalg.norm(residual))
        if beta <= breakdown_tol * max(1.0, largest):
            reason = BREAKDOWN
            break
        largest = max(largest, beta)
        following = residual / beta
        if reorth == "full":
            for _ in range(2):
                following = _project_out(following, basis[:step], basis[:step])
            following /= np.linalg.norm(following)
        if keep:
            basis[step] = following
        previous, current = current, following

        image = generator.matvec(current)
        alpha = float(np.vdot(current, image).real)
        residual = image - alpha * current - beta * previous
        alphas.append(alpha)
        betas.append(beta)
        step += 1
        if log_every and step % log_every == 0:
            logger.debug("lanczos step %d, beta=%.6g", step, beta)

    elapsed = time.perf_counter() - started
    logger.info("lanczos finished: K=%d, reason=%s, %.2fs", len(alphas), reason, elapsed)
    result = TridiagonalData(
        a=np.array(alphas, dtype=complex),
        b=np.array(betas, dtype=complex),
        c=np.array(betas, dtype=float),
        termination_reason=reason,
        diagnostics={"elapsed_seconds": elapsed, "algorithm": "lanczos", "reorth": reorth},
    )
    bases = None
    if store_bases:
        kept = basis[: result.krylov_dim].copy()
        bases = KrylovBases(P=kept, Q=kept, n_sites=generator.n_sites, basis_tag=generator.basis_tag)
    return result, bases


def bilanczos(
    generator: SuperOperator,
    seed: SuperVector,
    max_steps: int | None = None,
    breakdown_tol: float = DEFAULT_BREAKDOWN_TOL,
    reorth: str = "full",
    store_bases: bool = True,
    memory_cap_bytes: float = DEFAULT_MEMORY_CAP_BYTES,
    log_every: int = 500,
) -> tuple[TridiagonalData, KrylovBases | None]:
    """Two-sided Lanczos with p_0 = q_0 = seed and <<q_m|p_n>> = delta_mn."""
    if reorth not in ("full", "none"):
        raise DomainError(f"unknown reorthogonalization mode {reorth!r}")
    _check_seed(seed.amplitudes)
    limit, limit_reason = _step_limit(generator, max_steps)
    keep = reorth == "full" or store_bases
    if keep:
        _check_memory(limit, seed.dimension, 2, memory_cap_bytes)

    started = time.perf_counter()
    rows = limit if keep else 2
    P = np.zeros((rows, seed.dimension), dtype=complex)
    Q = np.zeros((rows, seed.dimension), dtype=complex)
    P[0] = seed.amplitudes
    Q[0] = seed.amplitudes

    r_image = generator.matvec(P[0])
    s_image = generator.rmatvec(Q[0])
    zero_scale = breakdown_tol * max(1.0, float(np.linalg.norm(seed.amplitudes)))
    if np.linalg.norm(r_image) <= zero_scale and np.linalg.norm(s_image) <= zero_scale:
        raise BreakdownError("the generator annihilates the seed at step 0")

    a_values = [complex(np.vdot(Q[0], r_image))]
    b_values: list[complex] = []
    c_values: list[float] = []
    r = r_image - a_values[0] * P[0]
    s = s_image - np.conj(a_values[0]) * Q[0]

    reason = limit_reason
    diagnostics: dict[str, Any] = {"algorithm": "bilanczos", "reorth": reorth, "serious_breakdown": False}
    largest = 0.0
    worst_biorth = 0.0
    p_prev, q_prev = P[0].copy(), Q[0].copy()

    step = 1
    while step < limit:
        omega = complex(np.vdot(r, s))
        c_j = math.sqrt(abs(omega))
        threshold = breakdown_tol * max(1.0, largest)
        if c_j <= threshold:
            r_norm, s_norm = float(np.linalg.norm(r)), float(np.linalg.norm(s))
            if min(r_norm, s_norm) > threshold:
                diagnostics["serious_breakdown"] = True
                diagnostics["breakdown_residual_norms"] = [r_norm, s_norm]
                logger.warning(
                    "serious breakdown at step %d: |omega|=%.3e with |r|=%.3e, |s|=%.3e",
                    step,
                    abs(omega),
                    r_norm,
                    s_norm,
                )
            reason = BREAKDOWN
            break
        largest = max(largest, c_j)
        b_j = np.conj(omega) / c_j

        p_j = r / c_j
        q_j = s / np.conj(b_j)
        if reorth == "full":
            for _ in range(2):
                p_j = _project_out(p_j, Q[:step], P[:step])
                q_j = _project_out(q_j, P[:step], Q[:step])
            residual = max(
                float(np.max(np.abs(Q[:step].conj() @ p_j))),
                float(np.max(np.abs(P[:step].conj() @ q_j))),
                abs(complex(np.vdot(q_j, p_j)) - 1.0),
            )
            worst_biorth = max(worst_biorth, residual)
            if residual > REORTH_FAILURE_LIMIT:
                raise ReorthogonalizationError(step, residual, REORTH_FAILURE_LIMIT)
        if keep:
            P[step] = p_j
            Q[step] = q_j

        r_image = generator.matvec(p_j)
        s_image = generator.rmatvec(q_j)
        a_j = complex(np.vdot(q_j, r_image))
        r = r_image - a_j * p_j - b_j * p_prev
        s = s_image - np.conj(a_j) * q_j - c_j * q_prev
        p_prev, q_prev = p_j, q_j

        a_values.append(a_j)
        b_values.append(complex(b_j))
        c_values.append(c_j)
        step += 1
        if log_every and step % log_every == 0:
            logger.debug("bilanczos step %d, c=%.6g, |a|=%.6g", step, c_j, abs(a_j))

    elapsed = time.perf_counter() - started
    diagnostics["elapsed_seconds"] = elapsed
    diagnostics["biorthonormality_step_residual"] = worst_biorth
    closed_bound = krylov_dimension_bound(generator.operator_dimension)
    diagnostics["exceeds_closed_bound"] = len(a_values) > closed_bound
    if diagnostics["exceeds_closed_bound"]:
        logger.info("Krylov dimension %d exceeds the closed-system bound %d", len(a_values), closed_bound)
    logger.info("bilanczos finished: K=%d, reason=%s, %.2fs", len(a_values), reason, elapsed)
    result = TridiagonalData(
        a=np.array(a_values, dtype=complex),
        b=np.array(b_values, dtype=complex),
        c=np.array(c_values, dtype=float),
        termination_reason=reason,
        diagnostics=diagnostics,
    )
    bases = None
    if store_bases:
        size = result.krylov_dim
        bases = KrylovBases(P=P[:size].copy(), Q=Q[:size].copy(), n_sites=generator.n_sites, basis_tag=generator.basis_tag)
    return result, bases


def arnoldi(
    generator: SuperOperator,
    seed: SuperVector,
    max_steps: int | None = None,
    breakdown_tol: float = 1e-10,
    memory_cap_bytes: float = DEFAULT_MEMORY_CAP_BYTES,
) -> HessenbergData:
    _check_seed(seed.amplitudes)
    limit, limit_reason = _step_limit(generator, max_steps)
    _check_memory(limit, seed.dimension, 1, memory_cap_bytes)

    basis = np.zeros((limit, seed.dimension), dtype=complex)
    hessenberg = np.zeros((limit + 1, limit), dtype=complex)
    basis[0] = seed.amplitudes
    reason = limit_reason
    size = limit
    largest = 0.0
    for column in range(limit):
        vector = generator.matvec(basis[column])
        for _ in range(2):
            overlaps = basis[: column + 1].conj() @ vector
            hessenberg[: column + 1, column] += overlaps
            vector = vector - overlaps @ basis[: column + 1]
        norm = float(np.linalg.norm(vector))
        if column + 1 == limit:
            break
        if norm <= breakdown_tol * max(1.0, largest):
            reason = BREAKDOWN
            size = column + 1
            break
        largest = max(largest, norm)
        hessenberg[column + 1, column] = norm
        basis[column + 1] = vector / norm
    return HessenbergData(h=hessenberg[:size, :size].copy(), basis=basis[:size].copy(), termination_reason=reason)


def bilanczos_state(
    hamiltonian: SpinOperator | np.ndarray | sp.spmatrix,
    seed_state: np.ndarray,
    max_steps: int | None = None,
    tol: float = 1e-10,
    reorth: bool = True,
) -> TridiagonalData:
    """Bi-Lanczos for a (non-Hermitian) Hamiltonian acting on states.

    Right vectors q_j and left vectors p_j (stored as kets, <p_j| = p_j^dag) obey
    H q_j = b_{j+1} q_{j+1} + a_j q_j + c_j q_{j-1} with b_{j+1} = ||Q_{j+1}||.
    The real norms land on the sub-diagonal of the returned data and the complex
    overlaps <P_{j+1}|Q_{j+1}> / b_{j+1} on the super-diagonal.
    """
    matrix = hamiltonian.matrix if isinstance(hamiltonian, SpinOperator) else sp.csr_matrix(hamiltonian)
    matrix = sp.csr_matrix(matrix, dtype=complex)
    adjoint_matrix = matrix.conj().T.tocsr()
    seed = np.asarray(seed_state, dtype=complex)
    _check_seed(seed)
    dimension = seed.size
    if matrix.shape != (dimension, dimension):
        raise DomainError(f"Hamiltonian shape {matrix.shape} does not match state length {dimension}")
    limit = dimension if max_steps is None else min(max_steps, dimension)

    rights = [seed.copy()]
    lefts = [seed.copy()]
    a_values = [complex(np.vdot(lefts[0], matrix @ rights[0]))]
    sub: list[float] = []
    sup: list[complex] = []
    reason = DIMENSION_BOUND if limit == dimension else MAX_STEPS
    diagnostics: dict[str, Any] = {"algorithm": "bilanczos_state", "serious_breakdown": False}

    while len(rights) < limit:
        j = len(rights) - 1
        a_j = a_values[j]
        right_next = matrix @ rights[j] - a_j * rights[j]
        left_next = adjoint_matrix @ lefts[j] - np.conj(a_j) * lefts[j]
        if j > 0:
            right_next = right_next - sup[j - 1] * rights[j - 1]
            left_next = left_next - np.conj(sub[j - 1]) * lefts[j - 1]
        if reorth:
            left_rows, right_rows = np.array(lefts), np.array(rights)
            right_next = _project_out(right_next, left_rows, right_rows)
            left_next = _project_out(left_next, right_rows, left_rows)

        b_next = float(np.linalg.norm(right_next))
        if b_next <= tol:
            reason = BREAKDOWN
            break
        overlap = complex(np.vdot(left_next, right_next))
        if abs(overlap) <= tol * b_next * max(1.0, float(np.linalg.norm(left_next))):
            diagnostics["serious_breakdown"] = True
            logger.warning("serious breakdown in state bi-Lanczos at step %d", j + 1)
            reason = BREAKDOWN
            break
        c_next = overlap / b_next
        rights.append(right_next / b_next)
        lefts.append(left_next / np.conj(c_next))
        sub.append(b_next)
        sup.append(c_next)
        a_values.append(complex(np.vdot(lefts[-1], matrix @ rights[-1])))

    return TridiagonalData(
        a=np.array(a_values, dtype=complex),
        b=np.array(sup, dtype=complex),
        c=np.array(sub, dtype=float),
        termination_reason=reason,
        diagnostics=diagnostics,
    )


def effective_tridiagonal(data: TridiagonalData, phase_tolerance: float = 1e-8) -> EffectiveTridiagonal:
    """Real data for the Krylov wavefunction ODE: signed Im(a_n), |b_n| and the sign of b_n / c_n."""
    c = data.c
    abs_b = np.abs(data.b)
    if c.size:
        mismatch = np.abs(abs_b - c) / np.maximum(c, np.finfo(float).tiny)
        worst = int(np.argmax(mismatch))
        if mismatch[worst] > phase_tolerance:
            raise PropertyViolationError("|b_n| = |c_n|", worst + 1, float(mismatch[worst]), phase_tolerance)

    scale = max(float(np.max(np.abs(data.a))), float(np.max(c)) if c.size else 0.0, np.finfo(float).tiny)
    real_parts = np.abs(data.a.real)
    worst = int(np.argmax(real_parts))
    if real_parts[worst] > phase_tolerance * scale:
        raise PropertyViolationError("Re(a_n) = 0", worst, float(real_parts[worst] / scale), phase_tolerance)

    phases = np.angle(data.b / np.where(c > 0, c, 1.0)) if c.size else np.zeros(0)
    # b_n = -c_n happens when <<r|s>> < 0; any other phase has no real reduced form
    signs = np.where(np.abs(phases) > np.pi / 2, -1.0, 1.0)
    off_axis = np.abs(np.sin(phases))
    if off_axis.size:
        worst = int(np.argmax(off_axis))
        sign_tolerance = max(phase_tolerance, PHASE_SIGN_TOLERANCE)
        if off_axis[worst] > sign_tolerance:
            raise PropertyViolationError("b_n / c_n = +1 or -1", worst + 1, float(phases[worst]), sign_tolerance)
    flipped = np.flatnonzero(signs < 0)
    if flipped.size:
        logger.info("%d couplings with b_n = -c_n, first at n=%d", flipped.size, int(flipped[0]) + 1)
    return EffectiveTridiagonal(abs_a=data.a.imag.copy(), abs_b=abs_b, phase_residuals=phases, b_signs=signs)


def tridiagonal_matrix(data: TridiagonalData) -> sp.csr_matrix:
    size = data.krylov_dim
    if size == 1:
        return sp.csr_matrix(data.a.reshape(1, 1))
    return sp.diags([data.c.astype(complex), data.a, data.b], [-1, 0, 1], shape=(size, size), format="csr")


def tridiagonal_properties(data: TridiagonalData) -> dict[str, float]:
    """Measured values of the observed matrix-element properties of the bi-Lanczos form."""
    c = data.c
    max_a = float(np.max(np.abs(data.a)))
    bc = float(np.max(np.abs(np.abs(data.b) - c) / np.maximum(c, np.finfo(float).tiny))) if c.size else 0.0
    return {
        "max_imag_c": float(np.max(np.abs(np.imag(c)))) if c.size else 0.0,
        "max_relative_bc_mismatch": bc,
        "max_relative_real_a": float(np.max(np.abs(data.a.real)) / max_a) if max_a > 0 else 0.0,
        "max_abs_a": max_a,
    }


def biorthonormality_residual(bases: KrylovBases) -> float:
    overlaps = bases.Q.conj() @ bases.P.T
    return float(np.max(np.abs(overlaps - np.eye(bases.size))))


def reconstruction_residual(generator: SuperOperator, data: TridiagonalData, bases: KrylovBases) -> float:
    """max |Q^dag L_o P - T| over the stored Krylov space."""
    projected = bases.Q.conj() @ (generator.matrix @ bases.P.T)
    return float(np.max(np.abs(projected - tridiagonal_matrix(data).toarray())))


def write_coefficients(data: TridiagonalData, path: Path, metadata: Mapping[str, Any] | None = None) -> None:
    header_metadata = dict(metadata or {})
    header_metadata["termination_reason"] = data.termination_reason
    header_metadata["krylov_dim"] = data.krylov_dim
    write_csv(path, ["n", "re_a", "im_a", "re_b", "im_b", "c"], data.rows(), header_metadata)
