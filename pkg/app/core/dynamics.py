"""Krylov-chain wavefunction dynamics and complexity series."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp, trapezoid
from scipy.sparse.linalg import expm_multiply

from .errors import DomainError, IntegrationError, ResourceGuardError
from .krylov import EffectiveTridiagonal, KrylovBases, TridiagonalData, tridiagonal_matrix
from .liouville import SuperOperator, SuperVector
from .storage import write_csv

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_METHOD = "DOP853"
PROBABILITY_FLOOR = 1e-250
ORACLE_DIMENSION_LIMIT = 1024


@dataclass(slots=True)
class IntegratorControls:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    method: str = DEFAULT_METHOD
    probability_floor: float = PROBABILITY_FLOOR


@dataclass(slots=True)
class Trajectory:
    t_grid: np.ndarray
    phi: np.ndarray
    P: np.ndarray
    K_raw: np.ndarray
    K_o: np.ndarray
    unreliable_from: int | None = None
    source: str = "krylov"

    @property
    def krylov_dim(self) -> int:
        return int(self.phi.shape[1])

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(t), float(p), float(k), float(ko))
            for t, p, k, ko in zip(self.t_grid, self.P, self.K_raw, self.K_o)
        ]


def default_time_grid(t_max: float = 500.0, points: int = 2000, t_linear: float = 1.0) -> np.ndarray:
    """Linear on [0, t_linear], logarithmic on (t_linear, t_max]."""
    if points < 2 or t_max <= 0:
        raise DomainError(f"a time grid needs t_max > 0 and at least two points, got {t_max}, {points}")
    if t_max <= t_linear:
        return np.linspace(0.0, t_max, points)
    linear_points = max(2, points // 10)
    linear = np.linspace(0.0, t_linear, linear_points)
    logarithmic = np.geomspace(t_linear, t_max, points - linear_points + 1)[1:]
    return np.concatenate([linear, logarithmic])


def _check_grid(t_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("the time grid must be a non-empty 1-D sequence")
    if grid[0] != 0.0:
        raise DomainError(f"the time grid must start at 0, got {grid[0]}")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("the time grid must be strictly increasing")
    return grid


def _amplitudes(source: Trajectory | np.ndarray) -> np.ndarray:
    return source.phi if isinstance(source, Trajectory) else np.asarray(source)


def probability(source: Trajectory | np.ndarray) -> np.ndarray:
    return np.sum(np.abs(_amplitudes(source)) ** 2, axis=1)


def k_complexity(source: Trajectory | np.ndarray) -> np.ndarray:
    phi = _amplitudes(source)
    return (np.abs(phi) ** 2) @ np.arange(phi.shape[1], dtype=float)


def normalized_k_complexity(
    source: Trajectory | np.ndarray,
    probability_floor: float = PROBABILITY_FLOOR,
) -> tuple[np.ndarray, int | None]:
    """K_raw / P, with NaN (and the first such index) once P drops below the floor."""
    phi = _amplitudes(source)
    total = probability(phi)
    raw = k_complexity(phi)
    reliable = total > probability_floor
    normalized = np.full_like(raw, np.nan)
    np.divide(raw, total, out=normalized, where=reliable)
    unreliable = np.flatnonzero(~reliable)
    first = int(unreliable[0]) if unreliable.size else None
    if first is not None:
        logger.warning("probability below %.1e from grid index %d; K_o unreliable", probability_floor, first)
        normalized[first:] = np.nan
    return normalized, first


def trajectory_from_amplitudes(
    t_grid: np.ndarray,
    phi: np.ndarray,
    probability_floor: float = PROBABILITY_FLOOR,
    source: str = "krylov",
) -> Trajectory:
    normalized, unreliable_from = normalized_k_complexity(phi, probability_floor)
    return Trajectory(
        t_grid=t_grid,
        phi=phi,
        P=probability(phi),
        K_raw=k_complexity(phi),
        K_o=normalized,
        unreliable_from=unreliable_from,
        source=source,
    )


def krylov_generator(eff: EffectiveTridiagonal) -> sp.csr_matrix:
    """dPhi/dt = S Phi: +|b_n| below, -b_n above (sign kept), -Im(a_n) on the diagonal."""
    size = eff.krylov_dim
    if size == 1:
        return sp.csr_matrix(np.array([[-eff.abs_a[0]]], dtype=float))
    return sp.diags([eff.abs_b, -eff.abs_a, -eff.b_signs * eff.abs_b], [-1, 0, 1], shape=(size, size), format="csr")


def _integrate(
    generator: sp.csr_matrix,
    initial: np.ndarray,
    grid: np.ndarray,
    controls: IntegratorControls,
) -> np.ndarray:
    if grid.size == 1:
        return initial.reshape(1, -1)
    solution = solve_ivp(
        lambda _t, y: generator @ y,
        (0.0, float(grid[-1])),
        initial,
        method=controls.method,
        t_eval=grid,
        rtol=controls.rtol,
        atol=controls.atol,
    )
    if not solution.success:
        failed_at = float(solution.t[-1]) if solution.t.size else 0.0
        raise IntegrationError(failed_at, solution.message)
    return solution.y.T


def evolve(
    eff: EffectiveTridiagonal,
    t_grid: Sequence[float],
    controls: IntegratorControls | None = None,
) -> Trajectory:
    controls = controls or IntegratorControls()
    grid = _check_grid(t_grid)
    initial = np.zeros(eff.krylov_dim)
    initial[0] = 1.0
    amplitudes = _integrate(krylov_generator(eff), initial, grid, controls)
    logger.debug("evolved K=%d over %d grid points up to t=%.4g", eff.krylov_dim, grid.size, grid[-1])
    return trajectory_from_amplitudes(grid, amplitudes.astype(complex), controls.probability_floor)


def direct_evolution_oracle(
    generator: SuperOperator,
    seed: SuperVector,
    bases: KrylovBases,
    t_grid: Sequence[float],
    probability_floor: float = PROBABILITY_FLOOR,
) -> Trajectory:
    """Evolve e^{i L_o t} O(0) with the full generator and read phi_n = i^{-n} <<q_n|O(t)>>."""
    if generator.dimension > ORACLE_DIMENSION_LIMIT:
        raise ResourceGuardError(
            "oracle superoperator", float(generator.dimension), float(ORACLE_DIMENSION_LIMIT), unit="rows"
        )
    grid = _check_grid(t_grid)
    step_generator = (1j * generator.matrix).tocsc()
    phases = (-1j) ** np.arange(bases.size)

    state = seed.amplitudes.astype(complex, copy=True)
    amplitudes = np.zeros((grid.size, bases.size), dtype=complex)
    previous_time = 0.0
    for index, time_point in enumerate(grid):
        if time_point > previous_time:
            state = expm_multiply(step_generator * (time_point - previous_time), state)
            previous_time = float(time_point)
        amplitudes[index] = phases * (bases.Q.conj() @ state)
    return trajectory_from_amplitudes(grid, amplitudes, probability_floor, source="oracle")


def spread_evolution(
    data: TridiagonalData,
    t_grid: Sequence[float],
    controls: IntegratorControls | None = None,
) -> Trajectory:
    """State spreading under a tridiagonalized (non-Hermitian) Hamiltonian: dpsi/dt = -i T psi."""
    controls = controls or IntegratorControls()
    grid = _check_grid(t_grid)
    generator = (-1j * tridiagonal_matrix(data)).tocsr()
    initial = np.zeros(data.krylov_dim, dtype=complex)
    initial[0] = 1.0
    amplitudes = _integrate(generator, initial, grid, controls)
    return trajectory_from_amplitudes(grid, amplitudes, controls.probability_floor, source="spread")


def probability_rate_residual(trajectory: Trajectory, eff: EffectiveTridiagonal) -> float:
    """Relative mismatch between dP/dt (central differences) and its value from the Krylov ODE.

    With every b_n = +c_n the couplings cancel and dP/dt = -2 sum Im(a_n)|phi_n|^2;
    each b_n = -c_n adds 4 c_n Re(phi_n^* phi_{n-1}).
    """
    t = trajectory.t_grid
    if t.size < 3:
        return 0.0
    weights = np.abs(trajectory.phi) ** 2
    predicted = -2.0 * weights @ eff.abs_a
    if eff.abs_b.size:
        hopping = np.real(trajectory.phi[:, 1:].conj() * trajectory.phi[:, :-1])
        predicted = predicted + 2.0 * hopping @ ((1.0 - eff.b_signs) * eff.abs_b)
    measured = np.gradient(trajectory.P, t)
    interior = slice(1, -1)
    scale = max(float(np.max(np.abs(predicted[interior]))), np.finfo(float).tiny)
    return float(np.max(np.abs(measured[interior] - predicted[interior])) / scale)


def saturation_value(
    series: Sequence[float],
    window_fraction: float = 0.2,
    t_grid: Sequence[float] | None = None,
) -> float:
    """Average over the final ``window_fraction``: of the time span when ``t_grid`` is given, else of the points."""
    values = np.asarray(series, dtype=float)
    if not 0 < window_fraction <= 1:
        raise DomainError(f"window fraction must lie in (0, 1], got {window_fraction}")
    if t_grid is None:
        count = int(np.floor(values.size * window_fraction))
        if count < 1:
            raise DomainError("saturation window is empty")
        return float(np.mean(values[-count:]))

    times = np.asarray(t_grid, dtype=float)
    start = times[-1] - window_fraction * (times[-1] - times[0])
    mask = times >= start
    if not np.any(mask):
        raise DomainError("saturation window is empty")
    if np.count_nonzero(mask) == 1:
        return float(values[mask][0])
    window_times = times[mask]
    return float(trapezoid(values[mask], window_times) / (window_times[-1] - window_times[0]))


def peak_value(series: Sequence[float]) -> tuple[int, float]:
    values = np.asarray(series, dtype=float)
    index = int(np.nanargmax(values))
    return index, float(values[index])


def decay_onset_time(P: Sequence[float], t_grid: Sequence[float], drop: float = 1e-3) -> float | None:
    below = np.flatnonzero(np.asarray(P) < 1.0 - drop)
    return float(np.asarray(t_grid)[below[0]]) if below.size else None


def write_trajectory(
    trajectory: Trajectory,
    path: Path,
    metadata: Mapping[str, Any] | None = None,
    amplitudes_path: Path | None = None,
) -> None:
    write_csv(path, ["t", "P", "K_raw", "K_o"], trajectory.rows(), metadata)
    if amplitudes_path is None:
        return
    rows = (
        (float(t), n, float(value.real), float(value.imag))
        for t, amplitudes in zip(trajectory.t_grid, trajectory.phi)
        for n, value in enumerate(amplitudes)
    )
    write_csv(amplitudes_path, ["t", "n", "re_phi", "im_phi"], rows, metadata)
