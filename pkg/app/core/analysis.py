"""Post-processing of Lanczos coefficients and complexity trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Any, Sequence

import numpy as np
from scipy.ndimage import median_filter

from .dynamics import Trajectory, peak_value, saturation_value
from .errors import DomainError
from .krylov import KrylovBases
from .liouville import SuperVector, devectorize
from .spin_algebra import pauli_coefficients

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
PLATEAU_GROWTH_CUTOFF = 0.01
DEFAULT_SMOOTHING_WINDOW = 51
DEFAULT_MEDIAN_WINDOW = 101
WALL_THRESHOLD = 1e-10


@dataclass(slots=True)
class SlopeFit:
    eta: float
    k: float
    fit_range: tuple[int, int]
    r_squared: float
    zero_offset_eta: float
    automatic: bool = True

    def to_payload(self) -> dict[str, Any]:
        return {
            "eta": self.eta,
            "k": self.k,
            "fit_range": list(self.fit_range),
            "r_squared": self.r_squared,
            "zero_offset_eta": self.zero_offset_eta,
            "automatic_range": self.automatic,
        }


@dataclass(slots=True)
class EtaModel:
    c1: float
    c2: float
    residual: float
    r_squared: float
    points: list[tuple[float, float, float]] = field(default_factory=list)

    def predict(self, alpha: float, gamma: float) -> float:
        return self.c1 * alpha + self.c2 * gamma

    def to_payload(self) -> dict[str, Any]:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "residual": self.residual,
            "r_squared": self.r_squared,
            "points": [list(point) for point in self.points],
        }


@dataclass(slots=True)
class SupportProfile:
    """Squared Pauli mass of one operator grouped by support size 0..N."""

    weights: np.ndarray
    n_sites: int

    def weight(self, size: int) -> float:
        return float(self.weights[size])

    @property
    def dominant_size(self) -> int:
        return int(np.argmax(self.weights))

    def as_dict(self, tolerance: float = 0.0) -> dict[int, float]:
        return {size: float(value) for size, value in enumerate(self.weights) if value > tolerance}


def _r_squared(values: np.ndarray, fitted: np.ndarray) -> float:
    residual = float(np.sum((values - fitted) ** 2))
    total = float(np.sum((values - values.mean()) ** 2))
    if total == 0.0:
        return 1.0 if residual == 0.0 else 0.0
    return 1.0 - residual / total


def detect_plateau_onset(values: Sequence[float], window: int | None = None) -> int:
    """End index of the first trailing window after which the moving average grows by <= 1%."""
    series = np.asarray(values, dtype=float)
    window = window or max(MIN_FIT_POINTS, series.size // 100)
    if series.size < 2 * window:
        return series.size
    cumulative = np.concatenate([[0.0], np.cumsum(series)])
    trailing = (cumulative[window:] - cumulative[:-window]) / window
    for end in range(trailing.size - window):
        current, ahead = trailing[end], trailing[end + window]
        if current > 0 and ahead - current <= PLATEAU_GROWTH_CUTOFF * current:
            return end + window
    return series.size


def fit_diagonal_slope(
    abs_a: Sequence[float],
    fit_range: tuple[int, int] | str = "auto",
) -> SlopeFit:
    values = np.abs(np.asarray(abs_a, dtype=float))
    if values.size < MIN_FIT_POINTS:
        raise DomainError(f"slope fit needs at least {MIN_FIT_POINTS} coefficients, got {values.size}")
    automatic = fit_range == "auto"
    if automatic:
        start, stop = 0, detect_plateau_onset(values)
    else:
        start, stop = (int(bound) for bound in fit_range)
    stop = min(stop, values.size)
    if stop - start < 3 or start < 0:
        raise DomainError(f"degenerate fit range [{start}, {stop})")

    n = np.arange(start, stop, dtype=float)
    y = values[start:stop]
    design = np.column_stack([n, np.ones_like(n)])
    (eta, k), *_ = np.linalg.lstsq(design, y, rcond=None)
    denominator = float(n @ n)
    zero_offset = float(n @ y) / denominator if denominator > 0 else 0.0
    fit = SlopeFit(
        eta=float(eta),
        k=float(k),
        fit_range=(start, stop),
        r_squared=_r_squared(y, eta * n + k),
        zero_offset_eta=zero_offset,
        automatic=automatic,
    )
    logger.debug("slope fit over [%d, %d): eta=%.6g, r2=%.4f", start, stop, fit.eta, fit.r_squared)
    return fit


def fit_eta_model(points: Sequence[tuple[float, float, float]]) -> EtaModel:
    """Least-squares plane eta = c1 * alpha + c2 * gamma through the origin.

    A coupling that is zero in every point is left out of the fit and its
    coefficient reported as 0, so single-coupling scans reduce to a 1-D slope.
    """
    data = np.asarray(points, dtype=float).reshape(-1, 3)
    if data.shape[0] < 3:
        raise DomainError(f"eta model needs at least 3 points, got {data.shape[0]}")
    design, target = data[:, :2], data[:, 2]
    active = np.flatnonzero(np.any(design != 0.0, axis=0))
    if active.size == 0:
        raise DomainError("eta model needs a nonzero coupling in at least one point")
    reduced = design[:, active]
    if np.linalg.matrix_rank(reduced) < active.size:
        raise DomainError("eta model is rank deficient: (alpha, gamma) points are collinear")

    solution, *_ = np.linalg.lstsq(reduced, target, rcond=None)
    coefficients = np.zeros(2)
    coefficients[active] = solution
    fitted = design @ coefficients
    return EtaModel(
        c1=float(coefficients[0]),
        c2=float(coefficients[1]),
        residual=float(np.linalg.norm(target - fitted)),
        r_squared=_r_squared(target, fitted),
        points=[(float(a), float(g), float(e)) for a, g, e in data],
    )


def smooth_descent(values: Sequence[float], window: int = DEFAULT_SMOOTHING_WINDOW) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically near both ends."""
    series = np.asarray(values, dtype=float)
    if window < 1 or window % 2 == 0:
        raise DomainError(f"smoothing window must be a positive odd integer, got {window}")
    if series.size == 0:
        return series.copy()
    if window > series.size:
        window = series.size if series.size % 2 else series.size - 1

    index = np.arange(series.size)
    radius = np.minimum(window // 2, np.minimum(index, series.size - 1 - index))
    cumulative = np.concatenate([[0.0], np.cumsum(series)])
    return (cumulative[index + radius + 1] - cumulative[index - radius]) / (2 * radius + 1)


def filter_outliers(
    values: Sequence[float],
    multiplier: float = 3.0,
    window: int = DEFAULT_MEDIAN_WINDOW,
) -> tuple[np.ndarray, list[int]]:
    """Replace entries above ``multiplier`` times the running median with that median."""
    if multiplier <= 1:
        raise DomainError(f"outlier multiplier must exceed 1, got {multiplier}")
    series = np.asarray(values, dtype=float)
    if series.size == 0:
        return series.copy(), []
    running = median_filter(series, size=min(window, series.size), mode="nearest")
    mask = series > multiplier * running
    cleaned = np.where(mask, running, series)
    removed = [int(index) for index in np.flatnonzero(mask)]
    if removed:
        logger.warning("replaced %d outliers of %d (multiplier %.3g)", len(removed), series.size, multiplier)
    return cleaned, removed


def _support_sizes(n_sites: int) -> np.ndarray:
    sizes = np.zeros(1, dtype=int)
    step = np.array([0, 1, 1, 1])
    for _ in range(n_sites):
        sizes = (sizes[:, None] + step[None, :]).ravel()
    return sizes


def support_profile(vector: SuperVector, n_sites: int) -> SupportProfile:
    if vector.basis_tag != "full":
        raise DomainError(f"support profiles need full-space vectors, got {vector.basis_tag}")
    if vector.dimension != 4**n_sites:
        raise DomainError(f"vector length {vector.dimension} does not match {n_sites} sites")
    coefficients = pauli_coefficients(devectorize(vector))
    mass = np.abs(coefficients.ravel()) ** 2
    weights = np.bincount(_support_sizes(n_sites), weights=mass, minlength=n_sites + 1)
    total = float(weights.sum())
    if total == 0.0:
        raise DomainError("support profile of the zero vector is undefined")
    return SupportProfile(weights=weights / total, n_sites=n_sites)


def support_profiles(bases: KrylovBases, count: int | None = None) -> list[SupportProfile]:
    size = bases.size if count is None else min(count, bases.size)
    return [support_profile(bases.p(n), bases.n_sites) for n in range(size)]


def detect_wall_steps(
    profiles: Sequence[SupportProfile],
    threshold: float = WALL_THRESHOLD,
) -> tuple[int | None, int | None]:
    """First touch (n1) and first domination (n2) of the full-chain support class."""
    first_touch: int | None = None
    dominated: int | None = None
    for index, profile in enumerate(profiles):
        wall = profile.weight(profile.n_sites)
        if first_touch is None and wall > threshold:
            first_touch = index
        if dominated is None and wall > threshold and profile.dominant_size == profile.n_sites:
            dominated = index
        if first_touch is not None and dominated is not None:
            break
    return first_touch, dominated


def onset_index(abs_a: Sequence[float], threshold: float = 1e-8) -> int | None:
    above = np.flatnonzero(np.abs(np.asarray(abs_a, dtype=float)) > threshold)
    return int(above[0]) if above.size else None


def late_window_average(trajectory: Trajectory, window_fraction: float = 0.2) -> dict[str, float]:
    return {
        name: saturation_value(series, window_fraction, trajectory.t_grid)
        for name, series in (("P", trajectory.P), ("K_raw", trajectory.K_raw), ("K_o", trajectory.K_o))
    }


def complexity_shape(trajectory: Trajectory, window_fraction: float = 0.2) -> dict[str, Any]:
    """Early peak of K_o against its late plateau."""
    index, peak = peak_value(trajectory.K_o)
    plateau = saturation_value(trajectory.K_o, window_fraction, trajectory.t_grid)
    return {
        "peak_index": index,
        "peak_time": float(trajectory.t_grid[index]),
        "peak_value": peak,
        "saturation": plateau,
        "window_fraction": window_fraction,
        "peak_above_plateau": bool(peak > plateau),
    }
