"""Experiment pipeline: model -> Lindbladian -> bi-Lanczos -> dynamics -> analysis -> artifacts."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import itertools
import logging
from pathlib import Path
import platform
import time
from typing import Any, Callable, Sequence

import numpy as np
import scipy

from .. import __version__
from ..settings import ExperimentConfig, SectorSettings
from .analysis import (
    complexity_shape,
    detect_wall_steps,
    filter_outliers,
    fit_diagonal_slope,
    fit_eta_model,
    late_window_average,
    onset_index,
    smooth_descent,
    support_profiles,
)
from .dynamics import (
    IntegratorControls,
    ORACLE_DIMENSION_LIMIT,
    decay_onset_time,
    default_time_grid,
    direct_evolution_oracle,
    evolve,
    peak_value,
    write_trajectory,
)
from .errors import ConfigError, DomainError, ResourceGuardError
from .krylov import (
    basis_storage_bytes,
    biorthonormality_residual,
    bilanczos,
    effective_tridiagonal,
    krylov_dimension_bound,
    tridiagonal_matrix,
    tridiagonal_properties,
    write_coefficients,
)
from .liouville import (
    MAX_SUPEROPERATOR_DIMENSION,
    TRIDIAGONAL_SPECTRUM_LIMIT,
    SuperOperator,
    SuperVector,
    assert_vectorization_convention,
    build_lindbladian,
    export_triplets,
    generator_spectrum_check,
    vectorize,
)
from .sectors import SectorBasis, build_sector_basis, project_to_sector, sector_leakage
from .spin_algebra import (
    PauliString,
    SpinOperator,
    build_pauli_operator,
    build_tfim_hamiltonian,
    build_tfim_jump_operators,
    build_xxz_hamiltonian,
    build_xxz_jump_operators,
    frobenius_norm,
    normalized,
    pauli_decompose,
    pauli_strings_to_json,
    spin_pair_operator,
)
from .storage import MANIFEST_FILENAME, list_manifests, read_csv, write_csv, write_json

logger = logging.getLogger(__name__)

COEFFICIENTS_FILENAME = "coefficients.csv"
TRAJECTORY_FILENAME = "trajectory.csv"
FITS_FILENAME = "fits.json"
DESCENT_FILENAME = "descent.csv"
AMPLITUDES_FILENAME = "amplitudes.csv"
TRIPLETS_FILENAME = "superoperator.csv"
SEED_PAULI_FILENAME = "seed-pauli.json"
ORACLE_FILENAME = "oracle.json"
SWEEP_FILENAME = "sweep.csv"
COMPARISON_FILENAME = "k-o-comparison.csv"

ORACLE_AGREEMENT = 1e-6
INTEGRABLE = {"g": 1.0, "h": 0.0}
CHAOTIC = {"g": -1.05, "h": 0.5}

# eta_int, eta_non_int per coupling value; left block alpha = 0, right block gamma = 0
TABLE1_GAMMA = {0.01: (0.0026, 0.0028), 0.05: (0.0130, 0.0142), 0.10: (0.0261, 0.0284), 0.15: (0.0391, 0.0425)}
TABLE1_ALPHA = {0.01: (0.0020, 0.0019), 0.05: (0.0101, 0.0096), 0.10: (0.0203, 0.0192), 0.15: (0.0305, 0.0289)}


@dataclass(slots=True)
class OpenSystem:
    hamiltonian: SpinOperator
    jumps: list[SpinOperator]
    seed_operator: SpinOperator
    generator: SuperOperator
    seed: SuperVector
    sector: SectorBasis | None = None
    leakage: dict[str, float] = field(default_factory=dict)


@dataclass(slots=True)
class RunResult:
    directory: Path
    summary: dict[str, Any]
    artifacts: list[str]


def hilbert_dimension(config: ExperimentConfig) -> int:
    if config.sector is None:
        return 2**config.model.n_sites
    return build_sector_basis(config.model.n_sites, config.sector.total_spin, config.sector.parity).dimension


def check_resources(config: ExperimentConfig) -> dict[str, float]:
    """Fail before any superoperator is assembled if the run cannot fit."""
    dimension = hilbert_dimension(config)
    if dimension == 0:
        raise DomainError("the selected sector is empty")
    vector_dimension = dimension**2
    if vector_dimension > MAX_SUPEROPERATOR_DIMENSION:
        raise ResourceGuardError(
            "superoperator dimension", float(vector_dimension), float(MAX_SUPEROPERATOR_DIMENSION), unit="rows"
        )
    steps = krylov_dimension_bound(dimension) if config.dissipation.is_closed else vector_dimension
    if config.iteration.max_steps is not None:
        steps = min(steps, config.iteration.max_steps)
    estimate = 0.0
    if config.iteration.reorth or config.iteration.store_bases or config.analysis.wall_profiles:
        estimate = float(basis_storage_bytes(steps, vector_dimension, 2))
        if estimate > config.iteration.memory_cap_bytes:
            raise ResourceGuardError("Krylov basis storage", estimate, config.iteration.memory_cap_bytes)
    return {"hilbert_dimension": dimension, "step_limit": steps, "basis_bytes": estimate}


def build_seed_operator(config: ExperimentConfig) -> SpinOperator:
    n_sites = config.model.n_sites
    seed = config.initial_operator
    if seed.kind == "pair":
        return spin_pair_operator(n_sites, config.seed_site)
    sites = config.seed_sites if seed.kind == "string" else [config.seed_site]
    return build_pauli_operator(PauliString.from_sites(n_sites, {site: seed.axis for site in sites}))


def build_open_system(config: ExperimentConfig) -> OpenSystem:
    model, rates = config.model, config.dissipation
    n_sites = model.n_sites
    if model.name == "tfim":
        hamiltonian = build_tfim_hamiltonian(n_sites, model.g, model.h)
        jumps = [] if rates.is_closed else build_tfim_jump_operators(n_sites, rates.alpha, rates.gamma)
    else:
        hamiltonian = build_xxz_hamiltonian(
            n_sites, model.J, model.J_zz, model.epsilon, model.defect_site, model.defect_mode
        )
        jumps = (
            []
            if rates.is_closed
            else build_xxz_jump_operators(n_sites, rates.alpha, rates.gamma, config.reflection_symmetric_jumps)
        )
    seed_operator = build_seed_operator(config)

    sector = None
    leakage: dict[str, float] = {}
    if config.sector is not None:
        sector = build_sector_basis(n_sites, config.sector.total_spin, config.sector.parity)
        leakage["hamiltonian"] = sector_leakage(hamiltonian, sector)
        leakage["jumps"] = max((sector_leakage(jump, sector) for jump in jumps), default=0.0)
        hamiltonian = project_to_sector(hamiltonian, sector)
        jumps = [project_to_sector(jump, sector) for jump in jumps]
        seed_operator = project_to_sector(seed_operator, sector)
        if frobenius_norm(seed_operator) == 0.0:
            raise DomainError(f"the initial operator vanishes in {sector.tag}")

    generator = build_lindbladian(hamiltonian, jumps)
    seed_operator = normalized(seed_operator)
    ratio = assert_vectorization_convention(seed_operator)
    logger.debug("vectorization ratio %.6g for dimension %d", ratio, seed_operator.dimension)
    seed = vectorize(seed_operator).normalized()
    return OpenSystem(hamiltonian, jumps, seed_operator, generator, seed, sector, leakage)


def integrator_controls(config: ExperimentConfig) -> IntegratorControls:
    integration = config.integration
    return IntegratorControls(
        rtol=integration.rtol,
        atol=integration.atol,
        method=integration.method,
        probability_floor=integration.probability_floor,
    )


def time_grid(config: ExperimentConfig) -> np.ndarray:
    integration = config.integration
    return default_time_grid(integration.t_max, integration.points, integration.t_linear)


def _versions() -> dict[str, str]:
    return {
        "krylov_lindblad": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _metadata(config: ExperimentConfig, basis_tag: str) -> dict[str, Any]:
    model = config.model
    return {
        "model": model.name,
        "n_sites": model.n_sites,
        "alpha": config.dissipation.alpha,
        "gamma": config.dissipation.gamma,
        "basis": basis_tag,
    }


def run(
    config: ExperimentConfig,
    out_dir: Path | None = None,
    store_bases: bool | None = None,
    reorth: bool | None = None,
) -> RunResult:
    """Execute one experiment and write its artifact set into ``out_dir``."""
    config.validate()
    if store_bases is not None:
        config = config.with_value("iteration.store_bases", store_bases)
    if reorth is not None:
        config = config.with_value("iteration.reorth", reorth)
    directory = Path(out_dir or config.outputs.directory)
    resources = check_resources(config)
    started = time.perf_counter()

    system = build_open_system(config)
    iteration = config.iteration
    keep_bases = iteration.store_bases or config.analysis.wall_profiles > 0
    data, bases = bilanczos(
        system.generator,
        system.seed,
        max_steps=iteration.max_steps,
        breakdown_tol=iteration.breakdown_tol,
        reorth="full" if iteration.reorth else "none",
        store_bases=keep_bases,
        memory_cap_bytes=iteration.memory_cap_bytes,
        log_every=iteration.log_every,
    )
    eff = effective_tridiagonal(data)
    trajectory = evolve(eff, time_grid(config), integrator_controls(config))

    metadata = _metadata(config, system.generator.basis_tag)
    artifacts = [COEFFICIENTS_FILENAME, TRAJECTORY_FILENAME, DESCENT_FILENAME, FITS_FILENAME]
    write_coefficients(data, directory / COEFFICIENTS_FILENAME, metadata)
    amplitudes_path = directory / AMPLITUDES_FILENAME if config.outputs.amplitudes else None
    write_trajectory(trajectory, directory / TRAJECTORY_FILENAME, metadata, amplitudes_path)
    if amplitudes_path is not None:
        artifacts.append(AMPLITUDES_FILENAME)

    analysis = config.analysis
    smoothed = smooth_descent(eff.abs_b, analysis.smoothing_window) if eff.abs_b.size else eff.abs_b
    filtered, removed = filter_outliers(eff.abs_b, analysis.outlier_multiplier)
    write_csv(
        directory / DESCENT_FILENAME,
        ["n", "abs_a", "abs_b", "smoothed_b", "filtered_b"],
        (
            (n + 1, float(eff.abs_a[n + 1]), float(eff.abs_b[n]), float(smoothed[n]), float(filtered[n]))
            for n in range(eff.abs_b.size)
        ),
        metadata,
    )

    fits: dict[str, Any] = {
        "krylov_dim": data.krylov_dim,
        "termination_reason": data.termination_reason,
        "serious_breakdown": bool(data.diagnostics.get("serious_breakdown", False)),
        "properties": tridiagonal_properties(data),
        "outliers": {"removed": removed, "fraction": len(removed) / max(1, eff.abs_b.size)},
        "onset_index": onset_index(eff.abs_a, analysis.onset_threshold),
        "late_window": late_window_average(trajectory, analysis.window_fraction),
        "shape": complexity_shape(trajectory, analysis.window_fraction),
        "decay_onset_time": decay_onset_time(trajectory.P, trajectory.t_grid),
        "max_probability_increase": float(np.max(np.diff(trajectory.P), initial=0.0)),
        "unreliable_from": trajectory.unreliable_from,
        "negative_couplings": [int(n) + 1 for n in np.flatnonzero(eff.b_signs < 0)],
        "exceeds_closed_bound": bool(data.diagnostics.get("exceeds_closed_bound", False)),
    }
    if eff.krylov_dim >= 10:
        fits["slope"] = fit_diagonal_slope(eff.abs_a, config.fit_range).to_payload()
    if bases is not None:
        fits["biorthonormality_residual"] = biorthonormality_residual(bases)
    if system.leakage:
        fits["sector_leakage"] = system.leakage
    if not config.dissipation.is_closed:
        if data.krylov_dim <= TRIDIAGONAL_SPECTRUM_LIMIT:
            fits["stability"] = generator_spectrum_check(tridiagonal=tridiagonal_matrix(data)).to_payload()
        else:
            logger.warning("stability check skipped: K=%d exceeds the dense limit", data.krylov_dim)
    if analysis.wall_profiles and bases is not None and system.sector is None:
        profiles = support_profiles(bases, analysis.wall_profiles)
        first_touch, dominated = detect_wall_steps(profiles, analysis.wall_threshold)
        fits["wall_steps"] = {"n1": first_touch, "n2": dominated, "profiles": len(profiles)}
    write_json(directory / FITS_FILENAME, fits)

    if config.outputs.triplets:
        export_triplets(system.generator, directory / TRIPLETS_FILENAME)
        artifacts.append(TRIPLETS_FILENAME)
    if config.outputs.pauli_seed and system.sector is None:
        write_json(directory / SEED_PAULI_FILENAME, pauli_strings_to_json(pauli_decompose(normalized(system.seed_operator))))
        artifacts.append(SEED_PAULI_FILENAME)

    elapsed = time.perf_counter() - started
    write_json(
        directory / MANIFEST_FILENAME,
        {
            "config": config.to_payload(),
            "versions": _versions(),
            "resources": resources,
            "termination_reason": data.termination_reason,
            "krylov_dim": data.krylov_dim,
            "basis": system.generator.basis_tag,
            "saturation_window_fraction": analysis.window_fraction,
            "artifacts": artifacts + [MANIFEST_FILENAME],
            "elapsed_seconds": elapsed,
        },
    )
    logger.info("run finished in %s: K=%d, %.2fs", directory, data.krylov_dim, elapsed)
    return RunResult(directory=directory, summary=_summary(fits), artifacts=artifacts)


def _summary(fits: dict[str, Any]) -> dict[str, Any]:
    slope = fits.get("slope") or {}
    return {
        "krylov_dim": fits["krylov_dim"],
        "termination_reason": fits["termination_reason"],
        "eta": slope.get("eta"),
        "zero_offset_eta": slope.get("zero_offset_eta"),
        "r_squared": slope.get("r_squared"),
        "onset_index": fits["onset_index"],
        "peak_K_o": fits["shape"]["peak_value"],
        "saturation_K_o": fits["late_window"]["K_o"],
        "saturation_K_raw": fits["late_window"]["K_raw"],
        "final_P": fits["late_window"]["P"],
        "decay_onset_time": fits["decay_onset_time"],
    }


SUMMARY_COLUMNS = (
    "krylov_dim",
    "termination_reason",
    "eta",
    "zero_offset_eta",
    "r_squared",
    "onset_index",
    "peak_K_o",
    "saturation_K_o",
    "saturation_K_raw",
    "final_P",
    "decay_onset_time",
)


def _cell(value: Any) -> Any:
    return "" if value is None else value


def _run_member(job: tuple[str, ExperimentConfig, Path]) -> tuple[str, dict[str, Any]]:
    name, config, directory = job
    return name, run(config, directory).summary


def run_members(
    members: Sequence[tuple[str, ExperimentConfig]],
    out_dir: Path,
    workers: int = 1,
) -> dict[str, dict[str, Any]]:
    """Run independent configurations, one sub-directory each; results keep member order."""
    jobs = [(name, config, out_dir / name) for name, config in members]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_member, jobs))
    else:
        results = [_run_member(job) for job in jobs]
    return dict(results)


def write_comparison(out_dir: Path, names: Sequence[str]) -> bool:
    """Side-by-side K_o series when every member shares one time grid."""
    columns: list[list[str]] = []
    grid: list[str] | None = None
    for name in names:
        _, rows = read_csv(out_dir / name / TRAJECTORY_FILENAME)
        times = [row["t"] for row in rows]
        if grid is None:
            grid = times
        elif times != grid:
            logger.warning("members use different time grids; comparison file skipped")
            return False
        columns.append([row["K_o"] for row in rows])
    if grid is None:
        return False
    write_csv(out_dir / COMPARISON_FILENAME, ["t", *names], (row for row in zip(grid, *columns)))
    return True


def _write_consolidated(
    out_dir: Path,
    key: str,
    members: Sequence[tuple[str, ExperimentConfig]],
    results: dict[str, dict[str, Any]],
    labels: dict[str, Any],
) -> None:
    rows = (
        (name, _cell(labels[name]), *(_cell(results[name][column]) for column in SUMMARY_COLUMNS))
        for name, _ in members
    )
    write_csv(out_dir / SWEEP_FILENAME, ["member", key, *SUMMARY_COLUMNS], rows)


def member_manifests(out_dir: Path) -> list[str]:
    """Run manifests below a sweep or preset directory, relative to it."""
    top = out_dir / MANIFEST_FILENAME
    return [str(path.relative_to(out_dir).parent) for path in list_manifests(out_dir) if path != top]


def _member_name(axis: str, value: Any) -> str:
    return f"{axis}={value}"


def sweep(
    base: ExperimentConfig,
    axis: str,
    values: Sequence[Any],
    out_dir: Path | None = None,
    workers: int = 1,
) -> dict[str, dict[str, Any]]:
    base.validate()
    base.scalar_field_type(axis)
    directory = Path(out_dir or base.outputs.directory)
    members = [(_member_name(axis, value), base.with_value(axis, value)) for value in values]
    results = run_members(members, directory, workers)
    labels = {name: value for (name, _), value in zip(members, values)}
    _write_consolidated(directory, axis, members, results, labels)
    if members:
        write_comparison(directory, [name for name, _ in members])
    write_json(
        directory / MANIFEST_FILENAME,
        {
            "sweep": {"axis": axis, "values": list(values), "workers": workers},
            "config": base.to_payload(),
            "versions": _versions(),
            "members": [name for name, _ in members],
            "member_runs": member_manifests(directory),
        },
    )
    return results


def _tfim(n_sites: int = 6, regime: dict[str, float] = INTEGRABLE, **overrides: Any) -> ExperimentConfig:
    config = ExperimentConfig()
    config.model.n_sites = n_sites
    config.model.g = regime["g"]
    config.model.h = regime["h"]
    for dotted, value in overrides.items():
        config = config.with_value(dotted.replace("__", "."), value)
    return config


def _regimes() -> list[tuple[str, dict[str, float]]]:
    return [("integrable", INTEGRABLE), ("chaotic", CHAOTIC)]


def _fig1_members() -> list[tuple[str, ExperimentConfig]]:
    return [(label, _tfim(regime=regime)) for label, regime in _regimes()]


def _table1_members() -> list[tuple[str, ExperimentConfig]]:
    members = []
    for label, regime in _regimes():
        for gamma in TABLE1_GAMMA:
            members.append((f"{label}-gamma={gamma}", _tfim(regime=regime, dissipation__gamma=gamma)))
        for alpha in TABLE1_ALPHA:
            members.append((f"{label}-alpha={alpha}", _tfim(regime=regime, dissipation__alpha=alpha)))
    return members


def _coupling_members(fixed: str, fixed_value: float, axis: str, values: Sequence[float]) -> list[tuple[str, ExperimentConfig]]:
    members = []
    for label, regime in _regimes():
        for value in values:
            overrides = {f"dissipation__{fixed}": fixed_value, f"dissipation__{axis}": value}
            members.append((f"{label}-{axis}={value}", _tfim(regime=regime, **overrides)))
    return members


def _fig5_members() -> list[tuple[str, ExperimentConfig]]:
    pairs = [(0.02, 0.0), (0.05, 0.0), (0.02, 0.05)]
    return [
        (f"chaotic-alpha={alpha}-gamma={gamma}", _tfim(regime=CHAOTIC, dissipation__alpha=alpha, dissipation__gamma=gamma))
        for alpha, gamma in pairs
    ]


def _finite_size_members() -> list[tuple[str, ExperimentConfig]]:
    members = []
    for n_sites in (4, 6, 8):
        overrides: dict[str, Any] = {"dissipation__alpha": 0.1}
        if n_sites == 8:
            overrides["iteration__max_steps"] = 200
        members.append((f"N={n_sites}", _tfim(n_sites, **overrides)))
    weight3 = _tfim(6, dissipation__alpha=0.1, initial_operator__kind="string")
    weight3.initial_operator.sites = [2, 3, 4]
    weight3.validate()
    members.append(("weight-3", weight3))
    return members


def _wall_members() -> list[tuple[str, ExperimentConfig]]:
    return [
        (label, _tfim(regime=regime, dissipation__alpha=0.1, analysis__wall_profiles=200))
        for label, regime in _regimes()
    ]


def _xxz_members() -> list[tuple[str, ExperimentConfig]]:
    members = []
    for (alpha, gamma), epsilon in itertools.product(((0.01, 0.01), (0.05, 0.01)), (0.0, 0.5)):
        config = ExperimentConfig()
        config.model.name = "xxz"
        config.model.n_sites = 8
        config.model.epsilon = epsilon
        config.model.defect_mode = "mirrored"
        config.sector = SectorSettings(total_spin=1.0, parity=1)
        config.initial_operator.kind = "pair"
        config.initial_operator.site = 2
        config.dissipation.alpha = alpha
        config.dissipation.gamma = gamma
        config.validate()
        members.append((f"alpha={alpha}-gamma={gamma}-epsilon={epsilon}", config))
    return members


PRESETS: dict[str, Callable[[], list[tuple[str, ExperimentConfig]]]] = {
    "fig1-closed-tfim": _fig1_members,
    "table1": _table1_members,
    "fig3-alpha": lambda: _coupling_members("gamma", 0.01, "alpha", (0.01, 0.1)),
    "fig4-gamma": lambda: _coupling_members("alpha", 0.05, "gamma", (0.0, 0.01, 0.05)),
    "fig5-both": _fig5_members,
    "finite-size": _finite_size_members,
    "wall-steps": _wall_members,
    "xxz-sector": _xxz_members,
}


def preset_members(name: str) -> list[tuple[str, ExperimentConfig]]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]()


def eta_table(results: dict[str, dict[str, Any]]) -> dict[str, Any]:
    """Measured slopes next to the reference values, with eta-model fits per block."""
    rows = []
    models: dict[str, Any] = {}
    for column, (label, _) in enumerate(_regimes()):
        for axis, reference in (("gamma", TABLE1_GAMMA), ("alpha", TABLE1_ALPHA)):
            points = []
            for value, expected in reference.items():
                measured = results[f"{label}-{axis}={value}"]["eta"]
                alpha, gamma = (value, 0.0) if axis == "alpha" else (0.0, value)
                points.append((alpha, gamma, measured))
                rows.append(
                    {
                        "regime": label,
                        "alpha": alpha,
                        "gamma": gamma,
                        "eta": measured,
                        "reference": expected[column],
                        "relative_error": abs(measured - expected[column]) / expected[column],
                    }
                )
            model = fit_eta_model(points)
            for row, (alpha, gamma, _) in zip(rows[-len(points) :], points):
                row["model_eta"] = model.predict(alpha, gamma)
            models[f"{label}-{axis}"] = model.to_payload()
    return {"rows": rows, "models": models}


def run_preset(name: str, out_dir: Path, workers: int = 1) -> dict[str, Any]:
    members = preset_members(name)
    results = run_members(members, out_dir, workers)
    _write_consolidated(out_dir, "preset", members, results, {member: name for member, _ in members})
    write_comparison(out_dir, [member for member, _ in members])
    payload: dict[str, Any] = {"preset": name, "members": results}
    if name == "table1":
        payload["eta_table"] = eta_table(results)
    write_json(out_dir / "preset-summary.json", payload)
    write_json(
        out_dir / MANIFEST_FILENAME,
        {
            "preset": name,
            "versions": _versions(),
            "members": {member: config.to_payload() for member, config in members},
            "member_runs": member_manifests(out_dir),
        },
    )
    return payload


def oracle_check(config: ExperimentConfig, out_dir: Path | None = None) -> dict[str, Any]:
    """Compare evolve against direct superoperator evolution on the same grid."""
    config.validate()
    dimension = hilbert_dimension(config)
    if dimension**2 > ORACLE_DIMENSION_LIMIT:
        raise ResourceGuardError("oracle superoperator", float(dimension**2), float(ORACLE_DIMENSION_LIMIT), unit="rows")
    system = build_open_system(config)
    data, bases = bilanczos(
        system.generator,
        system.seed,
        max_steps=config.iteration.max_steps,
        breakdown_tol=config.iteration.breakdown_tol,
        store_bases=True,
    )
    grid = time_grid(config)
    krylov = evolve(effective_tridiagonal(data), grid, integrator_controls(config))
    oracle = direct_evolution_oracle(system.generator, system.seed, bases, grid, config.integration.probability_floor)

    reliable = np.isfinite(krylov.K_o) & np.isfinite(oracle.K_o)
    report = {
        "krylov_dim": data.krylov_dim,
        "max_probability_difference": float(np.max(np.abs(krylov.P - oracle.P))),
        "max_k_o_difference": float(np.max(np.abs(krylov.K_o[reliable] - oracle.K_o[reliable]), initial=0.0)),
        "tolerance": ORACLE_AGREEMENT,
        "peak_K_o": peak_value(krylov.K_o)[1],
    }
    report["passed"] = max(report["max_probability_difference"], report["max_k_o_difference"]) <= ORACLE_AGREEMENT
    if not report["passed"]:
        logger.warning("oracle disagreement: %s", report)
    if out_dir is not None:
        write_json(Path(out_dir) / ORACLE_FILENAME, report)
    return report
