from pathlib import Path

import numpy as np
import pytest

from app.core.errors import ConfigError, ResourceGuardError
from app.core.krylov import bilanczos, biorthonormality_residual, lanczos, tridiagonal_properties
from app.core.liouville import assert_vectorization_convention
from app.core.runner import (
    COEFFICIENTS_FILENAME,
    COMPARISON_FILENAME,
    DESCENT_FILENAME,
    FITS_FILENAME,
    ORACLE_FILENAME,
    PRESETS,
    SWEEP_FILENAME,
    TABLE1_ALPHA,
    TABLE1_GAMMA,
    TRAJECTORY_FILENAME,
    build_open_system,
    eta_table,
    oracle_check,
    preset_members,
    run,
    run_preset,
    sweep,
)
from app.core.storage import MANIFEST_FILENAME, read_csv, read_json
from app.main import main
from app.settings import ExperimentConfig


def _config(**tables: dict) -> ExperimentConfig:
    data = {"integration": {"t_max": 50.0, "points": 200}}
    for name, table in tables.items():
        data[name] = {**data.get(name, {}), **table}
    return ExperimentConfig.from_mapping(data)


def test_closed_run_writes_the_artifact_set(tmp_path: Path) -> None:
    result = run(_config(model={"n_sites": 2}), tmp_path)

    for name in (COEFFICIENTS_FILENAME, TRAJECTORY_FILENAME, DESCENT_FILENAME, FITS_FILENAME, MANIFEST_FILENAME):
        assert (tmp_path / name).exists()
    _, rows = read_csv(tmp_path / TRAJECTORY_FILENAME)
    np.testing.assert_allclose([float(row["P"]) for row in rows], 1.0, atol=1e-8)
    manifest = read_json(tmp_path / MANIFEST_FILENAME)
    assert manifest["krylov_dim"] == result.summary["krylov_dim"]
    assert manifest["config"]["model"]["n_sites"] == 2
    assert "stability" not in read_json(tmp_path / FITS_FILENAME)


def test_open_run_reports_a_stable_generator(tmp_path: Path) -> None:
    config = _config(model={"n_sites": 2, "g": -1.05, "h": 0.5}, dissipation={"alpha": 0.1, "gamma": 0.05})

    run(config, tmp_path)

    fits = read_json(tmp_path / FITS_FILENAME)
    assert fits["stability"]["passed"]
    assert fits["properties"]["max_relative_bc_mismatch"] <= 1e-8
    assert fits["krylov_dim"] == 14
    assert fits["exceeds_closed_bound"]
    assert fits["negative_couplings"]


def test_runs_are_deterministic(tmp_path: Path) -> None:
    config = _config(model={"n_sites": 2}, dissipation={"alpha": 0.1})

    run(config, tmp_path / "first")
    run(config, tmp_path / "second")

    for name in (COEFFICIENTS_FILENAME, TRAJECTORY_FILENAME):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_memory_guard_fires_before_any_artifact(tmp_path: Path) -> None:
    config = _config(model={"n_sites": 6}, iteration={"memory_cap_gb": 1e-6})

    with pytest.raises(ResourceGuardError):
        run(config, tmp_path / "guarded")

    assert not (tmp_path / "guarded").exists()


def test_optional_exports(tmp_path: Path) -> None:
    config = _config(model={"n_sites": 2}, outputs={"amplitudes": True, "triplets": True, "pauli_seed": True})

    result = run(config, tmp_path)

    assert {"amplitudes.csv", "superoperator.csv", "seed-pauli.json"} <= set(result.artifacts)
    (string,) = read_json(tmp_path / "seed-pauli.json")
    assert string["terms"] == [{"site": 1, "axis": "Z"}]
    assert string["re"] == pytest.approx(1.0)


def test_xxz_sector_run_does_not_leak(tmp_path: Path) -> None:
    config = _config(
        model={"name": "xxz", "n_sites": 4, "J_zz": 0.5, "epsilon": 0.5, "defect_mode": "mirrored"},
        sector={"total_spin": 0, "parity": 1},
        initial_operator={"kind": "pair", "site": 1},
        dissipation={"alpha": 0.01, "gamma": 0.01},
    )

    system = build_open_system(config)
    run(config, tmp_path)

    assert system.generator.basis_tag == "sector(S=0,P=+1)"
    assert max(system.leakage.values()) < 1e-10
    assert max(read_json(tmp_path / FITS_FILENAME)["sector_leakage"].values()) < 1e-10


def test_empty_sweep_writes_only_the_header(tmp_path: Path) -> None:
    results = sweep(_config(model={"n_sites": 2}), "dissipation.alpha", [], tmp_path)

    assert results == {}
    metadata, rows = read_csv(tmp_path / SWEEP_FILENAME)
    assert rows == []
    assert (tmp_path / SWEEP_FILENAME).read_text(encoding="utf-8").startswith("member,dissipation.alpha,")
    assert not (tmp_path / COMPARISON_FILENAME).exists()


def test_sweep_runs_every_member_and_compares_them(tmp_path: Path) -> None:
    results = sweep(_config(model={"n_sites": 2}), "dissipation.gamma", [0.0, 0.05], tmp_path)

    assert list(results) == ["dissipation.gamma=0.0", "dissipation.gamma=0.05"]
    _, rows = read_csv(tmp_path / SWEEP_FILENAME)
    assert [row["dissipation.gamma"] for row in rows] == ["0.0", "0.05"]
    _, comparison = read_csv(tmp_path / COMPARISON_FILENAME)
    assert list(comparison[0]) == ["t", "dissipation.gamma=0.0", "dissipation.gamma=0.05"]
    assert (tmp_path / "dissipation.gamma=0.05" / FITS_FILENAME).exists()
    manifest = read_json(tmp_path / MANIFEST_FILENAME)
    assert manifest["member_runs"] == ["dissipation.gamma=0.0", "dissipation.gamma=0.05"]


def test_sweeps_need_a_scalar_axis(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        sweep(_config(model={"n_sites": 2}), "initial_operator.sites", [[1], [2]], tmp_path)


def test_oracle_agrees_with_single_site_dephasing(tmp_path: Path) -> None:
    config = _config(
        model={"n_sites": 1, "g": 0.0},
        initial_operator={"axis": "X"},
        dissipation={"gamma": 0.05},
    )

    report = oracle_check(config, tmp_path)

    assert report["krylov_dim"] == 1
    assert report["passed"]
    assert read_json(tmp_path / ORACLE_FILENAME)["passed"]


def test_oracle_agrees_with_closed_two_site_chain() -> None:
    report = oracle_check(_config(model={"n_sites": 2, "g": -1.05, "h": 0.5}))
    assert report["passed"]
    assert report["max_probability_difference"] <= 1e-6


def test_oracle_agrees_with_open_chaotic_two_site_chain() -> None:
    config = _config(
        model={"n_sites": 2, "g": -1.05, "h": 0.5},
        dissipation={"alpha": 0.1, "gamma": 0.05},
        integration={"t_max": 20.0, "points": 201},
    )

    report = oracle_check(config)

    assert report["krylov_dim"] == 14
    assert report["passed"]


def test_open_system_seed_follows_the_vectorization_convention() -> None:
    system = build_open_system(_config(model={"n_sites": 2}, dissipation={"alpha": 0.1}))

    assert assert_vectorization_convention(system.seed_operator) == pytest.approx(4.0)
    assert system.seed.amplitudes.size == 16
    assert np.linalg.norm(system.seed.amplitudes) == pytest.approx(1.0)


def test_eta_table_reports_model_predictions() -> None:
    slopes = {"integrable": (0.2, 0.26), "chaotic": (0.19, 0.28)}
    results = {}
    for label, (c1, c2) in slopes.items():
        for value in TABLE1_GAMMA:
            results[f"{label}-gamma={value}"] = {"eta": c2 * value}
        for value in TABLE1_ALPHA:
            results[f"{label}-alpha={value}"] = {"eta": c1 * value}

    table = eta_table(results)

    assert len(table["rows"]) == 16
    for row in table["rows"]:
        assert row["model_eta"] == pytest.approx(row["eta"])
    assert table["models"]["chaotic-gamma"]["c2"] == pytest.approx(0.28)
    assert table["models"]["integrable-alpha"]["c1"] == pytest.approx(0.2)


def test_oracle_refuses_large_chains() -> None:
    with pytest.raises(ResourceGuardError):
        oracle_check(_config(model={"n_sites": 6}))


def test_presets_build_valid_members() -> None:
    sizes = {name: len(preset_members(name)) for name in PRESETS}

    assert sizes["table1"] == 16
    assert sizes["fig4-gamma"] == 6
    assert sizes["fig5-both"] == 3
    assert [name for name, _ in preset_members("xxz-sector")] == [
        "alpha=0.01-gamma=0.01-epsilon=0.0",
        "alpha=0.01-gamma=0.01-epsilon=0.5",
        "alpha=0.05-gamma=0.01-epsilon=0.0",
        "alpha=0.05-gamma=0.01-epsilon=0.5",
    ]
    with pytest.raises(ConfigError):
        preset_members("fig9")


def test_cli_run_and_error_exit_codes(tmp_path: Path) -> None:
    args = ["--log-level", "WARNING", "run", "--out", str(tmp_path / "cli")]
    small = ["--set", "model.n_sites=2", "--set", "integration.t_max=10.0", "--set", "integration.points=50"]

    assert main(args + small) == 0
    assert (tmp_path / "cli" / FITS_FILENAME).exists()
    assert main(args + ["--set", "dissipation.alpha=-0.1"]) == 2


def test_cli_reads_toml_configuration(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_text('[model]\nn_sites = 1\ng = 0.0\n\n[initial_operator]\naxis = "X"\n\n[dissipation]\ngamma = 0.05\n', encoding="utf-8")

    code = main(["oracle-check", "--config", str(path), "--out", str(tmp_path / "oracle")])

    assert code == 0
    assert (tmp_path / "oracle" / ORACLE_FILENAME).exists()


@pytest.mark.slow
def test_six_site_closed_chain_fills_most_of_the_krylov_space(tmp_path: Path) -> None:
    config = _config(model={"n_sites": 6, "g": -1.05, "h": 0.5}, integration={"t_max": 10000.0, "points": 2000})

    result = run(config, tmp_path)

    krylov_dim = result.summary["krylov_dim"]
    assert 3500 <= krylov_dim <= 4033
    assert 0.35 * krylov_dim <= result.summary["saturation_K_o"] <= 0.65 * krylov_dim


@pytest.mark.slow
def test_dephasing_slope_matches_the_reference_value(tmp_path: Path) -> None:
    gamma = 0.10
    config = _config(model={"n_sites": 6}, dissipation={"gamma": gamma})

    result = run(config, tmp_path)

    assert result.summary["eta"] == pytest.approx(TABLE1_GAMMA[gamma][0], rel=0.15)


@pytest.mark.slow
def test_wall_is_touched_before_it_dominates(tmp_path: Path) -> None:
    config = _config(model={"n_sites": 6}, dissipation={"alpha": 0.1}, analysis={"wall_profiles": 200})

    run(config, tmp_path)

    steps = read_json(tmp_path / FITS_FILENAME)["wall_steps"]
    assert steps["n1"] is not None
    if steps["n2"] is not None:
        assert steps["n1"] <= steps["n2"]


def _members(preset: str, **overrides: float) -> dict[str, ExperimentConfig]:
    members = {}
    for name, config in preset_members(preset):
        for dotted, value in overrides.items():
            config = config.with_value(dotted.replace("__", "."), value)
        members[name] = config
    return members


@pytest.mark.slow
def test_bilanczos_reduces_to_lanczos_on_six_site_closed_chains() -> None:
    for config in _members("fig1-closed-tfim").values():
        system = build_open_system(config)

        closed, _ = lanczos(system.generator, system.seed)
        two_sided, _ = bilanczos(system.generator, system.seed)

        assert two_sided.krylov_dim == closed.krylov_dim
        assert np.max(np.abs(two_sided.a)) < 1e-8
        np.testing.assert_allclose(np.abs(two_sided.b), closed.c, rtol=1e-8)


@pytest.mark.slow
def test_closed_chaotic_chain_saturates_at_half_the_krylov_dimension(tmp_path: Path) -> None:
    members = _members("fig1-closed-tfim", integration__t_max=10000.0, integration__points=2000)

    summaries = {name: run(config, tmp_path / name).summary for name, config in members.items()}

    chaotic = summaries["chaotic"]
    half = chaotic["krylov_dim"] / 2
    assert abs(chaotic["saturation_K_o"] - half) <= 0.1 * half
    assert summaries["integrable"]["saturation_K_o"] <= 0.9 * chaotic["saturation_K_o"]


@pytest.mark.slow
def test_six_site_open_chains_keep_the_tridiagonal_properties() -> None:
    for config in _members("fig4-gamma").values():
        system = build_open_system(config)

        data, bases = bilanczos(system.generator, system.seed, store_bases=True)
        properties = tridiagonal_properties(data)

        assert properties["max_imag_c"] == 0.0
        assert properties["max_relative_bc_mismatch"] <= 1e-8
        assert properties["max_relative_real_a"] <= 1e-8
        assert biorthonormality_residual(bases) <= 1e-8


@pytest.mark.slow
def test_table_slopes_are_reproduced_and_linear(tmp_path: Path) -> None:
    table = run_preset("table1", tmp_path, workers=4)["eta_table"]

    for row in table["rows"]:
        assert row["relative_error"] <= 0.15
    for regime in ("integrable", "chaotic"):
        for axis in ("alpha", "gamma"):
            etas = [row["eta"] for row in table["rows"] if row["regime"] == regime and row[axis] > 0]
            assert etas == sorted(etas)
            assert len(set(etas)) == len(etas)
            assert table["models"][f"{regime}-{axis}"]["r_squared"] >= 0.99


@pytest.mark.slow
def test_weak_dissipation_saturates_alike_in_both_regimes(tmp_path: Path) -> None:
    members = _members("fig3-alpha")
    names = ("integrable-alpha=0.01", "chaotic-alpha=0.01")

    summaries = [run(members[name], tmp_path / name).summary for name in names]

    plateaus = [summary["saturation_K_o"] for summary in summaries]
    peaks = [summary["peak_K_o"] for summary in summaries]
    assert abs(plateaus[0] - plateaus[1]) <= 0.1 * max(plateaus)
    assert abs(peaks[0] - peaks[1]) >= 0.2 * max(peaks)


@pytest.mark.slow
def test_xxz_sector_runs_share_a_plateau(tmp_path: Path) -> None:
    members = _members("xxz-sector")
    names = ("alpha=0.01-gamma=0.01-epsilon=0.0", "alpha=0.01-gamma=0.01-epsilon=0.5")

    for name in names:
        run(members[name], tmp_path / name)
    fits = [read_json(tmp_path / name / FITS_FILENAME) for name in names]

    plateaus = [item["shape"]["saturation"] for item in fits]
    for item in fits:
        assert max(item["sector_leakage"].values()) < 1e-10
        assert item["shape"]["peak_above_plateau"]
    assert abs(plateaus[0] - plateaus[1]) <= 0.1 * max(plateaus)


@pytest.mark.slow
def test_finite_size_onset_and_seed_weight_ordering(tmp_path: Path) -> None:
    members = _members("finite-size")

    summaries = {name: run(config, tmp_path / name).summary for name, config in members.items()}

    onsets = [summaries[f"N={n_sites}"]["onset_index"] for n_sites in (4, 6, 8)]
    assert None not in onsets
    assert summaries["weight-3"]["decay_onset_time"] is not None
    assert onsets == sorted(onsets)
    assert len(set(onsets)) == 3
    assert summaries["weight-3"]["decay_onset_time"] < summaries["N=6"]["decay_onset_time"]
