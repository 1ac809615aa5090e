from pathlib import Path

import numpy as np
import pytest

from app.core.errors import BreakdownError, DomainError, PropertyViolationError, ResourceGuardError
from app.core.krylov import (
    BREAKDOWN,
    MAX_STEPS,
    TridiagonalData,
    arnoldi,
    bilanczos,
    bilanczos_state,
    biorthonormality_residual,
    effective_tridiagonal,
    krylov_dimension_bound,
    lanczos,
    reconstruction_residual,
    tridiagonal_matrix,
    tridiagonal_properties,
    write_coefficients,
)
from app.core.liouville import SuperVector, build_lindbladian, build_liouvillian, vectorize
from app.core.spin_algebra import (
    build_tfim_hamiltonian,
    build_tfim_jump_operators,
    normalized,
    site_operator,
    zero,
)
from app.core.storage import read_csv


def _seed(n_sites: int, site: int = 1, axis: str = "Z") -> SuperVector:
    return vectorize(normalized(site_operator(n_sites, site, axis))).normalized()


def _open_tfim(n_sites: int, alpha: float, gamma: float, g: float = -1.05, h: float = 0.5):
    return build_lindbladian(build_tfim_hamiltonian(n_sites, g, h), build_tfim_jump_operators(n_sites, alpha, gamma))


def test_dimension_bound() -> None:
    assert krylov_dimension_bound(64) == 4033
    assert krylov_dimension_bound(2) == 3
    with pytest.raises(DomainError):
        krylov_dimension_bound(0)


def test_single_site_closed_tfim_has_one_coefficient() -> None:
    generator = build_liouvillian(build_tfim_hamiltonian(1, 1.0, 0.0))

    data, _ = bilanczos(generator, _seed(1))

    assert data.krylov_dim == 2
    assert data.termination_reason == BREAKDOWN
    np.testing.assert_allclose(data.c, [2.0], atol=1e-12)
    np.testing.assert_allclose(data.b, [2.0], atol=1e-12)
    assert np.max(np.abs(data.a)) < 1e-12


def test_bilanczos_reduces_to_lanczos_for_closed_systems() -> None:
    generator = build_liouvillian(build_tfim_hamiltonian(2, -1.05, 0.5))
    seed = _seed(2)

    closed, _ = lanczos(generator, seed)
    two_sided, _ = bilanczos(generator, seed)

    assert two_sided.krylov_dim == closed.krylov_dim
    assert np.max(np.abs(two_sided.a)) < 1e-8
    np.testing.assert_allclose(two_sided.c, closed.c, rtol=1e-8)
    np.testing.assert_allclose(np.abs(two_sided.b), closed.c, rtol=1e-8)


def test_lanczos_rejects_dissipative_generators() -> None:
    with pytest.raises(DomainError):
        lanczos(_open_tfim(2, 0.1, 0.1), _seed(2))


def test_open_tfim_satisfies_the_tridiagonal_properties() -> None:
    generator = _open_tfim(2, 0.1, 0.05)

    data, bases = bilanczos(generator, _seed(2), store_bases=True)
    properties = tridiagonal_properties(data)

    assert bases is not None
    assert data.c.dtype == np.float64
    assert properties["max_relative_bc_mismatch"] <= 1e-8
    assert properties["max_relative_real_a"] <= 1e-8
    assert biorthonormality_residual(bases) <= 1e-8
    assert reconstruction_residual(generator, data, bases) <= 1e-8
    assert data.krylov_dim <= 16


def test_open_generator_may_exceed_the_closed_bound() -> None:
    data, _ = bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2))

    assert data.krylov_dim == 14
    assert data.termination_reason == BREAKDOWN
    assert data.diagnostics["exceeds_closed_bound"]


def test_closed_generator_stops_at_the_closed_bound() -> None:
    data, _ = bilanczos(build_liouvillian(build_tfim_hamiltonian(2, -1.05, 0.5)), _seed(2))

    assert data.krylov_dim <= krylov_dimension_bound(4)
    assert not data.diagnostics["exceeds_closed_bound"]


def test_effective_data_keeps_the_sign_of_the_decay() -> None:
    data, _ = bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2))

    eff = effective_tridiagonal(data)

    np.testing.assert_allclose(eff.abs_a, data.a.imag)
    np.testing.assert_allclose(eff.abs_b, data.c, rtol=1e-8)
    assert eff.abs_a[0] >= 0


def test_single_mode_dephasing_stops_after_one_vector() -> None:
    gamma = 0.05
    generator = build_lindbladian(zero(1), build_tfim_jump_operators(1, 0.0, gamma))

    data, _ = bilanczos(generator, _seed(1, axis="X"))

    assert data.krylov_dim == 1
    np.testing.assert_allclose(data.a, [2j * gamma], atol=1e-15)
    np.testing.assert_allclose(effective_tridiagonal(data).abs_a, [2 * gamma])


def test_annihilated_seed_is_a_breakdown_error() -> None:
    generator = build_lindbladian(zero(1), build_tfim_jump_operators(1, 0.0, 0.05))
    with pytest.raises(BreakdownError):
        bilanczos(generator, _seed(1, axis="Z"))


def test_seed_must_be_normalized() -> None:
    generator = build_liouvillian(build_tfim_hamiltonian(2, 1.0, 0.0))
    seed = vectorize(site_operator(2, 1, "Z"))
    with pytest.raises(DomainError):
        bilanczos(generator, seed)


def test_max_steps_truncates_the_iteration() -> None:
    data, bases = bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2), max_steps=3, store_bases=True)
    assert data.krylov_dim == 3
    assert data.termination_reason == MAX_STEPS
    assert bases is not None and bases.size == 3


def test_memory_guard_fires_before_iterating() -> None:
    with pytest.raises(ResourceGuardError) as info:
        bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2), memory_cap_bytes=100)
    assert info.value.estimate > info.value.cap


def test_unreorthogonalized_run_still_returns_coefficients() -> None:
    data, bases = bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2), reorth="none", store_bases=False)
    assert bases is None
    assert data.krylov_dim >= 2


def test_arnoldi_matches_lanczos_on_hermitian_generators() -> None:
    generator = build_liouvillian(build_tfim_hamiltonian(2, -1.05, 0.5))
    closed, _ = lanczos(generator, _seed(2))

    hessenberg = arnoldi(generator, _seed(2))

    size = min(closed.krylov_dim, hessenberg.krylov_dim) - 1
    np.testing.assert_allclose(hessenberg.subdiagonal[:size], closed.c[:size], rtol=1e-8)


def test_tridiagonal_layout() -> None:
    data = TridiagonalData(a=[1j, 2j, 3j], b=[4, 5], c=[4, 5], termination_reason=MAX_STEPS)

    matrix = tridiagonal_matrix(data).toarray()

    np.testing.assert_allclose(np.diag(matrix), [1j, 2j, 3j])
    np.testing.assert_allclose(np.diag(matrix, 1), [4, 5])
    np.testing.assert_allclose(np.diag(matrix, -1), [4, 5])


def test_tridiagonal_data_validates_lengths_and_signs() -> None:
    with pytest.raises(DomainError):
        TridiagonalData(a=[0j, 0j], b=[1, 2], c=[1], termination_reason=MAX_STEPS)
    with pytest.raises(DomainError):
        TridiagonalData(a=[0j, 0j], b=[1], c=[-1], termination_reason=MAX_STEPS)


def test_effective_data_rejects_real_diagonals() -> None:
    data = TridiagonalData(a=[0.5 + 0.1j, 0.2j], b=[1], c=[1], termination_reason=MAX_STEPS)
    with pytest.raises(PropertyViolationError) as info:
        effective_tridiagonal(data)
    assert info.value.index == 0


def test_effective_data_rejects_mismatched_off_diagonals() -> None:
    data = TridiagonalData(a=[0j, 0j, 0j], b=[1, 2], c=[1, 1], termination_reason=MAX_STEPS)
    with pytest.raises(PropertyViolationError) as info:
        effective_tridiagonal(data)
    assert info.value.index == 2


def test_state_bilanczos_on_a_hermitian_hamiltonian_keeps_the_spectrum() -> None:
    hamiltonian = build_tfim_hamiltonian(3, -1.05, 0.5)
    state = np.zeros(8, dtype=complex)
    state[0] = 1.0

    data = bilanczos_state(hamiltonian, state)

    spectrum = np.linalg.eigvalsh(hamiltonian.to_dense())
    for value in np.linalg.eigvals(tridiagonal_matrix(data).toarray()):
        assert np.min(np.abs(spectrum - value)) < 1e-8
    np.testing.assert_allclose(np.abs(data.b), data.c, rtol=1e-8)


def test_coefficients_are_written_with_a_header(tmp_path: Path) -> None:
    data, _ = bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2))
    target = tmp_path / "coefficients.csv"

    write_coefficients(data, target, {"n_sites": 2})

    metadata, rows = read_csv(target)
    assert metadata["krylov_dim"] == data.krylov_dim
    assert metadata["n_sites"] == 2
    assert list(rows[0]) == ["n", "re_a", "im_a", "re_b", "im_b", "c"]
    assert len(rows) == data.krylov_dim
    assert rows[0]["c"] == ""
    assert float(rows[1]["c"]) == pytest.approx(data.c[0])


def test_effective_data_keeps_negative_couplings() -> None:
    data = TridiagonalData(a=[0.1j, 0.2j, 0.3j], b=[1.0, -0.7], c=[1.0, 0.7], termination_reason=MAX_STEPS)

    eff = effective_tridiagonal(data)

    np.testing.assert_array_equal(eff.b_signs, [1.0, -1.0])
    np.testing.assert_allclose(eff.abs_b, [1.0, 0.7])
    np.testing.assert_allclose(eff.abs_a, [0.1, 0.2, 0.3])


def test_effective_data_rejects_complex_coupling_phases() -> None:
    data = TridiagonalData(a=[0j, 0j], b=[1j], c=[1.0], termination_reason=MAX_STEPS)
    with pytest.raises(PropertyViolationError) as info:
        effective_tridiagonal(data)
    assert info.value.index == 1


def test_open_tfim_has_a_negative_coupling() -> None:
    data, _ = bilanczos(_open_tfim(2, 0.1, 0.05), _seed(2))

    eff = effective_tridiagonal(data)

    assert np.any(eff.b_signs < 0)
    np.testing.assert_allclose(eff.b_signs * eff.abs_b, data.b.real, rtol=1e-8)


def test_state_bilanczos_on_a_non_hermitian_hamiltonian() -> None:
    hamiltonian = np.array([[0.0, 1.0], [0.5, 0.0]])

    data = bilanczos_state(hamiltonian, np.array([1.0, 0.0]))

    np.testing.assert_allclose(data.a, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(data.c, [0.5])
    np.testing.assert_allclose(data.b, [1.0])
    np.testing.assert_allclose(tridiagonal_matrix(data).toarray(), hamiltonian)
