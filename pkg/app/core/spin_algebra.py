"""Spin-chain operators on the 2^N Hilbert space.

Site 1 is the leftmost tensor factor; basis state 0 of every factor is spin up
(sigma^z = +1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
import math
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResourceGuardError

MAX_SITES = 14
MAX_DECOMPOSITION_SITES = 10
DROP_TOLERANCE = 1e-14
HERMITIAN_TOLERANCE = 1e-12

SITE_FACTORS: dict[str, np.ndarray] = {
    "I": np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    # sigma^+- = (sigma^x +- i sigma^y) / 2
    "+": np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex),
    "-": np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex),
}
PAULI_AXES = ("I", "X", "Y", "Z")
_PAULI_BASIS = np.stack([SITE_FACTORS[axis] for axis in PAULI_AXES])


def check_site_count(n_sites: int, limit: int = MAX_SITES) -> None:
    if n_sites < 1:
        raise DomainError(f"number of sites must be positive, got {n_sites}")
    if n_sites > limit:
        raise ResourceGuardError("Hilbert space", float(2**n_sites), float(2**limit), unit="states")


def _check_site(n_sites: int, site: int) -> None:
    if not 1 <= site <= n_sites:
        raise DomainError(f"site index {site} outside 1..{n_sites}")


def _prune(matrix: sp.spmatrix) -> sp.csr_matrix:
    pruned = sp.csr_matrix(matrix, dtype=complex, copy=True)
    pruned.data[np.abs(pruned.data) < DROP_TOLERANCE] = 0.0
    pruned.eliminate_zeros()
    pruned.sort_indices()
    return pruned


@dataclass(frozen=True, slots=True)
class PauliString:
    factors: tuple[str, ...]
    coefficient: complex = 1.0

    def __post_init__(self) -> None:
        if not self.factors:
            raise DomainError("a Pauli string needs at least one site")
        unknown = [label for label in self.factors if label not in SITE_FACTORS]
        if unknown:
            raise DomainError(f"unknown site factors: {unknown}")

    @classmethod
    def from_sites(cls, n_sites: int, sites: dict[int, str], coefficient: complex = 1.0) -> PauliString:
        check_site_count(n_sites)
        labels = ["I"] * n_sites
        for site, label in sites.items():
            _check_site(n_sites, site)
            labels[site - 1] = label
        return cls(factors=tuple(labels), coefficient=coefficient)

    @property
    def length(self) -> int:
        return len(self.factors)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(index + 1 for index, label in enumerate(self.factors) if label != "I")

    def to_payload(self) -> dict[str, Any]:
        value = complex(self.coefficient)
        return {
            "terms": [
                {"site": index + 1, "axis": label} for index, label in enumerate(self.factors) if label != "I"
            ],
            "re": value.real,
            "im": value.imag,
        }


@dataclass(frozen=True, slots=True)
class SpinOperator:
    matrix: sp.csr_matrix
    n_sites: int
    basis_tag: str = "full"

    def __post_init__(self) -> None:
        rows, cols = self.matrix.shape
        if rows != cols:
            raise DomainError(f"spin operators are square, got shape {self.matrix.shape}")
        object.__setattr__(self, "matrix", _prune(self.matrix))

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def is_full_space(self) -> bool:
        return self.basis_tag == "full"

    def dagger(self) -> SpinOperator:
        return SpinOperator(self.matrix.conj().T, self.n_sites, self.basis_tag)

    def scaled(self, factor: complex) -> SpinOperator:
        return SpinOperator(self.matrix * factor, self.n_sites, self.basis_tag)

    def __add__(self, other: SpinOperator) -> SpinOperator:
        _check_same_space(self, other)
        return SpinOperator(self.matrix + other.matrix, self.n_sites, self.basis_tag)

    def __sub__(self, other: SpinOperator) -> SpinOperator:
        _check_same_space(self, other)
        return SpinOperator(self.matrix - other.matrix, self.n_sites, self.basis_tag)

    def __matmul__(self, other: SpinOperator) -> SpinOperator:
        _check_same_space(self, other)
        return SpinOperator(self.matrix @ other.matrix, self.n_sites, self.basis_tag)

    def max_abs(self) -> float:
        if self.matrix.nnz == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix.data)))

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def hermiticity_error(self) -> float:
        return (self - self.dagger()).max_abs()

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _check_same_space(first: SpinOperator, second: SpinOperator) -> None:
    if first.dimension != second.dimension:
        raise DomainError(f"dimension mismatch: {first.dimension} vs {second.dimension}")


def identity(n_sites: int) -> SpinOperator:
    check_site_count(n_sites)
    return SpinOperator(sp.identity(2**n_sites, dtype=complex, format="csr"), n_sites)


def zero(n_sites: int) -> SpinOperator:
    check_site_count(n_sites)
    dimension = 2**n_sites
    return SpinOperator(sp.csr_matrix((dimension, dimension), dtype=complex), n_sites)


def build_pauli_operator(spec: PauliString) -> SpinOperator:
    check_site_count(spec.length)
    factors = [sp.csr_matrix(SITE_FACTORS[label]) for label in spec.factors]
    matrix = reduce(lambda left, right: sp.kron(left, right, format="csr"), factors)
    return SpinOperator(matrix * spec.coefficient, spec.length)


def site_operator(n_sites: int, site: int, axis: str, coefficient: complex = 1.0) -> SpinOperator:
    return build_pauli_operator(PauliString.from_sites(n_sites, {site: axis}, coefficient))


def bond_operator(n_sites: int, first: int, second: int, axis: str, coefficient: complex = 1.0) -> SpinOperator:
    return build_pauli_operator(PauliString.from_sites(n_sites, {first: axis, second: axis}, coefficient))


def _sum_operators(n_sites: int, terms: Iterable[SpinOperator]) -> SpinOperator:
    return reduce(lambda left, right: left + right, terms, zero(n_sites))


def build_tfim_hamiltonian(n_sites: int, g: float, h: float) -> SpinOperator:
    check_site_count(n_sites)
    terms: list[SpinOperator] = []
    for site in range(1, n_sites):
        terms.append(bond_operator(n_sites, site, site + 1, "Z", -1.0))
    for site in range(1, n_sites + 1):
        if g:
            terms.append(site_operator(n_sites, site, "X", -g))
        if h:
            terms.append(site_operator(n_sites, site, "Z", -h))
    return _sum_operators(n_sites, terms)


def mirror_site(n_sites: int, site: int) -> int:
    return n_sites + 1 - site


def default_defect_site(n_sites: int) -> int:
    return math.ceil((n_sites + 1) / 2)


def build_xxz_hamiltonian(
    n_sites: int,
    J: float,
    J_zz: float,
    epsilon: float = 0.0,
    defect_site: int | None = None,
    defect_mode: str = "site",
) -> SpinOperator:
    check_site_count(n_sites)
    if n_sites < 2:
        raise DomainError("the XXZ chain needs at least two sites")
    site = default_defect_site(n_sites) if defect_site is None else defect_site
    _check_site(n_sites, site)
    if defect_mode not in ("site", "mirrored"):
        raise DomainError(f"unknown defect mode {defect_mode!r}")

    # S^a = sigma^a / 2, so every bond carries a factor 1/4.
    terms: list[SpinOperator] = []
    for left in range(1, n_sites):
        if J:
            terms.append(bond_operator(n_sites, left, left + 1, "X", J / 4))
            terms.append(bond_operator(n_sites, left, left + 1, "Y", J / 4))
        if J_zz:
            terms.append(bond_operator(n_sites, left, left + 1, "Z", J_zz / 4))

    if epsilon:
        partner = mirror_site(n_sites, site)
        if defect_mode == "site" or partner == site:
            terms.append(site_operator(n_sites, site, "Z", epsilon / 2))
        else:
            terms.append(site_operator(n_sites, site, "Z", epsilon / 4))
            terms.append(site_operator(n_sites, partner, "Z", epsilon / 4))
    return _sum_operators(n_sites, terms)


def _check_rates(alpha: float, gamma: float) -> None:
    if alpha < 0 or gamma < 0:
        raise DomainError(f"dissipation rates must be non-negative, got alpha={alpha}, gamma={gamma}")


def build_tfim_jump_operators(n_sites: int, alpha: float, gamma: float) -> list[SpinOperator]:
    check_site_count(n_sites)
    _check_rates(alpha, gamma)
    jumps: list[SpinOperator] = []
    if alpha > 0:
        amplitude = math.sqrt(alpha)
        edges = [1] if n_sites == 1 else [1, n_sites]
        for site in edges:
            jumps.append(site_operator(n_sites, site, "+", amplitude))
            jumps.append(site_operator(n_sites, site, "-", amplitude))
    if gamma > 0:
        amplitude = math.sqrt(gamma)
        jumps.extend(site_operator(n_sites, site, "Z", amplitude) for site in range(1, n_sites + 1))
    return jumps


def _flip_flop(n_sites: int, left: int) -> SpinOperator:
    return bond_operator(n_sites, left, left + 1, "X") + bond_operator(n_sites, left, left + 1, "Y")


def build_xxz_jump_operators(
    n_sites: int,
    alpha: float,
    gamma: float,
    reflection_symmetric: bool = False,
) -> list[SpinOperator]:
    """Boundary flip-flop and bulk dephasing jumps for the XXZ chain.

    Every returned operator conserves the total magnetization. The default set is
    closed under site reflection (L_1 <-> L_N, sigma^z_i <-> sigma^z_{N+1-i});
    with ``reflection_symmetric`` each operator commutes with the reflection on
    its own, which is what a parity-sector projection needs.
    """
    check_site_count(n_sites)
    if n_sites < 3:
        raise DomainError("XXZ boundary jumps need at least three sites")
    _check_rates(alpha, gamma)

    jumps: list[SpinOperator] = []
    if alpha > 0:
        first = _flip_flop(n_sites, 1)
        last = _flip_flop(n_sites, n_sites - 1)
        amplitude = math.sqrt(alpha)
        if reflection_symmetric:
            jumps.append((first + last).scaled(amplitude / math.sqrt(2)))
        else:
            jumps.extend([first.scaled(amplitude), last.scaled(amplitude)])

    if gamma > 0:
        amplitude = math.sqrt(gamma)
        if not reflection_symmetric:
            jumps.extend(site_operator(n_sites, site, "Z", amplitude) for site in range(1, n_sites + 1))
        else:
            for site in range(1, n_sites // 2 + 1):
                pair = site_operator(n_sites, site, "Z") + site_operator(n_sites, mirror_site(n_sites, site), "Z")
                jumps.append(pair.scaled(amplitude / math.sqrt(2)))
            if n_sites % 2:
                jumps.append(site_operator(n_sites, default_defect_site(n_sites), "Z", amplitude))
    return jumps


def z_string_operator(n_sites: int, sites: Sequence[int]) -> SpinOperator:
    """Product of sigma^z over ``sites`` (weight-k seed)."""
    if not sites:
        raise DomainError("a seed operator needs at least one site")
    return build_pauli_operator(PauliString.from_sites(n_sites, {site: "Z" for site in sites}))


def spin_pair_operator(n_sites: int, site: int) -> SpinOperator:
    """S^z_i + S^z_{N-i+1}; collapses to S^z_i at the middle of odd chains."""
    _check_site(n_sites, site)
    partner = mirror_site(n_sites, site)
    if partner == site:
        return site_operator(n_sites, site, "Z", 0.5)
    return site_operator(n_sites, site, "Z", 0.5) + site_operator(n_sites, partner, "Z", 0.5)


def frobenius_inner(first: SpinOperator, second: SpinOperator) -> complex:
    _check_same_space(first, second)
    overlap = first.matrix.conj().multiply(second.matrix).sum()
    return complex(overlap) / first.dimension


def frobenius_norm(op: SpinOperator) -> float:
    return math.sqrt(max(frobenius_inner(op, op).real, 0.0))


def normalized(op: SpinOperator) -> SpinOperator:
    norm = frobenius_norm(op)
    if norm == 0.0:
        raise DomainError("cannot normalize the zero operator")
    return op.scaled(1.0 / norm)


def commutator(first: SpinOperator, second: SpinOperator) -> SpinOperator:
    return first @ second - second @ first


def pauli_coefficients(op: SpinOperator) -> np.ndarray:
    """Coefficients c[p_1, ..., p_N] with op = sum c * sigma_{p_1} x ... x sigma_{p_N}.

    Axis order of each index follows ``PAULI_AXES``.
    """
    if not op.is_full_space:
        raise DomainError("Pauli decomposition is only defined on the full 2^N space")
    n_sites = op.n_sites
    check_site_count(n_sites, MAX_DECOMPOSITION_SITES)

    tensor = op.to_dense().reshape([2] * (2 * n_sites))
    conjugate_basis = _PAULI_BASIS.conj()
    for remaining in range(n_sites, 0, -1):
        # Contract the leading row index with its column partner; the new Pauli index goes last.
        tensor = np.tensordot(tensor, conjugate_basis, axes=([0, remaining], [1, 2]))
    return tensor / 2**n_sites


def pauli_decompose(op: SpinOperator, tolerance: float = 1e-13) -> list[PauliString]:
    coefficients = pauli_coefficients(op)
    strings: list[PauliString] = []
    for index in zip(*np.nonzero(np.abs(coefficients) > tolerance)):
        factors = tuple(PAULI_AXES[axis] for axis in index)
        strings.append(PauliString(factors=factors, coefficient=complex(coefficients[index])))
    return strings


def pauli_recompose(strings: Sequence[PauliString], n_sites: int) -> SpinOperator:
    return _sum_operators(n_sites, (build_pauli_operator(item) for item in strings))


def pauli_strings_to_json(strings: Sequence[PauliString]) -> list[dict[str, Any]]:
    return [item.to_payload() for item in strings]
