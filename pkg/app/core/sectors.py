"""Total-spin and reflection-parity sectors of the spin chain."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, SymmetryViolationError
from .spin_algebra import SpinOperator, check_site_count, commutator, site_operator

SYMMETRY_TOLERANCE = 1e-10


def _reflect_state(state: int, n_sites: int) -> int:
    return int(format(state, f"0{n_sites}b")[::-1], 2)


def _up_count(state: int, n_sites: int) -> int:
    # bit 0 of a site is spin up
    return n_sites - bin(state).count("1")


def total_spin_operator(n_sites: int) -> SpinOperator:
    check_site_count(n_sites)
    total = site_operator(n_sites, 1, "Z", 0.5)
    for site in range(2, n_sites + 1):
        total = total + site_operator(n_sites, site, "Z", 0.5)
    return total


def reflection_operator(n_sites: int) -> SpinOperator:
    """Site reflection i <-> N+1-i as a permutation of computational states."""
    check_site_count(n_sites)
    dimension = 2**n_sites
    rows = np.array([_reflect_state(state, n_sites) for state in range(dimension)])
    cols = np.arange(dimension)
    matrix = sp.csr_matrix((np.ones(dimension, dtype=complex), (rows, cols)), shape=(dimension, dimension))
    return SpinOperator(matrix, n_sites)


@dataclass(frozen=True, slots=True)
class SectorBasis:
    n_sites: int
    total_spin: float
    parity: int
    vectors: sp.csr_matrix

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def tag(self) -> str:
        return f"sector(S={self.total_spin:g},P={self.parity:+d})"

    @property
    def is_empty(self) -> bool:
        return self.dimension == 0


def build_sector_basis(n_sites: int, total_spin: float, parity: int) -> SectorBasis:
    check_site_count(n_sites)
    if parity not in (1, -1):
        raise DomainError(f"parity must be +1 or -1, got {parity}")
    up_target = n_sites / 2 + total_spin
    if abs(up_target - round(up_target)) > 1e-9 or not 0 <= round(up_target) <= n_sites:
        raise DomainError(f"total spin {total_spin} is incompatible with {n_sites} sites")
    n_up = round(up_target)

    rows: list[int] = []
    cols: list[int] = []
    values: list[float] = []
    column = 0
    for state in range(2**n_sites):
        if _up_count(state, n_sites) != n_up:
            continue
        partner = _reflect_state(state, n_sites)
        if partner < state:
            continue
        if partner == state:
            if parity == 1:
                rows.append(state)
                cols.append(column)
                values.append(1.0)
                column += 1
            continue
        rows.extend([state, partner])
        cols.extend([column, column])
        values.extend([1.0 / math.sqrt(2), parity / math.sqrt(2)])
        column += 1

    vectors = sp.csr_matrix(
        (np.array(values, dtype=complex), (np.array(rows, dtype=int), np.array(cols, dtype=int))),
        shape=(2**n_sites, column),
    )
    return SectorBasis(n_sites=n_sites, total_spin=float(total_spin), parity=parity, vectors=vectors)


def symmetry_residuals(op: SpinOperator) -> dict[str, float]:
    return {
        "total_spin": commutator(op, total_spin_operator(op.n_sites)).max_abs(),
        "parity": commutator(op, reflection_operator(op.n_sites)).max_abs(),
    }


def project_to_sector(
    op: SpinOperator,
    basis: SectorBasis,
    tolerance: float = SYMMETRY_TOLERANCE,
) -> SpinOperator:
    if not op.is_full_space:
        raise DomainError(f"projection needs a full-space operator, got {op.basis_tag}")
    if op.dimension != 2**basis.n_sites:
        raise DomainError(f"dimension mismatch: operator {op.dimension}, sector parent {2**basis.n_sites}")
    for symmetry, norm in symmetry_residuals(op).items():
        if norm > tolerance:
            raise SymmetryViolationError(symmetry, norm, tolerance)

    vectors = basis.vectors
    block = vectors.conj().T @ op.matrix @ vectors
    return SpinOperator(sp.csr_matrix(block), op.n_sites, basis.tag)


def embed_from_sector(op: SpinOperator, basis: SectorBasis) -> SpinOperator:
    if op.dimension != basis.dimension:
        raise DomainError(f"dimension mismatch: operator {op.dimension}, sector {basis.dimension}")
    vectors = basis.vectors
    return SpinOperator(vectors @ op.matrix @ vectors.conj().T, op.n_sites)


def sector_leakage(op: SpinOperator, basis: SectorBasis) -> float:
    """Largest amplitude the full-space ``op`` sends from the sector to its complement."""
    if basis.is_empty:
        return 0.0
    vectors = basis.vectors
    image = op.matrix @ vectors
    outside = image - vectors @ (vectors.conj().T @ image)
    if outside.nnz == 0:
        return 0.0
    return float(np.max(np.abs(outside.toarray())))
