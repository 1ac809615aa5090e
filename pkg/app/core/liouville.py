"""Operator space: column-stacking vectorization and (adjoint) Lindbladians.

With column stacking vec(A X B) = (B^T kron A) vec(X), so

    L_o = I kron H - H^T kron I
          - i sum_k [ L_k^T kron L_k^dag - 1/2 I kron M_k - 1/2 M_k^T kron I ],   M_k = L_k^dag L_k

implements L_o[X] = [H, X] - i sum_k (L_k^dag X L_k - 1/2 {M_k, X}).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import DomainError, ResourceGuardError
from .sectors import SectorBasis, embed_from_sector
from .spin_algebra import HERMITIAN_TOLERANCE, SpinOperator, frobenius_inner
from .storage import write_csv

logger = logging.getLogger(__name__)

MAX_SUPEROPERATOR_DIMENSION = 2**20
DENSE_SPECTRUM_LIMIT = 4096
TRIDIAGONAL_SPECTRUM_LIMIT = 8192
STABILITY_TOLERANCE = 1e-10


@dataclass(frozen=True, slots=True)
class SuperVector:
    amplitudes: np.ndarray
    n_sites: int
    basis_tag: str = "full"

    @property
    def dimension(self) -> int:
        return int(self.amplitudes.shape[0])

    def inner(self, other: SuperVector) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> SuperVector:
        norm = self.norm()
        if norm == 0.0:
            raise DomainError("cannot normalize the zero supervector")
        return SuperVector(self.amplitudes / norm, self.n_sites, self.basis_tag)


@dataclass(frozen=True, slots=True)
class SuperOperator:
    matrix: sp.csr_matrix
    n_sites: int
    basis_tag: str = "full"
    hermitian_flag: bool = False
    adjoint_matrix: sp.csr_matrix = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix, dtype=complex))
        if self.adjoint_matrix is None:
            object.__setattr__(self, "adjoint_matrix", self.matrix.conj().T.tocsr())

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def operator_dimension(self) -> int:
        return math.isqrt(self.dimension)

    def matvec(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector

    def rmatvec(self, vector: np.ndarray) -> np.ndarray:
        return self.adjoint_matrix @ vector

    def apply(self, op: SpinOperator) -> SpinOperator:
        return devectorize(SuperVector(self.matvec(vectorize(op).amplitudes), self.n_sites, self.basis_tag))

    def hermiticity_error(self) -> float:
        difference = self.matrix - self.adjoint_matrix
        if difference.nnz == 0:
            return 0.0
        return float(np.max(np.abs(difference.data)))


@dataclass(frozen=True, slots=True)
class StabilityReport:
    max_real_part: float
    passed: bool
    conjugate_pairs: bool
    pair_error: float
    dimension: int
    source: str

    def to_payload(self) -> dict[str, object]:
        return {
            "max_real_part": self.max_real_part,
            "passed": self.passed,
            "conjugate_pairs": self.conjugate_pairs,
            "pair_error": self.pair_error,
            "dimension": self.dimension,
            "source": self.source,
        }


def vectorize(op: SpinOperator) -> SuperVector:
    return SuperVector(op.to_dense().reshape(-1, order="F"), op.n_sites, op.basis_tag)


def devectorize(vector: SuperVector) -> SpinOperator:
    dimension = math.isqrt(vector.dimension)
    if dimension * dimension != vector.dimension:
        raise DomainError(f"supervector length {vector.dimension} is not a perfect square")
    matrix = vector.amplitudes.reshape((dimension, dimension), order="F")
    return SpinOperator(sp.csr_matrix(matrix), vector.n_sites, vector.basis_tag)


def vectorization_ratio(first: SpinOperator, second: SpinOperator) -> complex:
    """<<vec A|vec B>> / (A|B); equals the operator dimension D under column stacking."""
    frobenius = frobenius_inner(first, second)
    if frobenius == 0:
        raise DomainError("operators are Frobenius-orthogonal, the ratio is undefined")
    return vectorize(first).inner(vectorize(second)) / frobenius


def assert_vectorization_convention(probe: SpinOperator) -> float:
    ratio = vectorization_ratio(probe, probe)
    if abs(ratio - probe.dimension) > 1e-9 * probe.dimension:
        raise DomainError(f"vectorization ratio {ratio} differs from the operator dimension {probe.dimension}")
    return float(ratio.real)


def _guard_dimension(op: SpinOperator) -> None:
    dimension = op.dimension**2
    if dimension > MAX_SUPEROPERATOR_DIMENSION:
        raise ResourceGuardError("superoperator dimension", float(dimension), float(MAX_SUPEROPERATOR_DIMENSION), unit="rows")


def _check_hermitian(hamiltonian: SpinOperator) -> None:
    error = hamiltonian.hermiticity_error()
    if error > HERMITIAN_TOLERANCE * max(1.0, hamiltonian.max_abs()):
        raise DomainError(f"Hamiltonian is not Hermitian: max|H - H^dag| = {error:.3e}")


def _commutator_matrix(hamiltonian: SpinOperator) -> sp.csr_matrix:
    unit = sp.identity(hamiltonian.dimension, dtype=complex, format="csr")
    matrix = hamiltonian.matrix
    return sp.kron(unit, matrix, format="csr") - sp.kron(matrix.T, unit, format="csr")


def build_liouvillian(hamiltonian: SpinOperator) -> SuperOperator:
    _check_hermitian(hamiltonian)
    _guard_dimension(hamiltonian)
    return SuperOperator(
        _commutator_matrix(hamiltonian),
        hamiltonian.n_sites,
        hamiltonian.basis_tag,
        hermitian_flag=True,
    )


def build_lindbladian(hamiltonian: SpinOperator, jumps: Sequence[SpinOperator]) -> SuperOperator:
    if not jumps:
        return build_liouvillian(hamiltonian)
    _check_hermitian(hamiltonian)
    _guard_dimension(hamiltonian)
    for jump in jumps:
        if jump.dimension != hamiltonian.dimension:
            raise DomainError(f"jump dimension {jump.dimension} does not match H dimension {hamiltonian.dimension}")

    unit = sp.identity(hamiltonian.dimension, dtype=complex, format="csr")
    dissipator = sp.csr_matrix((hamiltonian.dimension**2, hamiltonian.dimension**2), dtype=complex)
    for jump in jumps:
        jump_matrix = jump.matrix
        decay = (jump_matrix.conj().T @ jump_matrix).tocsr()
        dissipator = dissipator + sp.kron(jump_matrix, jump_matrix.conj(), format="csr").T.tocsr()
        dissipator = dissipator - 0.5 * sp.kron(unit, decay, format="csr") - 0.5 * sp.kron(decay.T, unit, format="csr")

    matrix = _commutator_matrix(hamiltonian) - 1j * dissipator
    logger.debug("assembled Lindbladian: dimension %d, nnz %d, %d jumps", matrix.shape[0], matrix.nnz, len(jumps))
    return SuperOperator(matrix.tocsr(), hamiltonian.n_sites, hamiltonian.basis_tag, hermitian_flag=False)


def adjoint(superop: SuperOperator) -> SuperOperator:
    return SuperOperator(
        superop.adjoint_matrix,
        superop.n_sites,
        superop.basis_tag,
        hermitian_flag=superop.hermitian_flag,
        adjoint_matrix=superop.matrix,
    )


def _conjugate_pair_error(eigenvalues: np.ndarray) -> float:
    if eigenvalues.size == 0:
        return 0.0
    points = np.column_stack([eigenvalues.real, eigenvalues.imag])
    mirrored = np.column_stack([eigenvalues.real, -eigenvalues.imag])
    distances, _ = cKDTree(points).query(mirrored)
    return float(np.max(distances))


def generator_spectrum_check(
    superop: SuperOperator | None = None,
    tridiagonal: sp.spmatrix | None = None,
    tolerance: float = STABILITY_TOLERANCE,
) -> StabilityReport:
    """Routh-Hurwitz style check: every eigenvalue of i*L_o has non-positive real part."""
    if superop is not None and superop.dimension <= DENSE_SPECTRUM_LIMIT:
        dense = superop.matrix.toarray()
        source = "superoperator"
    elif tridiagonal is not None:
        if tridiagonal.shape[0] > TRIDIAGONAL_SPECTRUM_LIMIT:
            raise ResourceGuardError(
                "tridiagonal spectrum", float(tridiagonal.shape[0]), float(TRIDIAGONAL_SPECTRUM_LIMIT), unit="rows"
            )
        dense = sp.csr_matrix(tridiagonal).toarray()
        source = "tridiagonal"
    elif superop is not None:
        raise ResourceGuardError(
            "dense spectrum", float(superop.dimension), float(DENSE_SPECTRUM_LIMIT), unit="rows"
        )
    else:
        raise DomainError("generator_spectrum_check needs a superoperator or a tridiagonal matrix")

    eigenvalues = la.eigvals(1j * dense)
    max_real = float(np.max(eigenvalues.real)) if eigenvalues.size else 0.0
    pair_error = _conjugate_pair_error(eigenvalues)
    scale = max(1.0, float(np.max(np.abs(eigenvalues)))) if eigenvalues.size else 1.0
    report = StabilityReport(
        max_real_part=max_real,
        passed=max_real <= tolerance,
        conjugate_pairs=pair_error <= 1e-8 * scale,
        pair_error=pair_error,
        dimension=int(dense.shape[0]),
        source=source,
    )
    if not report.passed:
        logger.warning("stability check failed: max Re(spec iL_o) = %.3e", max_real)
    return report


def superoperator_leakage(
    full: SuperOperator,
    basis: SectorBasis,
    probes: Sequence[SpinOperator],
) -> float:
    """Largest weight that ``full`` moves from sector operators ``probes`` out of the sector block."""
    vectors = basis.vectors
    worst = 0.0
    for probe in probes:
        lifted = embed_from_sector(probe, basis)
        image = full.apply(lifted).matrix
        inside = vectors @ (vectors.conj().T @ image @ vectors) @ vectors.conj().T
        outside = (image - inside).tocsr()
        if outside.nnz:
            worst = max(worst, float(np.max(np.abs(outside.data))))
    return worst


def export_triplets(superop: SuperOperator, path: Path) -> None:
    coo = superop.matrix.tocoo()
    rows = (
        (int(row), int(col), float(value.real), float(value.imag))
        for row, col, value in zip(coo.row, coo.col, coo.data)
    )
    write_csv(path, ["row", "col", "re", "im"], rows)
