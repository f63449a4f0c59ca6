"""Sparse Pauli operators, state containers, and the system/bath partial trace.

Conventions used everywhere in this package:

* qubit 1 is the most significant bit of the basis index,
* bit value 0 means spin up (sigma^z eigenvalue +1),
* on a joint register the system qubits occupy the high bits and the
  bath qubits the low bits, so tracing out the bath is a contiguous
  block sum over the fast index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseOperator",
    "StateVector",
    "DensityMatrix",
    "site_pauli",
    "identity_op",
    "apply",
    "partial_trace_bath",
    "weighted_branch_assemble",
]

# Dense Hermiticity check is exact below this dimension; above it we sample.
_DENSE_CHECK_DIM = 64


@dataclass(frozen=True)
class SparseOperator:
    """Hermitian-by-default operator on an n-qubit space, stored as CSR."""

    n_qubits: int
    matrix: sp.csr_matrix
    hermitian: bool = True

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        dim = 1 << self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match 2^{self.n_qubits}"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


def _make_operator(n_qubits: int, matrix: sp.spmatrix, hermitian: bool = True) -> SparseOperator:
    """Normalize to CSR, prune exact zeros, and verify Hermiticity."""
    csr = sp.csr_matrix(matrix, dtype=np.complex128)
    csr.eliminate_zeros()
    csr.sort_indices()
    if hermitian:
        _check_hermitian(csr)
    return SparseOperator(n_qubits=n_qubits, matrix=csr, hermitian=hermitian)


def _check_hermitian(csr: sp.csr_matrix) -> None:
    dim = csr.shape[0]
    if dim <= _DENSE_CHECK_DIM:
        if (csr != csr.conj().T).nnz != 0:
            raise ValueError("operator is not exactly Hermitian")
        return
    # Spot-check on larger operators: <u|A|v> == conj(<v|A|u>) for a few
    # fixed pseudo-random vector pairs.
    rng = np.random.default_rng(0)
    for _ in range(3):
        u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        lhs = np.vdot(u, csr @ v)
        rhs = np.conj(np.vdot(v, csr @ u))
        scale = max(1.0, abs(lhs))
        if abs(lhs - rhs) > 1e-9 * scale:
            raise ValueError("operator failed the Hermiticity spot-check")


@dataclass
class StateVector:
    """Pure state on n qubits; amplitudes indexed by the basis convention above."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError("amplitude vector length does not match qubit count")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def basis_state(n_qubits: int, index: int) -> StateVector:
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(n_qubits, amps)


@dataclass
class DensityMatrix:
    """Mixed state on n qubits, dense Hermitian matrix."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        dim = 1 << self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError("density matrix shape does not match qubit count")
        herm_err = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm_err > 1e-12:
            raise ValueError(f"density matrix not Hermitian (max dev {herm_err:.2e})")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def validate(self, trace_tol: float = 1e-10, eig_floor: float = -1e-10) -> None:
        """Full physicality check: unit trace and positive semidefiniteness."""
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace()} deviates from 1 beyond {trace_tol}")
        evals = np.linalg.eigvalsh(self.matrix)
        if evals.min() < eig_floor:
            raise ValueError(f"negative eigenvalue {evals.min():.2e} below {eig_floor}")


_AXES = ("x", "y", "z")


def site_pauli(axis: str, site: int, n_qubits: int) -> SparseOperator:
    """Pauli operator on one site, identity elsewhere.

    `site` is 1-based and site 1 is the most significant bit, so the
    operator flips / signs bit position (n_qubits - site) of the basis index.
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    if not 1 <= site <= n_qubits:
        raise ValueError(f"site {site} out of range for {n_qubits} qubits")
    dim = 1 << n_qubits
    bit = n_qubits - site
    mask = 1 << bit
    idx = np.arange(dim, dtype=np.int64)
    if axis == "z":
        # +1 on bit 0 (up), -1 on bit 1 (down)
        vals = np.where(idx & mask, -1.0, 1.0).astype(np.complex128)
        mat = sp.csr_matrix((vals, (idx, idx)), shape=(dim, dim))
    else:
        cols = idx ^ mask
        if axis == "x":
            vals = np.ones(dim, dtype=np.complex128)
        else:
            # <b|sigma_y|b^mask>: +i when target bit of the column is set
            vals = np.where(cols & mask, 1j, -1j).astype(np.complex128)
        mat = sp.csr_matrix((vals, (idx, cols)), shape=(dim, dim))
    return _make_operator(n_qubits, mat)


def identity_op(n_qubits: int) -> SparseOperator:
    dim = 1 << n_qubits
    return _make_operator(n_qubits, sp.identity(dim, dtype=np.complex128, format="csr"))


def apply(op: SparseOperator, psi: StateVector) -> StateVector:
    """Sparse matrix-vector product; no normalization."""
    if op.n_qubits != psi.n_qubits:
        raise ValueError(
            f"operator acts on {op.n_qubits} qubits, state has {psi.n_qubits}"
        )
    return StateVector(psi.n_qubits, op.matrix @ psi.amplitudes)


def partial_trace_bath(psi: StateVector, n_system: int, n_bath: int) -> DensityMatrix:
    """Reduced system state of a joint pure state (system = high bits)."""
    if psi.n_qubits != n_system + n_bath:
        raise ValueError(
            f"state has {psi.n_qubits} qubits, expected {n_system}+{n_bath}"
        )
    block = psi.amplitudes.reshape(1 << n_system, 1 << n_bath)
    rho = block @ block.conj().T
    # exact Hermitization kills the last-bit asymmetry of the BLAS product
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(n_system, rho)


def weighted_branch_assemble(
    branches: list[tuple[float, StateVector]], n_system: int, n_bath: int
) -> DensityMatrix:
    """Convex combination of per-branch partial traces.

    Weights must be non-negative and sum to 1 within 1e-10.
    """
    if not branches:
        raise ValueError("empty branch list")
    weights = np.array([w for w, _ in branches], dtype=float)
    if (weights < 0).any():
        raise ValueError(f"negative branch weight {weights.min()}")
    total = weights.sum()
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"branch weights sum to {total}, expected 1 within 1e-10")
    dim_s = 1 << n_system
    rho = np.zeros((dim_s, dim_s), dtype=np.complex128)
    for w, psi in branches:
        rho += w * partial_trace_bath(psi, n_system, n_bath).matrix
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(n_system, rho)
