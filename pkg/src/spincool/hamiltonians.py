"""Builders for the cost, driver, bath, and coupled Hamiltonians, plus eigensolvers.

The joint register is ordered system-then-bath: system qubits are the high
bits of the basis index, bath qubits the low bits. The bath scale factor
alpha multiplies the bath term only inside the total Hamiltonian; the bare
bath operator and its eigensystem are always unscaled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .instances import SKInstance
from .spinops import SparseOperator, StateVector, _make_operator, site_pauli

__all__ = [
    "WalkParameters",
    "BathParameters",
    "EigenSystem",
    "build_problem",
    "problem_diagonal",
    "build_driver",
    "driver_ground_state",
    "build_walk",
    "build_bath",
    "build_coupling",
    "build_total",
    "bath_eigensystem",
    "embed_system",
    "embed_bath",
    "sparse_ground_state",
]

# Above this dimension ground states come from Lanczos instead of dense eigh.
# Dense resolves quasi-degenerate ground doublets exactly, which Lanczos
# cannot do at pinning-field splittings, so keep it as large as is fast.
_DENSE_EIG_DIM = 1 << 10

# Residual target for every eigenpair we hand out.
_RESIDUAL_TOL = 1e-9

_BATH_EIG_MAX_QUBITS = 14


@dataclass(frozen=True)
class WalkParameters:
    """Two-stage quantum walk schedule: driver strength gamma1 until t_q, gamma2 after."""

    gamma1: float
    gamma2: float
    t_q: float = 5.0
    t_end: float = 25.0

    def __post_init__(self):
        if self.t_q < 0:
            raise ValueError("t_q must be >= 0")
        if self.t_end < self.t_q:
            raise ValueError("t_end must be >= t_q")


@dataclass(frozen=True)
class BathParameters:
    """Transverse-field Ising bath: bond weight (1-f), field weight f, scale alpha."""

    f: float
    alpha: float
    n_bath: int
    boundary: str = "periodic"
    coupling_J: float = 1.0
    coupling_yy: bool = False

    def __post_init__(self):
        if not 0.0 <= self.f <= 1.0:
            raise ValueError(f"f={self.f} outside [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.n_bath < 1:
            raise ValueError("n_bath must be >= 1")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")


@dataclass
class EigenSystem:
    """Full spectrum with near-degenerate levels grouped and a canonical basis.

    Within each group the stored eigenvectors are fixed deterministically
    (Gram-Schmidt over projected computational-basis seeds, lowest index
    first, phases pinned), so repeated runs agree to the bit.
    """

    energies: np.ndarray
    states: np.ndarray  # column j is the eigenvector of energies[j]
    level_groups: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.energies.size

    def ground_vector(self) -> np.ndarray:
        return self.states[:, 0]

    def group_of(self, index: int) -> int:
        for g, members in enumerate(self.level_groups):
            if index in members:
                return g
        raise IndexError(f"eigenstate index {index} not grouped")


def problem_diagonal(instance: SKInstance) -> np.ndarray:
    """Diagonal of the cost Hamiltonian, composed from single-site sigma^z diagonals."""
    n = instance.n
    dim = 1 << n
    zdiags = np.empty((n, dim), dtype=np.int8)
    for i in range(n):
        zdiags[i] = site_pauli("z", i + 1, n).diagonal().real.astype(np.int8)
    diag = np.zeros(dim)
    for i in range(n):
        for j in range(i + 1, n):
            jij = instance.couplings[i, j]
            if jij != 0.0:
                diag -= jij * (zdiags[i] * zdiags[j])
        diag -= instance.fields[i] * zdiags[i]
    return diag


def build_problem(instance: SKInstance) -> SparseOperator:
    diag = problem_diagonal(instance)
    return _make_operator(instance.n, sp.diags(diag, format="csr"))


def build_driver(n: int) -> SparseOperator:
    """Driver -sum_i sigma_i^x; ground state is the uniform superposition."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mat = sum(-site_pauli("x", i + 1, n).matrix for i in range(n))
    return _make_operator(n, mat)


def driver_ground_state(n: int) -> StateVector:
    if n < 1:
        raise ValueError("n must be >= 1")
    dim = 1 << n
    return StateVector(n, np.full(dim, dim ** -0.5, dtype=np.complex128))


def build_walk(instance: SKInstance, gamma: float) -> SparseOperator:
    mat = gamma * build_driver(instance.n).matrix + build_problem(instance).matrix
    return _make_operator(instance.n, mat)


def build_bath(params: BathParameters) -> SparseOperator:
    """Unscaled bath chain -sum_i [(1-f) X_i X_{i+1} + f Z_i].

    Periodic boundary closes the ring (site N+1 identified with 1); open
    drops the closing bond. A single-site chain has no bond term.
    """
    n = params.n_bath
    f = params.f
    dim = 1 << n
    mat = sp.csr_matrix((dim, dim), dtype=np.complex128)
    if n > 1:
        n_bonds = n if params.boundary == "periodic" else n - 1
        for i in range(1, n_bonds + 1):
            j = i % n + 1
            mat = mat - (1.0 - f) * (
                site_pauli("x", i, n).matrix @ site_pauli("x", j, n).matrix
            )
    for i in range(1, n + 1):
        mat = mat - f * site_pauli("z", i, n).matrix
    return _make_operator(n, mat)


def build_coupling(n: int, J: float, include_yy: bool = False) -> SparseOperator:
    """Site-matched coupling -J sum_i X_i^sys X_i^bath (optionally + Y_i Y_i)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 2 * n
    dim = 1 << total
    mat = sp.csr_matrix((dim, dim), dtype=np.complex128)
    if J == 0.0:
        return SparseOperator(total, mat)
    for i in range(1, n + 1):
        mat = mat - J * (
            site_pauli("x", i, total).matrix @ site_pauli("x", n + i, total).matrix
        )
        if include_yy:
            mat = mat - J * (
                site_pauli("y", i, total).matrix @ site_pauli("y", n + i, total).matrix
            )
    return _make_operator(total, mat)


def embed_system(op: SparseOperator, n_bath: int) -> SparseOperator:
    """op acting on the system factor, identity on the bath (low bits)."""
    mat = sp.kron(op.matrix, sp.identity(1 << n_bath, format="csr"), format="csr")
    return SparseOperator(op.n_qubits + n_bath, mat, hermitian=op.hermitian)


def embed_bath(op: SparseOperator, n_system: int) -> SparseOperator:
    mat = sp.kron(sp.identity(1 << n_system, format="csr"), op.matrix, format="csr")
    return SparseOperator(op.n_qubits + n_system, mat, hermitian=op.hermitian)


def build_total(instance: SKInstance, params: BathParameters) -> SparseOperator:
    """H_tot = H_p (x) I + alpha I (x) H_A + H_I on the joint register."""
    if instance.n != params.n_bath:
        raise ValueError(
            f"system size {instance.n} does not match bath size {params.n_bath}"
        )
    n = instance.n
    mat = (
        embed_system(build_problem(instance), n).matrix
        + params.alpha * embed_bath(build_bath(params), n).matrix
        + build_coupling(n, params.coupling_J, params.coupling_yy).matrix
    )
    return _make_operator(2 * n, mat)


def _group_levels(energies: np.ndarray, rel_tol: float = 1e-10) -> list:
    groups = []
    current = [0]
    for i in range(1, energies.size):
        gap = energies[i] - energies[i - 1]
        if gap <= rel_tol * max(1.0, abs(energies[i])):
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    return groups


def _canonical_group_basis(vectors: np.ndarray, ground_group: bool) -> np.ndarray:
    """Deterministic orthonormal basis of span(vectors).

    Seeds are the computational basis vectors projected into the span,
    taken in ascending basis-index order (the all-up state leads for the
    ground group), Gram-Schmidt orthonormalized, each phase pinned so its
    largest-magnitude amplitude is real positive.
    """
    dim, g = vectors.shape
    if g == 1:
        basis = vectors.copy()
    else:
        # ||P e_b||^2 for each basis seed b is the row norm of the eigenvector block
        weights = np.sum(np.abs(vectors) ** 2, axis=1)
        order = np.argsort(-weights, kind="stable")
        if ground_group and weights[0] > 1e-12:
            order = np.concatenate(([0], order[order != 0]))
        basis_list = []
        for b in order:
            cand = vectors @ vectors[b, :].conj()  # P e_b
            for prev in basis_list:
                cand -= prev * np.vdot(prev, cand)
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                basis_list.append(cand / nrm)
            if len(basis_list) == g:
                break
        if len(basis_list) < g:
            raise RuntimeError("failed to fix a deterministic degenerate basis")
        basis = np.column_stack(basis_list)
    for k in range(basis.shape[1]):
        col = basis[:, k]
        if ground_group and k == 0 and abs(col[0]) > 1e-12:
            phase = col[0] / abs(col[0])  # non-negative all-up overlap
        else:
            lead = int(np.argmax(np.abs(col)))
            phase = col[lead] / abs(col[lead])
        basis[:, k] = col * np.conj(phase)
    return basis


def bath_eigensystem(params: BathParameters) -> EigenSystem:
    """Dense spectrum of the unscaled bath Hamiltonian with canonical vectors."""
    if params.n_bath > _BATH_EIG_MAX_QUBITS:
        raise ValueError(
            f"n_bath={params.n_bath} above dense diagonalization bound {_BATH_EIG_MAX_QUBITS}"
        )
    h = build_bath(params)
    dense = h.dense()
    energies, states = np.linalg.eigh(dense)
    groups = _group_levels(energies)
    for members in groups:
        lo, hi = members[0], members[-1] + 1
        states[:, lo:hi] = _canonical_group_basis(states[:, lo:hi], ground_group=(lo == 0))
    residual = np.linalg.norm(dense @ states - states * energies, axis=0)
    if residual.max() >= _RESIDUAL_TOL:
        raise RuntimeError(f"bath eigenpair residual {residual.max():.2e} above target")
    return EigenSystem(energies=energies, states=states, level_groups=groups)


def sparse_ground_state(
    op: SparseOperator, residual_tol: float = _RESIDUAL_TOL
) -> tuple[float, StateVector]:
    """Lowest eigenpair; dense below 2^12, Lanczos with reorthogonalization above."""
    dim = op.dim
    if dim <= _DENSE_EIG_DIM:
        energies, states = np.linalg.eigh(op.dense())
        energy, vec = float(energies[0]), states[:, 0]
    else:
        v0 = np.random.default_rng(12345).standard_normal(dim)
        vals, vecs = spla.eigsh(op.matrix, k=1, which="SA", v0=v0, tol=1e-12, maxiter=5000)
        energy, vec = float(vals[0]), vecs[:, 0]
    res = np.linalg.norm(op.matrix @ vec - energy * vec)
    if res >= residual_tol:
        raise RuntimeError(f"ground-state residual {res:.2e} above {residual_tol}")
    lead = int(np.argmax(np.abs(vec)))
    vec = vec * np.conj(vec[lead] / abs(vec[lead]))
    return energy, StateVector(op.n_qubits, vec.astype(np.complex128))
