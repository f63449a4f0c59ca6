import numpy as np
import pytest

from spincool.spinops import (
    DensityMatrix,
    StateVector,
    apply,
    basis_state,
    identity_op,
    partial_trace_bath,
    site_pauli,
    weighted_branch_assemble,
)


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return StateVector(n, amps / np.linalg.norm(amps))


def test_site_pauli_z_single_qubit():
    op = site_pauli("z", 1, 1)
    assert np.allclose(op.dense(), np.diag([1.0, -1.0]))


def test_site_pauli_x_structure_two_qubits():
    # identity (x) sigma_x: <00|A|01> = 1 under MSB-first ordering
    op = site_pauli("x", 2, 2)
    dense = op.dense()
    assert dense[0, 1] == 1.0
    assert np.allclose(dense, np.kron(np.eye(2), np.array([[0, 1], [1, 0]])))


def test_site_pauli_y_square_and_trace():
    op = site_pauli("y", 1, 2).dense()
    assert np.allclose(op @ op, np.eye(4), atol=1e-14)
    assert abs(np.trace(op)) < 1e-14


def test_site_pauli_nonzero_count_and_range():
    op = site_pauli("x", 3, 4)
    assert op.nnz == 16
    with pytest.raises(ValueError):
        site_pauli("z", 5, 4)
    with pytest.raises(ValueError):
        site_pauli("q", 1, 2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_pauli_string_square_identity_traceless(n):
    rng = np.random.default_rng(n)
    axes = rng.choice(list("xyz"), size=n)
    mat = site_pauli(axes[0], 1, n).matrix
    for site in range(2, n + 1):
        mat = mat @ site_pauli(axes[site - 1], site, n).matrix
    dense = mat.toarray()
    assert np.allclose(dense @ dense, np.eye(1 << n), atol=1e-13)
    assert abs(np.trace(dense)) < 1e-12


def test_apply_identity_and_flip():
    psi = random_state(3, 1)
    out = apply(identity_op(3), psi)
    assert np.allclose(out.amplitudes, psi.amplitudes)
    flipped = apply(site_pauli("x", 1, 1), basis_state(1, 0))
    assert np.allclose(flipped.amplitudes, [0.0, 1.0])


def test_apply_matches_dense_product():
    psi = random_state(3, 2)
    op = site_pauli("y", 2, 3)
    ref = op.dense() @ psi.amplitudes
    out = apply(op, psi)
    assert np.linalg.norm(out.amplitudes - ref) < 1e-13


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        apply(site_pauli("x", 1, 2), basis_state(3, 0))


def test_partial_trace_product_state_is_pure():
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    phi /= np.linalg.norm(phi)
    chi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    chi /= np.linalg.norm(chi)
    joint = StateVector(4, np.kron(phi, chi))
    rho = partial_trace_bath(joint, 2, 2)
    assert np.abs(rho.matrix - np.outer(phi, phi.conj())).max() < 1e-13
    assert abs(rho.purity() - 1.0) < 1e-12


def test_partial_trace_bell_state():
    bell = StateVector(2, np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2))
    rho = partial_trace_bath(bell, 1, 1)
    assert np.abs(rho.matrix - 0.5 * np.eye(2)).max() < 1e-14


def test_partial_trace_matches_loop_oracle():
    psi = random_state(4, 4)
    rho = partial_trace_bath(psi, 2, 2)
    ref = np.zeros((4, 4), dtype=complex)
    amps = psi.amplitudes
    for s in range(4):
        for sp in range(4):
            for a in range(4):
                ref[s, sp] += amps[s * 4 + a] * np.conj(amps[sp * 4 + a])
    assert np.abs(rho.matrix - ref).max() < 1e-13
    assert abs(rho.trace() - psi.norm() ** 2) < 1e-12


def test_partial_trace_qubit_count_mismatch():
    with pytest.raises(ValueError):
        partial_trace_bath(random_state(3, 5), 2, 2)


def test_partial_trace_local_unitary_covariance():
    # Tr_A[(U_S x U_A) psi psi^† (.)^†] == U_S Tr_A[psi psi^†] U_S^†
    rng = np.random.default_rng(6)
    for _ in range(3):
        psi = random_state(4, rng.integers(1 << 30))
        us, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        ua, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        rotated = StateVector(4, np.kron(us, ua) @ psi.amplitudes)
        lhs = partial_trace_bath(rotated, 2, 2).matrix
        rhs = us @ partial_trace_bath(psi, 2, 2).matrix @ us.conj().T
        assert np.abs(lhs - rhs).max() < 1e-12


def test_weighted_assemble_single_branch_matches_partial_trace():
    psi = random_state(4, 7)
    rho = weighted_branch_assemble([(1.0, psi)], 2, 2)
    ref = partial_trace_bath(psi, 2, 2)
    assert np.abs(rho.matrix - ref.matrix).max() < 1e-14


def test_weighted_assemble_orthogonal_halves():
    up = np.kron([1, 0], [1, 0]).astype(complex)
    down = np.kron([0, 1], [0, 1]).astype(complex)
    rho = weighted_branch_assemble(
        [(0.5, StateVector(2, up)), (0.5, StateVector(2, down))], 1, 1
    )
    evals = np.linalg.eigvalsh(rho.matrix)
    entropy = -(evals * np.log(evals)).sum()
    assert abs(entropy - np.log(2)) < 1e-12


def test_weighted_assemble_matches_dense_oracle():
    rng = np.random.default_rng(8)
    branches = []
    weights = rng.random(3)
    weights /= weights.sum()
    for w in weights:
        branches.append((float(w), random_state(4, rng.integers(1 << 30))))
    rho = weighted_branch_assemble(branches, 2, 2)
    dense = np.zeros((16, 16), dtype=complex)
    for w, psi in branches:
        dense += w * np.outer(psi.amplitudes, psi.amplitudes.conj())
    ref = dense.reshape(4, 4, 4, 4).trace(axis1=1, axis2=3)
    assert np.abs(rho.matrix - ref).max() < 1e-13
    assert abs(rho.trace() - 1.0) < 1e-12


def test_weighted_assemble_rejects_bad_weights():
    psi = random_state(2, 9)
    with pytest.raises(ValueError):
        weighted_branch_assemble([(-0.1, psi), (1.1, psi)], 1, 1)
    with pytest.raises(ValueError):
        weighted_branch_assemble([(0.7, psi)], 1, 1)
    with pytest.raises(ValueError):
        weighted_branch_assemble([], 1, 1)


def test_density_matrix_rejects_non_hermitian():
    with pytest.raises(ValueError):
        DensityMatrix(1, np.array([[1.0, 1.0], [0.0, 0.0]]))
