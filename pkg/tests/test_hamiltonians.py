import numpy as np
import pytest

from spincool.hamiltonians import (
    BathParameters,
    WalkParameters,
    bath_eigensystem,
    build_bath,
    build_coupling,
    build_driver,
    build_problem,
    build_total,
    driver_ground_state,
    build_walk,
    embed_bath,
    embed_system,
    problem_diagonal,
    sparse_ground_state,
)
from spincool.instances import SKInstance, config_energies, sample_sk
from spincool.spinops import site_pauli


def kron_all(*mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)
ID = np.eye(2, dtype=complex)


def test_problem_two_spin_ferromagnet():
    inst = SKInstance(2, np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2), 0)
    diag = build_problem(inst).diagonal().real
    assert np.allclose(diag, [-1.0, 1.0, 1.0, -1.0])


def test_problem_single_field():
    inst = SKInstance(1, np.zeros((1, 1)), np.array([2.0]), 0)
    assert np.allclose(build_problem(inst).diagonal().real, [-2.0, 2.0])


def test_problem_diagonal_matches_scalar_formula():
    inst = sample_sk(9, 3)
    diag = problem_diagonal(inst)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 1 << 9, size=50)
    assert np.abs(diag[idx] - config_energies(inst, idx)).max() < 1e-12


def test_driver_spectrum():
    assert np.allclose(np.linalg.eigvalsh(build_driver(1).dense()), [-1, 1])
    assert np.allclose(
        np.linalg.eigvalsh(build_driver(3).dense()), [-3, -1, -1, -1, 1, 1, 1, 3]
    )
    evals = np.linalg.eigvalsh(build_driver(6).dense())
    assert abs(evals[0] + 6) < 1e-12


def test_driver_ground_state_uniform():
    psi = driver_ground_state(9)
    assert np.allclose(psi.amplitudes, 2.0 ** -4.5)
    h = build_driver(9)
    e = np.real(np.vdot(psi.amplitudes, h.matrix @ psi.amplitudes))
    assert abs(e + 9) < 1e-12


def test_driver_ground_matches_eigensolver():
    _, ground = sparse_ground_state(build_driver(4))
    overlap = abs(np.vdot(ground.amplitudes, driver_ground_state(4).amplitudes))
    assert abs(overlap - 1.0) < 1e-10


def test_walk_limits():
    inst = sample_sk(3, 1)
    assert (build_walk(inst, 0.0).matrix != build_problem(inst).matrix).nnz == 0
    # strong-driver limit: ground state approaches the uniform superposition
    inst4 = sample_sk(4, 2)
    _, ground = sparse_ground_state(build_walk(inst4, 1e3))
    fid = abs(np.vdot(ground.amplitudes, driver_ground_state(4).amplitudes)) ** 2
    assert fid > 0.999


def test_walk_uniform_expectation_identity():
    # <psi_+|H(gamma)|psi_+> = -gamma n + mean(H_p diagonal)
    inst = sample_sk(9, 4)
    gamma = 4.0
    h = build_walk(inst, gamma)
    psi = driver_ground_state(9)
    val = np.real(np.vdot(psi.amplitudes, h.matrix @ psi.amplitudes))
    expected = -gamma * 9 + problem_diagonal(inst).mean()
    assert abs(val - expected) < 1e-10


def test_bath_decoupled_field_limit():
    es = bath_eigensystem(BathParameters(f=1.0, alpha=1.0, n_bath=3))
    assert np.allclose(es.energies, [-3, -1, -1, -1, 1, 1, 1, 3])
    assert abs(es.ground_vector()[0] - 1.0) < 1e-10


def test_bath_classical_limit_boundary_modes():
    per = bath_eigensystem(BathParameters(f=0.0, alpha=1.0, n_bath=3, boundary="periodic"))
    opn = bath_eigensystem(BathParameters(f=0.0, alpha=1.0, n_bath=3, boundary="open"))
    assert abs(per.energies[0] + 3.0) < 1e-12
    assert abs(opn.energies[0] + 2.0) < 1e-12


def test_bath_open_two_site_dense_oracle():
    h = build_bath(BathParameters(f=0.5, alpha=1.0, n_bath=2, boundary="open"))
    ref = -0.5 * kron_all(SX, SX) - 0.5 * (kron_all(SZ, ID) + kron_all(ID, SZ))
    assert np.abs(h.dense() - ref).max() < 1e-14
    spec = np.linalg.eigvalsh(h.dense())
    assert np.allclose(spec, np.linalg.eigvalsh(ref))


def test_bath_eigensystem_residuals_and_groups():
    es = bath_eigensystem(BathParameters(f=0.6, alpha=3.0, n_bath=9))
    h = build_bath(BathParameters(f=0.6, alpha=3.0, n_bath=9)).dense()
    res = np.linalg.norm(h @ es.states - es.states * es.energies, axis=0)
    assert res.max() < 1e-9
    # alpha never scales the bare bath spectrum
    es1 = bath_eigensystem(BathParameters(f=0.6, alpha=1.0, n_bath=9))
    assert np.allclose(es.energies, es1.energies)


def test_bath_classical_ground_doublet_grouped():
    es = bath_eigensystem(BathParameters(f=0.0, alpha=1.0, n_bath=2, boundary="open"))
    assert abs(es.energies[0] - es.energies[1]) < 1e-12
    assert list(es.level_groups[0]) == [0, 1]
    # canonical ground state overlaps the all-up state non-negatively
    assert es.ground_vector()[0].real >= 0


def test_coupling_zero_and_single_site():
    assert build_coupling(2, 0.0).nnz == 0
    op = build_coupling(1, 1.0)
    ref = -kron_all(SX, SX)
    assert np.abs(op.dense() - ref).max() < 1e-14
    assert np.allclose(np.linalg.eigvalsh(op.dense()), [-1, -1, 1, 1])


def test_coupling_yy_dense_oracle():
    op = build_coupling(2, 1.0, include_yy=True)
    ref = (
        -kron_all(SX, ID, SX, ID)
        - kron_all(ID, SX, ID, SX)
        - kron_all(SY, ID, SY, ID)
        - kron_all(ID, SY, ID, SY)
    )
    assert np.abs(op.dense() - ref).max() < 1e-13


def test_total_additivity_when_decoupled():
    inst = sample_sk(3, 9)
    params = BathParameters(f=0.4, alpha=1.0, n_bath=3, coupling_J=0.0)
    h = build_total(inst, params)
    rng = np.random.default_rng(1)
    phi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    phi /= np.linalg.norm(phi)
    chi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    chi /= np.linalg.norm(chi)
    joint = np.kron(phi, chi)
    total = np.real(np.vdot(joint, h.matrix @ joint))
    e_sys = np.real(np.vdot(phi, build_problem(inst).matrix @ phi))
    e_bath = np.real(np.vdot(chi, build_bath(params).matrix @ chi))
    assert abs(total - (e_sys + e_bath)) < 1e-10


def test_total_kron_assembly_oracle():
    inst = sample_sk(2, 10)
    params = BathParameters(f=0.6, alpha=3.0, n_bath=2, coupling_J=1.0)
    h = build_total(inst, params).dense()
    hp = build_problem(inst).dense()
    ha = build_bath(params).dense()
    ref = (
        np.kron(hp, np.eye(4))
        + 3.0 * np.kron(np.eye(4), ha)
        - kron_all(SX, ID, SX, ID)
        - kron_all(ID, SX, ID, SX)
    )
    assert np.abs(h - ref).max() < 1e-12


def test_total_alpha_scaling():
    inst = sample_sk(3, 12)
    params = BathParameters(f=0.5, alpha=3.0, n_bath=3, coupling_J=0.0)
    es = bath_eigensystem(params)
    e0 = es.ground_vector()
    scaled = embed_bath(build_bath(params), 3)
    val = 3.0 * np.real(np.vdot(e0, build_bath(params).matrix @ e0))
    h = build_total(inst, params)
    joint = np.kron(driver_ground_state(3).amplitudes, e0)
    e_joint = np.real(np.vdot(joint, h.matrix @ joint))
    e_sys = np.real(
        np.vdot(driver_ground_state(3).amplitudes, build_problem(inst).matrix @ driver_ground_state(3).amplitudes)
    )
    assert abs((e_joint - e_sys) - val) < 1e-10
    assert scaled.n_qubits == 6


def test_total_size_mismatch():
    inst = sample_sk(3, 1)
    with pytest.raises(ValueError):
        build_total(inst, BathParameters(f=0.5, alpha=1.0, n_bath=4))


def test_total_decoupled_commutes_with_problem():
    inst = sample_sk(3, 2)
    params = BathParameters(f=0.3, alpha=2.0, n_bath=3, coupling_J=0.0)
    h = build_total(inst, params)
    hp = embed_system(build_problem(inst), 3)
    comm = h.matrix @ hp.matrix - hp.matrix @ h.matrix
    rng = np.random.default_rng(5)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    v /= np.linalg.norm(v)
    assert np.linalg.norm(comm @ v) < 1e-10


def test_builders_hermitian_spot_check():
    inst = sample_sk(4, 20)
    params = BathParameters(f=0.6, alpha=3.0, n_bath=4, coupling_J=1.0, coupling_yy=True)
    h = build_total(inst, params)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(h.dim) + 1j * rng.standard_normal(h.dim)
    v = rng.standard_normal(h.dim) + 1j * rng.standard_normal(h.dim)
    lhs = np.vdot(u, h.matrix @ v)
    rhs = np.conj(np.vdot(v, h.matrix @ u))
    assert abs(lhs - rhs) < 1e-10


def test_parameter_validation():
    with pytest.raises(ValueError):
        BathParameters(f=1.2, alpha=1.0, n_bath=2)
    with pytest.raises(ValueError):
        BathParameters(f=0.5, alpha=0.0, n_bath=2)
    with pytest.raises(ValueError):
        BathParameters(f=0.5, alpha=1.0, n_bath=2, boundary="twisted")
    with pytest.raises(ValueError):
        WalkParameters(gamma1=4.0, gamma2=1.0, t_q=-1.0)
    with pytest.raises(ValueError):
        WalkParameters(gamma1=4.0, gamma2=1.0, t_q=5.0, t_end=4.0)
