import numpy as np
import pytest
import scipy.linalg as la

from spincool.evolve import (
    PiecewiseSchedule,
    chebyshev_propagate_block,
    krylov_propagate,
    run_anneal,
    run_quench_walk,
    sample_grid,
    spectral_bounds,
)
from spincool.hamiltonians import (
    BathParameters,
    WalkParameters,
    build_total,
    build_walk,
    driver_ground_state,
)
from spincool.instances import sample_sk
from spincool.spinops import SparseOperator, StateVector, basis_state, site_pauli


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return StateVector(n, amps / np.linalg.norm(amps))


@pytest.fixture(scope="module")
def joint_hamiltonian():
    inst = sample_sk(4, 5)
    params = BathParameters(f=0.6, alpha=3.0, n_bath=4, coupling_J=1.0)
    return build_total(inst, params)


def test_zero_time_is_identity(joint_hamiltonian):
    psi = random_state(8, 1)
    out = krylov_propagate(joint_hamiltonian, psi, 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_eigenstate_picks_up_phase_only(joint_hamiltonian):
    dense = joint_hamiltonian.dense()
    evals, evecs = np.linalg.eigh(dense)
    v = StateVector(8, evecs[:, 3])
    out = krylov_propagate(joint_hamiltonian, v, 0.7)
    overlap = abs(np.vdot(evecs[:, 3], out.amplitudes))
    assert abs(overlap - 1.0) < 1e-10
    ref = np.exp(-1j * evals[3] * 0.7) * evecs[:, 3]
    assert np.linalg.norm(out.amplitudes - ref) < 1e-9


def test_rabi_flip_analytic():
    # H = -sigma_x, t = pi/2: full population transfer from |0> to |1>
    h = SparseOperator(1, (-site_pauli("x", 1, 1).matrix).tocsr())
    out = krylov_propagate(h, basis_state(1, 0), np.pi / 2, 1e-12)
    assert abs(abs(out.amplitudes[1]) ** 2 - 1.0) < 1e-10


def test_matches_dense_expm_8_qubits(joint_hamiltonian):
    psi = random_state(8, 2)
    out = krylov_propagate(joint_hamiltonian, psi, 1.0, 1e-9)
    ref = la.expm(-1j * joint_hamiltonian.dense()) @ psi.amplitudes
    assert np.linalg.norm(out.amplitudes - ref) < 1e-8
    assert abs(out.norm() - 1.0) < 1e-10


def test_long_time_norm_and_reversal(joint_hamiltonian):
    psi = random_state(8, 3)
    fwd = krylov_propagate(joint_hamiltonian, psi, 12.5, 1e-9)
    assert abs(fwd.norm() - 1.0) < 1e-10
    back = krylov_propagate(joint_hamiltonian, fwd, -12.5, 1e-9)
    assert np.linalg.norm(back.amplitudes - psi.amplitudes) < 2e-9


def test_dimension_and_tol_validation(joint_hamiltonian):
    with pytest.raises(ValueError):
        krylov_propagate(joint_hamiltonian, random_state(3, 1), 1.0)
    with pytest.raises(ValueError):
        krylov_propagate(joint_hamiltonian, random_state(8, 1), 1.0, tol=0.0)


def test_chebyshev_block_matches_krylov(joint_hamiltonian):
    mv = lambda x: joint_hamiltonian.matrix @ x  # noqa: E731
    bounds = spectral_bounds(mv, joint_hamiltonian.dim)
    rng = np.random.default_rng(4)
    block = rng.standard_normal((256, 6)) + 1j * rng.standard_normal((256, 6))
    block /= np.linalg.norm(block, axis=0)
    out = chebyshev_propagate_block(mv, block, 3.0, bounds, 1e-10)
    for c in range(6):
        ref = krylov_propagate(joint_hamiltonian, StateVector(8, block[:, c]), 3.0, 1e-11)
        assert np.linalg.norm(out[:, c] - ref.amplitudes) < 1e-8
    norms = np.linalg.norm(out, axis=0)
    assert np.abs(norms - 1.0).max() < 1e-9


def test_spectral_bounds_enclose_spectrum(joint_hamiltonian):
    mv = lambda x: joint_hamiltonian.matrix @ x  # noqa: E731
    lo, hi = spectral_bounds(mv, joint_hamiltonian.dim)
    evals = np.linalg.eigvalsh(joint_hamiltonian.dense())
    assert lo < evals[0] and hi > evals[-1]


def test_schedule_validation(joint_hamiltonian):
    with pytest.raises(ValueError):
        PiecewiseSchedule(segments=[(0.0, joint_hamiltonian)], sample_times=[0.0])
    with pytest.raises(ValueError):
        PiecewiseSchedule(segments=[(1.0, joint_hamiltonian)], sample_times=[2.0])


def test_sample_grid_includes_anchors():
    grid = sample_grid(25.0, 0.25, anchors=(5.0,))
    assert grid[0] == 0.0 and grid[-1] == 25.0
    assert 5.0 in grid
    assert np.all(np.diff(grid) > 0)


def test_walk_energy_conserved_without_quench():
    inst = sample_sk(5, 7)
    wp = WalkParameters(gamma1=2.0, gamma2=2.0, t_q=5.0, t_end=15.0)
    rec = run_quench_walk(inst, wp, sample_dt=0.5)
    drift = np.abs(rec.e_total - rec.e_total[0]).max()
    assert drift < 1e-8


def test_walk_energy_piecewise_constant_with_single_jump():
    inst = sample_sk(6, 8)
    wp = WalkParameters(gamma1=4.0, gamma2=1.0, t_q=5.0, t_end=15.0)
    rec = run_quench_walk(inst, wp, sample_dt=0.25)
    pre = rec.e_total[rec.times < wp.t_q]
    post = rec.e_total[rec.times >= wp.t_q]
    assert np.abs(pre - pre[0]).max() < 1e-8
    assert np.abs(post - post[0]).max() < 1e-8
    assert abs(pre[0] - post[0]) > 1e-3  # the quench actually moves the energy


def test_walk_matches_dense_evolution_two_qubits():
    inst = sample_sk(2, 9)
    wp = WalkParameters(gamma1=4.0, gamma2=1.0, t_q=2.0, t_end=6.0)
    rec = run_quench_walk(inst, wp, sample_dt=1.0)
    h1 = build_walk(inst, 4.0).dense()
    h2 = build_walk(inst, 1.0).dense()
    psi = driver_ground_state(2).amplitudes
    for t, e_p in zip(rec.times, rec.e_p):
        if t <= wp.t_q:
            state = la.expm(-1j * h1 * t) @ psi
        else:
            state = la.expm(-1j * h2 * (t - wp.t_q)) @ la.expm(-1j * h1 * wp.t_q) @ psi
        hp = build_walk(inst, 0.0).dense()
        ref = np.real(np.vdot(state, hp @ state))
        assert abs(e_p - ref) < 1e-8


def test_walk_initial_row_uniform_fidelity():
    inst = sample_sk(6, 10)
    rec = run_quench_walk(inst, WalkParameters(4.0, 1.0, 2.0, 4.0), sample_dt=1.0)
    assert abs(rec.fidelity[0] - 2.0 ** -6) < 1e-12
    assert rec.metadata["e_p_ground"] <= rec.e_p.min() + 1e-9


def test_anneal_sudden_limit_stays_near_start():
    inst = sample_sk(4, 11)
    rec = run_anneal(inst, 4.0, 1.0, t_f=1e-3, n_steps=1, sample_dt=1e-3)
    assert abs(rec.fidelity[0] - rec.fidelity[-1]) < 1e-3


def test_anneal_flat_ramp_equals_walk_without_quench():
    inst = sample_sk(4, 12)
    rec_a = run_anneal(inst, 2.0, 2.0, t_f=8.0, n_steps=16, sample_dt=1.0)
    rec_w = run_quench_walk(inst, WalkParameters(2.0, 2.0, 4.0, 8.0), sample_dt=1.0)
    walk_times = {round(t, 9): e for t, e in zip(rec_w.times, rec_w.e_p)}
    for t, e in zip(rec_a.times, rec_a.e_p):
        assert abs(e - walk_times[round(t, 9)]) < 1e-8


def test_anneal_self_convergence():
    inst = sample_sk(2, 13)
    coarse = run_anneal(inst, 4.0, 1.0, t_f=25.0, n_steps=50, sample_dt=25.0, convergence_gate=False)
    fine = run_anneal(inst, 4.0, 1.0, t_f=25.0, n_steps=500, sample_dt=25.0, convergence_gate=False)
    assert abs(coarse.e_p[-1] - fine.e_p[-1]) < 1e-4
    gated = run_anneal(inst, 4.0, 1.0, t_f=25.0, n_steps=250, sample_dt=25.0)
    assert gated.metadata["anneal_converged"]


def test_anneal_validation():
    inst = sample_sk(2, 14)
    with pytest.raises(ValueError):
        run_anneal(inst, 4.0, 1.0, t_f=25.0, n_steps=0)
    with pytest.raises(ValueError):
        run_anneal(inst, 4.0, 1.0, t_f=0.0)
