import numpy as np
import pytest

from spincool.hamiltonians import build_problem
from spincool.instances import (
    SKInstance,
    brute_force_ground,
    config_energies,
    ground_state_indices,
    load_instance,
    sample_sk,
    save_instance,
)


def test_sampling_is_deterministic():
    a = sample_sk(1, 7)
    b = sample_sk(1, 7)
    assert a.fields[0] == b.fields[0]
    assert a.couplings.shape == (1, 1)


def test_sampling_counts():
    inst = sample_sk(2, 3)
    assert np.count_nonzero(np.triu(inst.couplings, 1)) == 1
    assert inst.fields.size == 2
    assert np.all(inst.couplings == inst.couplings.T)


def test_sampling_rejects_zero_size():
    with pytest.raises(ValueError):
        sample_sk(0, 1)


def test_gaussian_statistics_pooled():
    # pooled couplings over many seeds: mean within 3 sigma of 0, variance within 5% of 1
    n, n_seeds = 9, 10_000 // 36  # ~10^4 coupling draws total
    draws = []
    for seed in range(n_seeds):
        inst = sample_sk(n, seed)
        iu, ju = np.triu_indices(n, k=1)
        draws.append(inst.couplings[iu, ju])
    pooled = np.concatenate(draws)
    se = 1.0 / np.sqrt(pooled.size)
    assert abs(pooled.mean()) < 3 * se
    assert abs(pooled.var() - 1.0) < 0.05


def test_ground_single_spin_aligns_with_field():
    inst = SKInstance(1, np.zeros((1, 1)), np.array([1.0]), 0)
    sol = brute_force_ground(inst)
    assert sol.configuration[0] == 1
    assert sol.energy == -1.0
    assert not sol.degenerate


def test_ground_ferromagnetic_pair_is_degenerate():
    inst = SKInstance(2, np.array([[0.0, 2.0], [2.0, 0.0]]), np.zeros(2), 0)
    sol = brute_force_ground(inst)
    assert sol.energy == -2.0
    assert sol.degenerate
    assert abs(sol.configuration[0]) == 1 and sol.configuration[0] == sol.configuration[1]
    assert set(ground_state_indices(inst)) == {0, 3}


def test_ground_matches_operator_diagonal_minimum():
    inst = sample_sk(9, 42)
    sol = brute_force_ground(inst)
    diag = build_problem(inst).diagonal().real
    assert abs(sol.energy - diag.min()) < 1e-12


def test_ground_energy_matches_configuration():
    inst = sample_sk(6, 5)
    sol = brute_force_ground(inst)
    s = sol.configuration.astype(float)
    direct = -0.5 * s @ inst.couplings @ s - inst.fields @ s
    assert abs(direct - sol.energy) < 1e-12


def test_ground_beats_random_configurations():
    inst = sample_sk(8, 11)
    sol = brute_force_ground(inst)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 1 << 8, size=100)
    assert np.all(config_energies(inst, idx) >= sol.energy - 1e-12)


def test_field_flip_covariance():
    inst = sample_sk(5, 13)
    flipped = SKInstance(5, inst.couplings, -inst.fields, 13)
    a = brute_force_ground(inst)
    b = brute_force_ground(flipped)
    assert abs(a.energy - b.energy) < 1e-12
    assert np.all(a.configuration == -b.configuration)


def test_brute_force_bound():
    inst = sample_sk(25, 1)
    with pytest.raises(ValueError):
        brute_force_ground(inst)


def test_save_load_round_trip(tmp_path):
    inst = sample_sk(9, 77)
    path = tmp_path / "instance.yaml"
    save_instance(inst, path)
    loaded = load_instance(path)
    assert loaded.n == inst.n
    assert loaded.seed == inst.seed
    assert loaded.rng_id == inst.rng_id
    assert np.array_equal(loaded.couplings, inst.couplings)
    assert np.array_equal(loaded.fields, inst.fields)


def test_load_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("n: 3\nseed: 0\nrng_id: x\nJ: [1.0]\nh: [0.0, 0.0, 0.0]\n")
    with pytest.raises(ValueError, match="couplings"):
        load_instance(bad)
    missing = tmp_path / "missing.yaml"
    missing.write_text("n: 2\nseed: 0\n")
    with pytest.raises(ValueError, match="missing"):
        load_instance(missing)


def test_reference_instance_ground_energy(repo_root):
    # pinned repository reference (n=9, seed 2024); energy frozen at pin time
    inst = load_instance(repo_root / "data" / "reference_instance_n9.yaml")
    sol = brute_force_ground(inst)
    assert abs(sol.energy - (-20.475917197450872)) < 1e-12
    assert np.array_equal(sol.configuration, [1, 1, 1, 1, -1, -1, -1, 1, 1])
