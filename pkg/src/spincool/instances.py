"""Sherrington-Kirkpatrick disorder realizations: sampling, files, exact solving.

An instance is the pair (J_ij, h_i) with all couplings and fields drawn
i.i.d. from the standard normal distribution. The classical energy of a
spin configuration s in {+1,-1}^n is

    E(s) = -1/2 sum_{i != j} J_ij s_i s_j - sum_i h_i s_i
         = -sum_{i<j} J_ij s_i s_j - sum_i h_i s_i        (J symmetric, J_ii = 0)

Because the cost operator is diagonal in the computational basis, the
ground state can be found exactly by enumeration for moderate n.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

__all__ = [
    "SKInstance",
    "GroundSolution",
    "sample_sk",
    "brute_force_ground",
    "ground_state_indices",
    "save_instance",
    "load_instance",
    "config_energies",
]

# Generator fingerprint recorded in every instance file. Draw order is fixed:
# J upper triangle row-major (i<j), then the n fields.
RNG_ID = "numpy-pcg64-standard-normal-v1"

# Exhaustive enumeration bound and basis-block size for the energy scan.
MAX_BRUTE_FORCE_N = 24
_CHUNK = 1 << 18

# Two lowest energies closer than this count as a degenerate ground state.
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class SKInstance:
    n: int
    couplings: np.ndarray  # (n, n) symmetric, zero diagonal
    fields: np.ndarray  # (n,)
    seed: int
    rng_id: str = RNG_ID

    def __post_init__(self):
        object.__setattr__(self, "couplings", np.asarray(self.couplings, dtype=float))
        object.__setattr__(self, "fields", np.asarray(self.fields, dtype=float))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.couplings.shape != (self.n, self.n):
            raise ValueError("coupling matrix shape does not match n")
        if self.fields.shape != (self.n,):
            raise ValueError("field vector length does not match n")
        if np.any(self.couplings != self.couplings.T):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(self.couplings) != 0.0):
            raise ValueError("coupling matrix must have zero diagonal")


@dataclass(frozen=True)
class GroundSolution:
    energy: float
    configuration: np.ndarray  # (n,) of +-1, ordered qubit 1..n
    degenerate: bool


def sample_sk(n: int, seed: int) -> SKInstance:
    """Draw a fresh disorder realization, deterministic in (seed, RNG_ID)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    upper = rng.standard_normal(iu.size)
    couplings = np.zeros((n, n))
    couplings[iu, ju] = upper
    couplings[ju, iu] = upper
    fields = rng.standard_normal(n)
    return SKInstance(n=n, couplings=couplings, fields=fields, seed=seed)


def config_energies(instance: SKInstance, indices: np.ndarray) -> np.ndarray:
    """Classical energies of basis states given by their indices.

    Qubit 1 is the most significant bit; bit 0 means s = +1.
    """
    n = instance.n
    idx = np.asarray(indices, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
    spins = 1.0 - 2.0 * bits
    pair = -0.5 * np.sum((spins @ instance.couplings) * spins, axis=1)
    return pair - spins @ instance.fields


def brute_force_ground(instance: SKInstance) -> GroundSolution:
    """Exact minimum of the classical cost over all 2^n configurations.

    Ties are broken toward the lowest basis index so results are
    reproducible regardless of chunking.
    """
    n = instance.n
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"n={n} above enumeration bound {MAX_BRUTE_FORCE_N}")
    best_energy = np.inf
    best_index = -1
    second_energy = np.inf
    for start in range(0, 1 << n, _CHUNK):
        stop = min(start + _CHUNK, 1 << n)
        energies = config_energies(instance, np.arange(start, stop))
        imin = int(np.argmin(energies))  # first occurrence = lowest index
        emin = float(energies[imin])
        esec = float(np.partition(energies, 1)[1]) if energies.size > 1 else np.inf
        if emin < best_energy:
            second_energy = min(best_energy, esec, second_energy)
            best_energy = emin
            best_index = start + imin
        else:
            # emin >= best also bounds the runner-up energy
            second_energy = min(second_energy, emin)
    bits = (best_index >> np.arange(n - 1, -1, -1)) & 1
    configuration = 1 - 2 * bits
    degenerate = (second_energy - best_energy) < DEGENERACY_TOL
    return GroundSolution(
        energy=best_energy, configuration=configuration.astype(int), degenerate=degenerate
    )


def ground_state_indices(instance: SKInstance, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Basis indices of all configurations within `tol` of the ground energy."""
    n = instance.n
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"n={n} above enumeration bound {MAX_BRUTE_FORCE_N}")
    ground = brute_force_ground(instance)
    hits = []
    for start in range(0, 1 << n, _CHUNK):
        stop = min(start + _CHUNK, 1 << n)
        energies = config_energies(instance, np.arange(start, stop))
        local = np.nonzero(energies - ground.energy < tol)[0]
        hits.append(local + start)
    return np.concatenate(hits)


def save_instance(instance: SKInstance, path: str | Path) -> None:
    """Write an instance file (YAML, upper-triangle couplings, full precision)."""
    n = instance.n
    iu, ju = np.triu_indices(n, k=1)
    doc = {
        "n": int(n),
        "seed": int(instance.seed),
        "rng_id": instance.rng_id,
        "J": [float(v) for v in instance.couplings[iu, ju]],
        "h": [float(v) for v in instance.fields],
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def load_instance(path: str | Path) -> SKInstance:
    """Read an instance file, enforcing shape and symmetry invariants."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ValueError(f"malformed instance file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"malformed instance file {path}: not a mapping")
    for key in ("n", "seed", "rng_id", "J", "h"):
        if key not in doc:
            raise ValueError(f"instance file {path} missing field {key!r}")
    n = int(doc["n"])
    upper = np.asarray(doc["J"], dtype=float)
    fields = np.asarray(doc["h"], dtype=float)
    if upper.shape != (n * (n - 1) // 2,):
        raise ValueError(
            f"instance file {path}: expected {n*(n-1)//2} couplings, got {upper.size}"
        )
    if fields.shape != (n,):
        raise ValueError(f"instance file {path}: expected {n} fields, got {fields.size}")
    couplings = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    couplings[iu, ju] = upper
    couplings[ju, iu] = upper
    return SKInstance(
        n=n, couplings=couplings, fields=fields, seed=int(doc["seed"]), rng_id=str(doc["rng_id"])
    )
