"""Projective bath-energy measurements after collision strokes, and the
post-selected / stochastically selected cooling protocols built on them.

Measuring the bath energy projects each joint branch onto the bath
eigenbasis; the system-side vectors that remain are the measurement
branches. Everything here works on those branch blocks, never on joint
density matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .collision import (
    CollisionEngine,
    ProtocolError,
    StrokeSchedule,
    run_collision_protocol,
    spectral_branches,
)
from .evolve import DEFAULT_TOL, TrajectoryBuilder, TrajectoryRecord
from .hamiltonians import EigenSystem
from .instances import SKInstance
from .spinops import DensityMatrix, StateVector

__all__ = [
    "MeasurementOutcome",
    "SelectionRule",
    "StrokeOutcomeLog",
    "MeasurementScan",
    "measurement_distribution",
    "aggregate_outcomes_by_group",
    "conditional_energy",
    "measure_after_strokes",
    "run_measured_protocol",
    "run_stochastic_ensemble",
]

# Outcomes rarer than this carry no usable post-measurement state.
PROBABILITY_FLOOR = 1e-14


@dataclass
class MeasurementOutcome:
    level_index: int
    level_group: int
    energy: float  # unscaled bath units
    probability: float
    post_state: DensityMatrix | None

    @property
    def defined(self) -> bool:
        return self.post_state is not None


@dataclass(frozen=True)
class SelectionRule:
    """What to do with the measurement outcome at each stroke end.

    'none' keeps the non-selective average, 'post_select_first_excited'
    forces the second-smallest bath eigenvalue (or second level group when
    grouped), 'stochastic' samples from the outcome distribution with a
    seeded generator.
    """

    mode: str = "none"
    rng_seed: int = 0
    grouped: bool = False

    def __post_init__(self):
        if self.mode not in ("none", "post_select_first_excited", "stochastic"):
            raise ValueError(f"unknown selection mode {self.mode!r}")


@dataclass
class StrokeOutcomeLog:
    stroke: int
    chosen_index: int
    probability: float
    e_p: float
    fidelity: float
    purity: float


@dataclass
class MeasurementScan:
    outcomes: list
    pre_measurement_e_p: float
    fraction_below: float
    trajectory: TrajectoryRecord


def _branch_block(branches):
    """Split a list of (weight, joint StateVector) into arrays."""
    if not branches:
        raise ValueError("empty branch list")
    weights = np.array([w for w, _ in branches], dtype=float)
    block = np.column_stack([psi.amplitudes for _, psi in branches])
    n_joint = branches[0][1].n_qubits
    return weights, block, n_joint


def _eigenbasis_tensor(block, weights, bath_eigs: EigenSystem, n_joint: int):
    """Rotate the bath factor of every branch into the bath eigenbasis.

    Returns (T, probs) with T[s, k, j] the amplitude of system index s,
    branch k, bath eigenstate j, and probs the per-eigenstate outcome
    probabilities summed over branches.
    """
    db = bath_eigs.dim
    ds = block.shape[0] // db
    r = block.shape[1]
    y3 = block.reshape(ds, db, r)
    # tensordot over the bath axis gives (s, branch, j); reorder to (s, j, branch)
    t = np.tensordot(y3, bath_eigs.states.conj(), axes=([1], [0]))
    t = np.ascontiguousarray(np.swapaxes(t, 1, 2))
    probs = np.einsum("sjk,sjk,k->j", t, t.conj(), weights).real
    return t, probs, ds


def _post_state_from_tensor(t, weights, j, ds, n_system):
    vecs = t[:, j, :]  # (ds, r)
    q = weights * np.sum(np.abs(vecs) ** 2, axis=0)
    p = float(q.sum())
    if p < PROBABILITY_FLOOR:
        return p, None
    rho = (vecs * weights[None, :]) @ vecs.conj().T / p
    rho = 0.5 * (rho + rho.conj().T)
    return p, DensityMatrix(n_system, rho)


def measurement_distribution(branches, bath_eigs: EigenSystem):
    """Outcome table for a bath-energy measurement on a joint branch ensemble.

    One outcome per bath eigenstate (degenerate partners reported
    individually; see aggregate_outcomes_by_group for the grouped view).
    Probabilities sum to 1 for a normalized ensemble; outcomes below the
    probability floor carry post_state=None.
    """
    weights, block, n_joint = _branch_block(branches)
    n_bath = int(round(np.log2(bath_eigs.dim)))
    n_system = n_joint - n_bath
    t, probs, ds = _eigenbasis_tensor(block, weights, bath_eigs, n_joint)
    outcomes = []
    for j in range(bath_eigs.dim):
        p, post = _post_state_from_tensor(t, weights, j, ds, n_system)
        outcomes.append(
            MeasurementOutcome(
                level_index=j,
                level_group=bath_eigs.group_of(j),
                energy=float(bath_eigs.energies[j]),
                probability=float(probs[j]),
                post_state=post,
            )
        )
    return outcomes


def aggregate_outcomes_by_group(outcomes, bath_eigs: EigenSystem):
    """Merge per-eigenstate outcomes into per-level-group outcomes."""
    grouped = []
    for g, members in enumerate(bath_eigs.level_groups):
        subset = [outcomes[j] for j in members]
        p = sum(o.probability for o in subset)
        post = None
        if p >= PROBABILITY_FLOOR:
            dim = None
            acc = None
            for o in subset:
                if o.post_state is None:
                    continue
                mat = o.post_state.matrix * (o.probability / p)
                acc = mat if acc is None else acc + mat
                dim = o.post_state.n_qubits
            if acc is not None:
                acc = 0.5 * (acc + acc.conj().T)
                post = DensityMatrix(dim, acc)
        grouped.append(
            MeasurementOutcome(
                level_index=int(members[0]),
                level_group=g,
                energy=float(bath_eigs.energies[members[0]]),
                probability=float(p),
                post_state=post,
            )
        )
    return grouped


def conditional_energy(outcome: MeasurementOutcome, instance: SKInstance) -> float:
    """Cost expectation in the post-measurement system state."""
    if outcome.post_state is None:
        raise ValueError(
            f"outcome {outcome.level_index} has probability below the floor; "
            "no post-measurement state is defined"
        )
    from .hamiltonians import problem_diagonal

    diag = problem_diagonal(instance)
    return float(diag @ np.real(np.diag(outcome.post_state.matrix)))


def measure_after_strokes(
    instance: SKInstance,
    schedule: StrokeSchedule,
    n_measure_at: int,
    tol: float = DEFAULT_TOL,
    engine: CollisionEngine | None = None,
) -> MeasurementScan:
    """Cool for n_measure_at strokes, then tabulate the full outcome scatter.

    fraction_below is the total probability of outcomes whose conditional
    cost energy undercuts the pre-measurement value.
    """
    if not 1 <= n_measure_at <= schedule.n_c:
        raise ValueError(
            f"n_measure_at must lie in [1, {schedule.n_c}], got {n_measure_at}"
        )
    if engine is None:
        engine = CollisionEngine(instance, schedule.bath, tol)
    truncated = replace(schedule, n_c=n_measure_at)
    record, results = run_collision_protocol(
        instance, truncated, tol=tol, keep_joint="last", engine=engine
    )
    branches = results[-1].joint_branches_end
    outcomes = measurement_distribution(branches, engine.bath_eigs)
    pre_e_p = record.final("e_p")
    fraction = 0.0
    for o in outcomes:
        if o.defined and conditional_energy(o, instance) < pre_e_p:
            fraction += o.probability
    return MeasurementScan(
        outcomes=outcomes,
        pre_measurement_e_p=pre_e_p,
        fraction_below=float(fraction),
        trajectory=record,
    )


def _select_outcome(rule: SelectionRule, probs, t, weights, ds, engine, rng):
    """Pick the stroke's outcome; returns (chosen label, probability, post rho)."""
    n = engine.n
    if rule.mode == "stochastic":
        p = probs.clip(min=0.0)
        j = int(rng.choice(p.size, p=p / p.sum()))
        prob, post = _post_state_from_tensor(t, weights, j, ds, n)
        if post is None:
            raise ProtocolError(f"sampled outcome {j} fell below the probability floor")
        return j, prob, post
    if rule.mode == "post_select_first_excited":
        if rule.grouped:
            groups = engine.bath_eigs.level_groups
            if len(groups) < 2:
                raise ProtocolError("bath spectrum has a single level group")
            members = groups[1]
            prob = float(probs[members].sum())
            if prob < PROBABILITY_FLOOR:
                raise ProtocolError(
                    f"post-selection probability {prob:.3e} below the floor"
                )
            acc = None
            for j in members:
                pj, post = _post_state_from_tensor(t, weights, j, ds, n)
                if post is None:
                    continue
                mat = post.matrix * (pj / prob)
                acc = mat if acc is None else acc + mat
            acc = 0.5 * (acc + acc.conj().T)
            return int(members[0]), prob, DensityMatrix(n, acc)
        prob, post = _post_state_from_tensor(t, weights, 1, ds, n)
        if post is None:
            raise ProtocolError(
                f"post-selection probability {prob:.3e} below the floor"
            )
        return 1, prob, post
    raise ValueError(f"selection rule {rule.mode!r} is not handled here")


def run_measured_protocol(
    instance: SKInstance,
    schedule: StrokeSchedule,
    rule: SelectionRule,
    tol: float = DEFAULT_TOL,
    engine: CollisionEngine | None = None,
) -> tuple[TrajectoryRecord, list]:
    """Collision cooling with a bath-energy measurement closing every stroke.

    The chosen post-measurement state seeds the next stroke with a fresh
    bath. Mode 'none' reproduces the plain collision protocol exactly (the
    non-selective average over outcomes is the partial trace).
    """
    if engine is None:
        engine = CollisionEngine(instance, schedule.bath, tol)
    rng = np.random.default_rng(rule.rng_seed)
    psi0 = engine.initial_state(schedule.init_state)
    rho = np.outer(psi0.amplitudes, psi0.amplitudes.conj())
    rho = 0.5 * (rho + rho.conj().T)

    builder = TrajectoryBuilder(
        metadata={
            "protocol": "measured_collision",
            "selection_mode": rule.mode,
            "selection_seed": rule.rng_seed,
            "selection_grouped": rule.grouped,
            "n_c": schedule.n_c,
            "dt": schedule.dt,
            "f": schedule.bath.f,
            "alpha": schedule.bath.alpha,
            "coupling_J": schedule.bath.coupling_J,
            "n_system": instance.n,
            "instance_seed": instance.seed,
            "e_p_ground": engine.ground_energy,
            "tol": tol,
        }
    )
    e_p, fid, entropy = engine.system_rows(rho)
    e_tot0 = engine.joint_energy(
        np.array([1.0]),
        engine.embed_with_fresh_bath(psi0.amplitudes[:, None]),
        schedule.coupling_for_stroke(1),
    )
    builder.add(0.0, e_p, e_tot0, fid, entropy, stroke=0)

    logs = []
    for k in range(1, schedule.n_c + 1):
        jk = schedule.coupling_for_stroke(k)
        weights, block = spectral_branches(rho, schedule.branch_tol)
        channel = engine.stroke_channel(jk, schedule.dt)
        joint = channel @ block
        if rule.mode == "none":
            rho_next = engine.reduce_branches(weights, joint)
            chosen, prob = -1, 1.0
        else:
            t, probs, ds = _eigenbasis_tensor(
                joint, weights, engine.bath_eigs, 2 * engine.n
            )
            chosen, prob, post = _select_outcome(
                rule, probs, t, weights, ds, engine, rng
            )
            rho_next = post.matrix
        e_p, fid, entropy = engine.system_rows(rho_next)
        purity = float(np.real(np.vdot(rho_next, rho_next)))
        builder.add(k * schedule.dt, e_p, np.nan, fid, entropy, stroke=k)
        logs.append(
            StrokeOutcomeLog(
                stroke=k,
                chosen_index=chosen,
                probability=prob,
                e_p=e_p,
                fidelity=fid,
                purity=purity,
            )
        )
        rho = rho_next

    record = builder.finish()
    record.validate(instance.n)
    return record, logs


def run_stochastic_ensemble(
    instance: SKInstance,
    schedule: StrokeSchedule,
    seeds,
    tol: float = DEFAULT_TOL,
    grouped: bool = False,
):
    """Seeded stochastic trajectories sharing one engine and stroke channel.

    Returns (boundary times, e_p matrix of shape (n_seeds, n_c + 1)).
    """
    engine = CollisionEngine(instance, schedule.bath, tol)
    curves = []
    times = None
    for seed in seeds:
        rule = SelectionRule(mode="stochastic", rng_seed=int(seed), grouped=grouped)
        record, _ = run_measured_protocol(
            instance, schedule, rule, tol=tol, engine=engine
        )
        curves.append(record.e_p)
        if times is None:
            times = record.times
    return times, np.array(curves)
