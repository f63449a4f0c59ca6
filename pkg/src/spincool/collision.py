"""Repeated-collision cooling: evolve system + fresh bath for one stroke,
discard the bath, repeat.

The engine represents the mixed system state as a spectral ensemble of pure
branches. Each branch is embedded alongside the fresh bath ground state and
propagated under the full coupled Hamiltonian; the reduced state is then
reassembled from the evolved branches. When observables are only needed at
stroke boundaries the engine builds the stroke channel once - the action of
the stroke unitary on every |s> (x) |bath ground> column - and reuses it for
all strokes, initial states, and measurement rules with the same coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._kernels import masked_action
from .evolve import (
    DEFAULT_SAMPLE_DT,
    DEFAULT_TOL,
    TrajectoryBuilder,
    TrajectoryRecord,
    chebyshev_propagate_block,
    sample_grid,
    spectral_bounds,
)
from .hamiltonians import BathParameters, bath_eigensystem, driver_ground_state, problem_diagonal
from .instances import SKInstance, brute_force_ground, ground_state_indices
from .observables import von_neumann_entropy
from .spinops import DensityMatrix, StateVector

__all__ = [
    "StrokeSchedule",
    "StrokeResult",
    "CollisionEngine",
    "ProtocolError",
    "spectral_branches",
    "evolve_stroke",
    "run_collision_protocol",
    "run_markovian_mode",
    "final_energy_sweep",
    "SweepResult",
]

DEFAULT_BRANCH_TOL = 1e-12

# Channels on joint spaces at least this large are kept one at a time.
_CHANNEL_EVICT_DIM = 1 << 16

# Propagation blocks are chunked to roughly this many complex entries.
_MAX_BLOCK_ELEMS = 1 << 23


@dataclass(frozen=True)
class StrokeSchedule:
    """Stroke count and duration, bath parameters, and per-stroke overrides.

    j_schedule entries (stroke_index, J) switch the coupling from that stroke
    on; init_state is 'driver_ground', 'problem_ground', or a StateVector.
    sample_dt=None samples at stroke boundaries only.
    """

    n_c: int
    dt: float
    bath: BathParameters
    j_schedule: tuple = ()
    init_state: object = "driver_ground"
    sample_dt: float | None = DEFAULT_SAMPLE_DT
    branch_tol: float = DEFAULT_BRANCH_TOL

    def __post_init__(self):
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.branch_tol < 1.0:
            raise ValueError("branch_tol must lie in (0, 1)")
        if self.sample_dt is not None and self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive or None")
        sched = tuple(sorted((int(k), float(j)) for k, j in self.j_schedule))
        for k, _ in sched:
            if k < 1:
                raise ValueError("j_schedule stroke indices are 1-based")
        object.__setattr__(self, "j_schedule", sched)
        if isinstance(self.init_state, str) and self.init_state not in (
            "driver_ground",
            "problem_ground",
        ):
            raise ValueError(f"unknown init_state {self.init_state!r}")

    def coupling_for_stroke(self, k: int) -> float:
        j = self.bath.coupling_J
        for idx, val in self.j_schedule:
            if idx <= k:
                j = val
        return j


@dataclass
class StrokeResult:
    rho_s_end: DensityMatrix
    joint_branches_end: list | None  # of (weight, StateVector) on the joint register
    trajectory: TrajectoryRecord
    branch_count: int = 0


class ProtocolError(RuntimeError):
    """A stroke failed; carries whatever completed before the failure."""

    def __init__(self, message, trajectory=None, stroke_results=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.stroke_results = stroke_results


def spectral_branches(rho: np.ndarray, branch_tol: float):
    """Eigen-decompose a density matrix into (weights, column block).

    Eigenvalues at or below branch_tol are dropped and the remaining weights
    renormalized; branches come out in descending weight order.
    """
    evals, evecs = np.linalg.eigh(rho)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    keep = evals > branch_tol
    if not keep.any():
        keep[0] = True
    weights = evals[keep].clip(min=0.0)
    weights = weights / weights.sum()
    return weights, np.ascontiguousarray(evecs[:, keep])


class CollisionEngine:
    """Shared state for one (instance, bath) pair: Hamiltonian action,
    fresh-bath vector, stroke channels, and observable helpers."""

    def __init__(self, instance: SKInstance, bath: BathParameters, tol: float = DEFAULT_TOL):
        if instance.n != bath.n_bath:
            raise ValueError(
                f"system size {instance.n} does not match bath size {bath.n_bath}"
            )
        self.instance = instance
        self.bath = bath
        self.tol = tol
        self.n = instance.n
        self.dim_s = 1 << self.n
        self.dim_b = 1 << bath.n_bath
        self.dim_joint = self.dim_s * self.dim_b
        self.hp_diag = problem_diagonal(instance)
        self.bath_eigs = bath_eigensystem(bath)
        self.bath_ground = np.ascontiguousarray(self.bath_eigs.ground_vector())
        self.ground_idx = ground_state_indices(instance)
        self.ground_energy = brute_force_ground(instance).energy
        self._build_action_tables()
        self._bounds_cache: dict = {}
        self._channel_cache: dict = {}

    # -- joint Hamiltonian action ------------------------------------------

    def _build_action_tables(self):
        n, nb = self.n, self.bath.n_bath
        total = n + nb
        f, alpha = self.bath.f, self.bath.alpha
        idx = np.arange(self.dim_joint, dtype=np.int64)

        # diagonal part: H_p on the high bits plus the bath field term
        diag = np.repeat(self.hp_diag, self.dim_b)
        for i in range(1, nb + 1):
            bit = nb - i
            diag += alpha * f * np.where(idx & (1 << bit), 1.0, -1.0)
        self._diag = diag

        # bath bond terms flip two adjacent bath bits
        self._bond_masks = []
        if nb > 1:
            n_bonds = nb if self.bath.boundary == "periodic" else nb - 1
            for i in range(1, n_bonds + 1):
                j = i % nb + 1
                self._bond_masks.append((1 << (nb - i)) | (1 << (nb - j)))
        self._bond_coeff = -alpha * (1.0 - f)

        # coupling terms flip one system bit and the matching bath bit;
        # with the YY variant the flip amplitude is -J (1 + yysign_i)
        self._coupling_masks = []
        self._yy_signs = []
        for i in range(1, n + 1):
            mask = (1 << (total - i)) | (1 << (nb - i))
            self._coupling_masks.append(mask)
            if self.bath.coupling_yy:
                sbit = (idx >> (total - i)) & 1
                bbit = (idx >> (nb - i)) & 1
                self._yy_signs.append(np.where((sbit + bbit) % 2 == 0, -1.0, 1.0))
        self._action_cache: dict = {}
        self._csr_cache: dict = {}

    def h_action(self, J: float):
        """H_tot application for 1-D vectors or column blocks (fused kernel
        when numba is available, sparse-matrix product otherwise)."""
        key = float(J)
        if key in self._action_cache:
            return self._action_cache[key]
        masks = list(self._bond_masks)
        coeffs = [self._bond_coeff] * len(masks)
        vector_terms = []
        if J != 0.0:
            for k, mask in enumerate(self._coupling_masks):
                if self._yy_signs:
                    vector_terms.append((mask, -J * (1.0 + self._yy_signs[k])))
                else:
                    masks.append(mask)
                    coeffs.append(-J)
        mv = masked_action(self._diag, np.array(masks or [0], dtype=np.int64),
                           np.array(coeffs or [0.0]), vector_terms)
        if mv is None:
            csr = self._csr_for(J)
            mv = lambda x: csr @ x  # noqa: E731
        self._action_cache[key] = mv
        return mv

    def _csr_for(self, J: float):
        key = float(J)
        if key not in self._csr_cache:
            from .hamiltonians import build_total

            bath = replace(self.bath, coupling_J=J)
            self._csr_cache[key] = build_total(self.instance, bath).matrix
        return self._csr_cache[key]

    def bounds_for(self, J: float):
        key = float(J)
        if key not in self._bounds_cache:
            self._bounds_cache[key] = spectral_bounds(self.h_action(J), self.dim_joint)
        return self._bounds_cache[key]

    # -- stroke channel -----------------------------------------------------

    def stroke_channel(self, J: float, dt: float) -> np.ndarray:
        """Columns U(dt) |s> (x) |bath ground> for every system basis state s."""
        key = (float(J), float(dt))
        if key in self._channel_cache:
            return self._channel_cache[key]
        mv = self.h_action(J)
        bounds = self.bounds_for(J)
        channel = np.empty((self.dim_joint, self.dim_s), dtype=np.complex128)
        chunk = max(1, _MAX_BLOCK_ELEMS // self.dim_joint)
        for start in range(0, self.dim_s, chunk):
            stop = min(start + chunk, self.dim_s)
            width = stop - start
            block = np.zeros((self.dim_s, self.dim_b, width), dtype=np.complex128)
            for c, s in enumerate(range(start, stop)):
                block[s, :, c] = self.bath_ground
            block = block.reshape(self.dim_joint, width)
            channel[:, start:stop] = chebyshev_propagate_block(
                mv, block, dt, bounds, self.tol
            )
        if self.dim_joint >= _CHANNEL_EVICT_DIM:
            self._channel_cache = {key: channel}
        else:
            self._channel_cache[key] = channel
        return channel

    # -- branch embedding and reduction --------------------------------------

    def embed_with_fresh_bath(self, block: np.ndarray) -> np.ndarray:
        """(dim_s, r) system block -> (dim_joint, r) product with the bath ground."""
        r = block.shape[1]
        joint = block[:, None, :] * self.bath_ground[None, :, None]
        return np.ascontiguousarray(joint.reshape(self.dim_joint, r))

    def reduce_branches(self, weights: np.ndarray, joint_block: np.ndarray) -> np.ndarray:
        """Weighted partial trace over the bath of a joint branch block."""
        z = joint_block * np.sqrt(weights)[None, :]
        z = z.reshape(self.dim_s, self.dim_b * joint_block.shape[1])
        rho = z @ z.conj().T
        return 0.5 * (rho + rho.conj().T)

    def joint_energy(self, weights: np.ndarray, joint_block: np.ndarray, J: float) -> float:
        hy = self.h_action(J)(joint_block)
        overlaps = np.real(np.einsum("ik,ik->k", joint_block.conj(), hy))
        return float(overlaps @ weights)

    def system_rows(self, rho: np.ndarray):
        """(e_p, fidelity, entropy) of a reduced density matrix."""
        diag = np.real(np.diag(rho))
        e_p = float(self.hp_diag @ diag)
        fid = float(diag[self.ground_idx].sum())
        fid = min(max(fid, 0.0), 1.0)
        entropy = von_neumann_entropy(DensityMatrix(self.n, rho))
        return e_p, fid, entropy

    def initial_state(self, init) -> StateVector:
        if isinstance(init, StateVector):
            if init.n_qubits != self.n:
                raise ValueError("custom initial state has the wrong qubit count")
            return init.copy()
        if init == "driver_ground":
            return driver_ground_state(self.n)
        if init == "problem_ground":
            amps = np.zeros(self.dim_s, dtype=np.complex128)
            amps[int(self.ground_idx.min())] = 1.0
            return StateVector(self.n, amps)
        raise ValueError(f"unknown init_state {init!r}")


def _check_engine_matches(engine: CollisionEngine, bath: BathParameters) -> None:
    """The engine's action tables bake in everything except the coupling J."""
    ours = engine.bath
    if (
        ours.f != bath.f
        or ours.alpha != bath.alpha
        or ours.n_bath != bath.n_bath
        or ours.boundary != bath.boundary
        or ours.coupling_yy != bath.coupling_yy
    ):
        raise ValueError("engine was built for different bath parameters")


def _stroke_offsets(dt: float, sample_dt: float | None) -> np.ndarray:
    offsets = sample_grid(dt, sample_dt)[1:] if sample_dt is not None else np.array([dt])
    if abs(offsets[-1] - dt) > 1e-12:
        offsets = np.append(offsets, dt)
    return offsets


def _stroke_dense(engine, weights, block, J, dt, offsets, collectors, keep_joint):
    """Propagate the embedded branches through one stroke with mid-stroke stops.

    collectors is a dict offset -> accumulator; each accumulator receives
    (chunk_weights, joint_chunk) per branch chunk. Returns the final joint
    block if keep_joint else None.
    """
    mv = engine.h_action(J)
    bounds = engine.bounds_for(J)
    r = block.shape[1]
    chunk = max(1, _MAX_BLOCK_ELEMS // engine.dim_joint)
    final = (
        np.empty((engine.dim_joint, r), dtype=np.complex128) if keep_joint else None
    )
    for start in range(0, r, chunk):
        stop = min(start + chunk, r)
        joint = engine.embed_with_fresh_bath(block[:, start:stop])
        w = weights[start:stop]
        prev = 0.0
        for off in offsets:
            step = off - prev
            if step > 0:
                joint = chebyshev_propagate_block(mv, joint, step, bounds, engine.tol)
            prev = off
            collectors[off](w, joint)
        if keep_joint:
            final[:, start:stop] = joint
    return final


class _StrokeAccumulator:
    """Accumulates the reduced state and joint energy across branch chunks."""

    def __init__(self, engine, J):
        self.engine = engine
        self.J = J
        self.rho = np.zeros((engine.dim_s, engine.dim_s), dtype=np.complex128)
        self.e_tot = 0.0

    def __call__(self, w, joint):
        self.rho += self.engine.reduce_branches(w, joint)
        self.e_tot += self.engine.joint_energy(w, joint, self.J)

    def rows(self):
        rho = 0.5 * (self.rho + self.rho.conj().T)
        e_p, fid, entropy = self.engine.system_rows(rho)
        return rho, e_p, fid, entropy, self.e_tot


def evolve_stroke(
    rho_s: DensityMatrix,
    instance: SKInstance,
    bath: BathParameters,
    dt: float,
    sample_dt: float | None = DEFAULT_SAMPLE_DT,
    branch_tol: float = DEFAULT_BRANCH_TOL,
    engine: CollisionEngine | None = None,
    t_start: float = 0.0,
    stroke_index: int = 1,
    keep_joint: bool = True,
    tol: float = DEFAULT_TOL,
) -> StrokeResult:
    """One collision stroke from an arbitrary mixed system state.

    The state is split into spectral branches, each branch evolves jointly
    with a fresh bath ground state for `dt`, and the reduced state is
    reassembled. Observables are sampled every sample_dt inside the stroke.
    """
    if engine is None:
        engine = CollisionEngine(instance, bath, tol)
    else:
        _check_engine_matches(engine, bath)
    if dt < 0:
        raise ValueError("dt must be >= 0")
    builder = TrajectoryBuilder()
    weights, block = spectral_branches(rho_s.matrix, branch_tol)
    if weights.size > engine.dim_s:
        raise AssertionError("branch count exceeded the system dimension")
    J = bath.coupling_J
    if dt == 0.0:
        joint = engine.embed_with_fresh_bath(block)
        branches = [
            (float(w), StateVector(2 * engine.n, joint[:, k]))
            for k, w in enumerate(weights)
        ]
        e_p, fid, entropy = engine.system_rows(rho_s.matrix)
        builder.add(t_start, e_p, engine.joint_energy(weights, joint, J), fid, entropy, stroke=stroke_index)
        return StrokeResult(
            rho_s_end=DensityMatrix(engine.n, rho_s.matrix.copy()),
            joint_branches_end=branches if keep_joint else None,
            trajectory=builder.finish(),
            branch_count=weights.size,
        )

    offsets = _stroke_offsets(dt, sample_dt)
    accumulators = {off: _StrokeAccumulator(engine, J) for off in offsets}
    final_joint = _stroke_dense(
        engine, weights, block, J, dt, offsets, accumulators, keep_joint
    )
    rho_end = None
    for off in offsets:
        rho, e_p, fid, entropy, e_tot = accumulators[off].rows()
        builder.add(t_start + off, e_p, e_tot, fid, entropy, stroke=stroke_index)
        if abs(off - dt) <= 1e-12:
            rho_end = rho
    branches = None
    if keep_joint:
        branches = [
            (float(w), StateVector(2 * engine.n, final_joint[:, k]))
            for k, w in enumerate(weights)
        ]
    return StrokeResult(
        rho_s_end=DensityMatrix(engine.n, rho_end),
        joint_branches_end=branches,
        trajectory=builder.finish(),
        branch_count=weights.size,
    )


def run_collision_protocol(
    instance: SKInstance,
    schedule: StrokeSchedule,
    tol: float = DEFAULT_TOL,
    keep_joint: str = "last",
    engine: CollisionEngine | None = None,
) -> tuple[TrajectoryRecord, list]:
    """Full cooling run: n_c strokes with a fresh bath each stroke.

    keep_joint controls retention of the joint branch vectors at stroke ends
    ('none', 'last', or 'all'); they are only needed for measurement
    post-processing and can be large.
    """
    if keep_joint not in ("none", "last", "all"):
        raise ValueError("keep_joint must be 'none', 'last', or 'all'")
    if engine is None:
        engine = CollisionEngine(instance, schedule.bath, tol)
    boundary_only = (
        schedule.sample_dt is None or schedule.sample_dt >= schedule.dt - 1e-12
    )
    psi0 = engine.initial_state(schedule.init_state)
    rho = np.outer(psi0.amplitudes, psi0.amplitudes.conj())
    rho = 0.5 * (rho + rho.conj().T)

    builder = TrajectoryBuilder(
        metadata={
            "protocol": "collision",
            "n_c": schedule.n_c,
            "dt": schedule.dt,
            "sample_dt": schedule.sample_dt,
            "branch_tol": schedule.branch_tol,
            "f": schedule.bath.f,
            "alpha": schedule.bath.alpha,
            "coupling_J": schedule.bath.coupling_J,
            "coupling_yy": schedule.bath.coupling_yy,
            "boundary": schedule.bath.boundary,
            "j_schedule": list(schedule.j_schedule),
            "init_state": schedule.init_state
            if isinstance(schedule.init_state, str)
            else "custom",
            "n_system": instance.n,
            "instance_seed": instance.seed,
            "e_p_ground": engine.ground_energy,
            "bath_ground_energy": float(engine.bath_eigs.energies[0]),
            "tol": tol,
        }
    )

    # t = 0 row: fresh joint product state under the first stroke's coupling
    w0 = np.array([1.0])
    b0 = psi0.amplitudes[:, None]
    e_p, fid, entropy = engine.system_rows(rho)
    e_tot0 = engine.joint_energy(w0, engine.embed_with_fresh_bath(b0), schedule.coupling_for_stroke(1))
    builder.add(0.0, e_p, e_tot0, fid, entropy, stroke=0)

    results = []
    try:
        for k in range(1, schedule.n_c + 1):
            jk = schedule.coupling_for_stroke(k)
            bath_k = replace(schedule.bath, coupling_J=jk)
            t_start = (k - 1) * schedule.dt
            keep = keep_joint == "all" or (keep_joint == "last" and k == schedule.n_c)
            if boundary_only:
                weights, block = spectral_branches(rho, schedule.branch_tol)
                channel = engine.stroke_channel(jk, schedule.dt)
                joint = channel @ block
                rho_next = engine.reduce_branches(weights, joint)
                e_tot = engine.joint_energy(weights, joint, jk)
                e_p, fid, entropy = engine.system_rows(rho_next)
                sub = TrajectoryBuilder()
                sub.add(t_start + schedule.dt, e_p, e_tot, fid, entropy, stroke=k)
                branches = None
                if keep:
                    branches = [
                        (float(w), StateVector(2 * engine.n, joint[:, i]))
                        for i, w in enumerate(weights)
                    ]
                result = StrokeResult(
                    rho_s_end=DensityMatrix(engine.n, rho_next),
                    joint_branches_end=branches,
                    trajectory=sub.finish(),
                    branch_count=weights.size,
                )
            else:
                result = evolve_stroke(
                    DensityMatrix(engine.n, rho),
                    instance,
                    bath_k,
                    schedule.dt,
                    sample_dt=schedule.sample_dt,
                    branch_tol=schedule.branch_tol,
                    engine=engine,
                    t_start=t_start,
                    stroke_index=k,
                    keep_joint=keep,
                    tol=tol,
                )
            traj = result.trajectory
            for i in range(len(traj)):
                builder.add(
                    traj.times[i],
                    traj.e_p[i],
                    traj.e_total[i],
                    traj.fidelity[i],
                    traj.entropy[i],
                    stroke=traj.stroke_index[i],
                )
            results.append(result)
            rho = result.rho_s_end.matrix
    except Exception as exc:
        partial = builder.finish()
        partial.metadata["aborted_at_stroke"] = len(results) + 1
        raise ProtocolError(
            f"stroke {len(results) + 1} failed: {exc}", partial, results
        ) from exc

    record = builder.finish()
    record.validate(instance.n)
    return record, results


def run_markovian_mode(
    instance: SKInstance,
    base_alpha: float,
    dt_short: float,
    n_short: int,
    f: float,
    coupling_J: float = 1.0,
    scale_mode: str = "interaction",
    dt_ref: float = 5.0,
    boundary: str = "periodic",
    init_state="driver_ground",
    sample_dt: float | None = None,
    branch_tol: float = DEFAULT_BRANCH_TOL,
    tol: float = DEFAULT_TOL,
) -> TrajectoryRecord:
    """Short-stroke limit with the 1/sqrt(dt) rescaling.

    scale_mode 'interaction' scales the system-bath coupling as
    J * sqrt(dt_ref/dt_short), so dt_short = dt_ref reproduces an ordinary
    stroke; scale_mode 'caption' leaves the coupling alone and sets the bath
    prefactor to base_alpha/sqrt(dt_short) verbatim.
    """
    if dt_short <= 0:
        raise ValueError("dt_short must be positive")
    if scale_mode == "interaction":
        alpha_eff = base_alpha
        j_eff = coupling_J * np.sqrt(dt_ref / dt_short)
    elif scale_mode == "caption":
        alpha_eff = base_alpha / np.sqrt(dt_short)
        j_eff = coupling_J
    else:
        raise ValueError("scale_mode must be 'interaction' or 'caption'")
    bath = BathParameters(
        f=f, alpha=alpha_eff, n_bath=instance.n, boundary=boundary, coupling_J=j_eff
    )
    schedule = StrokeSchedule(
        n_c=n_short,
        dt=dt_short,
        bath=bath,
        init_state=init_state,
        sample_dt=sample_dt,
        branch_tol=branch_tol,
    )
    record, _ = run_collision_protocol(
        instance, schedule, tol=tol, keep_joint="none"
    )
    record.metadata.update(
        {
            "protocol": "markovian_collision",
            "scale_mode": scale_mode,
            "base_alpha": base_alpha,
            "dt_ref": dt_ref,
            "alpha_effective": alpha_eff,
            "coupling_J_effective": j_eff,
        }
    )
    return record


@dataclass
class SweepResult:
    f_values: np.ndarray
    final_e_p: np.ndarray
    final_fidelity: np.ndarray
    errors: list
    argmin_f: float

    def as_rows(self):
        return list(zip(self.f_values, self.final_e_p, self.final_fidelity))


def _sweep_point(args):
    instance, schedule, f, tol = args
    bath = replace(schedule.bath, f=float(f))
    sched = replace(schedule, bath=bath)
    record, _ = run_collision_protocol(instance, sched, tol=tol, keep_joint="none")
    return float(f), record.final("e_p"), record.final("fidelity")


def final_energy_sweep(
    instance: SKInstance,
    f_values,
    schedule: StrokeSchedule,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> SweepResult:
    """Run the full protocol once per f and tabulate the final cost energy.

    Per-point failures are recorded and the sweep continues; results come
    back in grid order regardless of worker count.
    """
    f_values = np.asarray(list(f_values), dtype=float)
    if f_values.size == 0:
        raise ValueError("empty f grid")
    jobs = [(instance, schedule, f, tol) for f in f_values]
    outcomes: list = [None] * len(jobs)
    errors = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_sweep_point, job): i for i, job in enumerate(jobs)}
            for fut, i in futures.items():
                try:
                    outcomes[i] = fut.result()
                except Exception as exc:  # pragma: no cover - worker failure path
                    errors.append((float(f_values[i]), str(exc)))
                    outcomes[i] = (float(f_values[i]), np.nan, np.nan)
    else:
        for i, job in enumerate(jobs):
            try:
                outcomes[i] = _sweep_point(job)
            except Exception as exc:
                errors.append((float(f_values[i]), str(exc)))
                outcomes[i] = (float(f_values[i]), np.nan, np.nan)
    final_e = np.array([o[1] for o in outcomes])
    final_fid = np.array([o[2] for o in outcomes])
    if np.all(np.isnan(final_e)):
        argmin = np.nan
    else:
        argmin = float(f_values[int(np.nanargmin(final_e))])
    return SweepResult(
        f_values=f_values,
        final_e_p=final_e,
        final_fidelity=final_fid,
        errors=errors,
        argmin_f=argmin,
    )
