"""Piecewise-constant time evolution: adaptive Lanczos propagation of state
vectors, a block Chebyshev propagator for many columns at once, and the
quench-walk / annealing baseline protocols.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.special import jv

from .hamiltonians import (
    WalkParameters,
    build_driver,
    build_problem,
    build_walk,
    driver_ground_state,
    problem_diagonal,
    sparse_ground_state,
)
from .instances import SKInstance, brute_force_ground, ground_state_indices
from .spinops import SparseOperator, StateVector

__all__ = [
    "PiecewiseSchedule",
    "TrajectoryRecord",
    "krylov_propagate",
    "chebyshev_propagate_block",
    "spectral_bounds",
    "propagate_piecewise",
    "run_quench_walk",
    "run_anneal",
]

DEFAULT_TOL = 1e-9
MAX_KRYLOV_DIM = 40
_MAX_SUBSTEPS = 100_000
DEFAULT_SAMPLE_DT = 0.25

# Anneal discretization default: 250 segments over t_f = 25.
DEFAULT_ANNEAL_STEPS = 250
ANNEAL_GATE_TOL = 1e-6


# ---------------------------------------------------------------------------
# Krylov propagation


def _lanczos_basis(matvec, v0, m_max, breakdown_tol=1e-13):
    """Lanczos tridiagonalization with full reorthogonalization.

    Returns (V, alpha, beta) where V has the orthonormal basis as columns,
    alpha are the m diagonal and beta the m off-diagonal coefficients
    (beta[m-1] couples to the discarded vector; it is 0 on happy breakdown).
    """
    dim = v0.size
    m_max = min(m_max, dim)
    V = np.empty((dim, m_max), dtype=np.complex128, order="F")
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[:, 0] = v0
    scale = 0.0
    for j in range(m_max):
        w = matvec(V[:, j])
        aj = float(np.real(np.vdot(V[:, j], w)))
        alpha[j] = aj
        w -= aj * V[:, j]
        if j > 0:
            w -= beta[j - 1] * V[:, j - 1]
        # one full reorthogonalization pass keeps the basis clean
        w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        bj = float(np.linalg.norm(w))
        scale = max(scale, abs(aj), bj)
        beta[j] = bj
        if bj <= breakdown_tol * max(scale, 1.0):
            return V[:, : j + 1], alpha[: j + 1], beta[: j + 1]
        if j + 1 < m_max:
            V[:, j + 1] = w / bj
    return V, alpha, beta


def _tridiag_expv(alpha, beta, tau):
    """(expm(-i*tau*T) e_1, |last component|) for the Lanczos tridiagonal T."""
    m = alpha.size
    if m == 1:
        w = np.array([np.exp(-1j * tau * alpha[0])])
        return w, abs(w[0])
    ev, U = la.eigh_tridiagonal(alpha, beta[: m - 1])
    w = U @ (np.exp(-1j * tau * ev) * U[0, :])
    return w, abs(w[-1])


def krylov_propagate(
    op: SparseOperator,
    psi: StateVector,
    t: float,
    tol: float = DEFAULT_TOL,
    max_krylov: int = MAX_KRYLOV_DIM,
) -> StateVector:
    """e^{-iHt} psi via adaptive Lanczos with sub-stepping.

    The accumulated error estimate is kept below `tol`; the result's norm
    matches the input norm to machine precision because the small
    exponential is exactly unitary. Negative t propagates backwards.
    """
    if op.n_qubits != psi.n_qubits:
        raise ValueError("operator and state dimensions do not match")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t == 0.0:
        return psi.copy()
    matvec = lambda x: op.matrix @ x  # noqa: E731
    amps = _propagate_vector(matvec, psi.amplitudes, t, tol, max_krylov)
    return StateVector(psi.n_qubits, amps)


def _propagate_vector(matvec, amplitudes, t, tol, max_krylov=MAX_KRYLOV_DIM):
    v = amplitudes
    beta0 = float(np.linalg.norm(v))
    if beta0 == 0.0:
        return v.copy()
    total = abs(t)
    sign = 1.0 if t > 0 else -1.0
    done = 0.0
    substeps = 0
    while done < total:
        remaining = total - done
        V, alpha, beta = _lanczos_basis(matvec, v / beta0, max_krylov)
        m = alpha.size
        happy = beta[m - 1] <= 1e-12 * max(1.0, np.abs(alpha).max())
        tau = remaining
        if not happy:
            # residual-style estimate: err(tau) ~ tau * beta_m * |w_m(tau)|;
            # shrink tau until the per-step budget tol*tau/total is met
            while True:
                w, tail = _tridiag_expv(alpha, beta, sign * tau)
                err = tau * beta[m - 1] * tail
                if err <= tol * (tau / total) or tau <= remaining * 1e-12:
                    break
                tau *= 0.5
            if tau <= remaining * 1e-12:
                raise RuntimeError(
                    "Krylov propagation failed to converge; increase max_krylov"
                )
        else:
            w, _ = _tridiag_expv(alpha, beta, sign * tau)
        v = V @ (beta0 * w)
        done += tau
        substeps += 1
        if substeps > _MAX_SUBSTEPS:
            raise RuntimeError("Krylov propagation exceeded the substep limit")
    return v


# ---------------------------------------------------------------------------
# Block Chebyshev propagation (used for stroke-channel construction)


def spectral_bounds(matvec, dim: int, probes: int = 80, seed: int = 2024):
    """Padded (lower, upper) bounds on the spectrum from a Lanczos probe."""
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v0 /= np.linalg.norm(v0)
    _, alpha, beta = _lanczos_basis(matvec, v0, min(probes, dim))
    m = alpha.size
    if m == 1:
        lo = hi = alpha[0]
    else:
        ritz = la.eigvalsh_tridiagonal(alpha, beta[: m - 1])
        lo, hi = float(ritz[0]), float(ritz[-1])
    span = max(hi - lo, 1e-12)
    pad = 0.05 * span + 0.5
    return lo - pad, hi + pad


def _chebyshev_coefficients(at: float, tol: float) -> np.ndarray:
    """Coefficients c_k = (2 - delta_k0) (-i)^k J_k(a t) with a truncated tail."""
    k_guess = int(abs(at) + 40 + 12 * abs(at) ** (1.0 / 3.0))
    orders = np.arange(k_guess + 1)
    bess = jv(orders, at)
    tail = np.cumsum(np.abs(bess[::-1]))[::-1]
    keep = np.nonzero(tail > 0.1 * tol)[0]
    k_max = int(keep[-1]) + 1 if keep.size else 1
    k_max = min(k_max, k_guess)
    coeff = bess[: k_max + 1].astype(np.complex128)
    coeff *= (-1j) ** orders[: k_max + 1]
    coeff[1:] *= 2.0
    return coeff


def chebyshev_propagate_block(
    matvec,
    block: np.ndarray,
    t: float,
    bounds: tuple[float, float],
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """e^{-iHt} applied to every column of `block`.

    `bounds` must enclose the full spectrum of H; the expansion degree grows
    linearly with the half-span times |t|. Columns are propagated together,
    which is the whole point: the Hamiltonian is applied to a matrix.
    """
    lo, hi = bounds
    half = 0.5 * (hi - lo)
    center = 0.5 * (hi + lo)
    if half <= 0:
        raise ValueError("empty spectral interval")
    if t == 0.0:
        return block.copy()
    coeff = _chebyshev_coefficients(half * t, tol)
    inv_half = 1.0 / half

    def scaled(X):
        return (matvec(X) - center * X) * inv_half

    t_prev = block
    t_cur = scaled(block)
    acc = coeff[0] * t_prev + coeff[1] * t_cur
    for k in range(2, coeff.size):
        t_next = 2.0 * scaled(t_cur) - t_prev
        acc += coeff[k] * t_next
        t_prev, t_cur = t_cur, t_next
    acc *= np.exp(-1j * center * t)
    return acc


# ---------------------------------------------------------------------------
# Schedules and trajectory records


@dataclass(frozen=True)
class PiecewiseSchedule:
    """Constant-Hamiltonian segments plus the instants at which to sample."""

    segments: list  # of (duration, SparseOperator)
    sample_times: np.ndarray

    def __post_init__(self):
        durations = [d for d, _ in self.segments]
        if any(d <= 0 for d in durations):
            raise ValueError("segment durations must be positive")
        total = sum(durations)
        times = np.asarray(self.sample_times, dtype=float)
        if times.size and (times.min() < 0 or times.max() > total + 1e-12):
            raise ValueError("sample times must lie within the schedule span")
        if np.any(np.diff(times) < 0):
            raise ValueError("sample times must be sorted")
        object.__setattr__(self, "sample_times", times)

    @property
    def total_duration(self) -> float:
        return float(sum(d for d, _ in self.segments))


@dataclass
class TrajectoryRecord:
    """Observable time series with optional stroke annotations.

    Columns that do not apply to a protocol hold NaN (e_driver outside walk
    runs) or -1 (stroke_index outside collision runs).
    """

    times: np.ndarray
    stroke_index: np.ndarray
    e_p: np.ndarray
    e_driver: np.ndarray
    e_total: np.ndarray
    fidelity: np.ndarray
    entropy: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.size

    def validate(self, n_qubits: int) -> None:
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be non-decreasing")
        fid = self.fidelity[~np.isnan(self.fidelity)]
        if fid.size and (fid.min() < -1e-9 or fid.max() > 1 + 1e-9):
            raise ValueError("fidelity outside [0, 1]")
        ent = self.entropy[~np.isnan(self.entropy)]
        smax = n_qubits * np.log(2.0)
        if ent.size and (ent.min() < -1e-9 or ent.max() > smax + 1e-9):
            raise ValueError("entropy outside [0, n ln 2]")

    def final(self, column: str) -> float:
        return float(getattr(self, column)[-1])


class TrajectoryBuilder:
    def __init__(self, metadata: dict | None = None):
        self.rows = []
        self.metadata = dict(metadata or {})

    def add(
        self,
        time,
        e_p,
        e_total,
        fidelity,
        entropy,
        e_driver=np.nan,
        stroke=-1,
    ):
        self.rows.append(
            (float(time), int(stroke), float(e_p), float(e_driver), float(e_total), float(fidelity), float(entropy))
        )

    def finish(self) -> TrajectoryRecord:
        cols = list(zip(*self.rows)) if self.rows else [[]] * 7
        return TrajectoryRecord(
            times=np.array(cols[0], dtype=float),
            stroke_index=np.array(cols[1], dtype=int),
            e_p=np.array(cols[2], dtype=float),
            e_driver=np.array(cols[3], dtype=float),
            e_total=np.array(cols[4], dtype=float),
            fidelity=np.array(cols[5], dtype=float),
            entropy=np.array(cols[6], dtype=float),
            metadata=self.metadata,
        )


def propagate_piecewise(psi: StateVector, schedule: PiecewiseSchedule, on_sample, tol=DEFAULT_TOL):
    """Walk through the schedule, invoking on_sample(t, psi) at every sample time."""
    samples = list(schedule.sample_times)
    cursor = 0.0
    state = psi.copy()
    if samples and abs(samples[0]) < 1e-15:
        on_sample(0.0, state)
        samples.pop(0)
    for duration, op in schedule.segments:
        seg_end = cursor + duration
        while samples and samples[0] <= seg_end + 1e-12:
            target = samples.pop(0)
            step = target - cursor
            if step > 0:
                state = krylov_propagate(op, state, step, tol)
                cursor = target
            on_sample(cursor, state)
        if seg_end - cursor > 1e-12:
            state = krylov_propagate(op, state, seg_end - cursor, tol)
        cursor = seg_end
    return state


def sample_grid(t_end: float, sample_dt: float, anchors=()) -> np.ndarray:
    """Uniform grid including t=0, t_end, and any anchor instants."""
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    n = int(np.floor(t_end / sample_dt + 1e-9))
    pts = np.arange(n + 1) * sample_dt
    pts = np.concatenate([pts, [t_end], list(anchors)])
    pts = np.unique(np.round(pts, 12))
    return pts[(pts >= 0) & (pts <= t_end + 1e-12)]


# ---------------------------------------------------------------------------
# Baseline protocols


def _walk_observables(instance, ground_indices):
    hp_diag = problem_diagonal(instance)
    driver = build_driver(instance.n)

    def measure(psi: StateVector, gamma: float):
        amps = psi.amplitudes
        prob = np.abs(amps) ** 2
        e_p = float(hp_diag @ prob)
        e_driver = gamma * float(np.real(np.vdot(amps, driver.matrix @ amps)))
        fid = float(prob[ground_indices].sum())
        return e_p, e_driver, fid

    return measure


def run_quench_walk(
    instance: SKInstance,
    wp: WalkParameters,
    sample_dt: float = DEFAULT_SAMPLE_DT,
    tol: float = DEFAULT_TOL,
) -> TrajectoryRecord:
    """Two-stage quantum walk: H(gamma1) on [0, t_q], H(gamma2) afterwards.

    The state starts in the driver ground state (uniform superposition).
    At the quench instant itself the post-quench driver strength applies.
    """
    gidx = ground_state_indices(instance)
    measure = _walk_observables(instance, gidx)
    h1 = build_walk(instance, wp.gamma1)
    h2 = build_walk(instance, wp.gamma2)
    segments = []
    if wp.t_q > 0:
        segments.append((wp.t_q, h1))
    if wp.t_end > wp.t_q:
        segments.append((wp.t_end - wp.t_q, h2))
    if not segments:
        segments.append((1e-12, h2))
    grid = sample_grid(wp.t_end, sample_dt, anchors=(wp.t_q,))
    schedule = PiecewiseSchedule(segments=segments, sample_times=grid)

    ground = brute_force_ground(instance)
    e0_walk, _ = sparse_ground_state(h2)
    builder = TrajectoryBuilder(
        metadata={
            "protocol": "quench_walk",
            "gamma1": wp.gamma1,
            "gamma2": wp.gamma2,
            "t_q": wp.t_q,
            "t_end": wp.t_end,
            "sample_dt": sample_dt,
            "tol": tol,
            "e_p_ground": ground.energy,
            "e_total_ground_gamma2": e0_walk,
            "n_system": instance.n,
            "instance_seed": instance.seed,
        }
    )

    def on_sample(t, state):
        gamma = wp.gamma2 if t >= wp.t_q else wp.gamma1
        e_p, e_driver, fid = measure(state, gamma)
        builder.add(t, e_p, e_p + e_driver, fid, 0.0, e_driver=e_driver)

    final = propagate_piecewise(driver_ground_state(instance.n), schedule, on_sample, tol)
    record = builder.finish()
    record.validate(instance.n)
    record.metadata["final_norm"] = final.norm()
    return record


def run_anneal(
    instance: SKInstance,
    gamma1: float,
    gamma2: float,
    t_f: float,
    n_steps: int = DEFAULT_ANNEAL_STEPS,
    sample_dt: float = DEFAULT_SAMPLE_DT,
    tol: float = DEFAULT_TOL,
    convergence_gate: bool = True,
) -> TrajectoryRecord:
    """Linear ramp gamma(t) = gamma1 + (gamma2-gamma1) t/t_f, discretized
    midpoint-wise into n_steps constant segments.

    Reported driver energies use the nominal continuous ramp; the dynamics
    use the segment midpoints. Doubling n_steps must move the final cost
    expectation by less than ANNEAL_GATE_TOL, recorded in the metadata.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if t_f <= 0:
        raise ValueError("t_f must be positive")

    def ramp(t):
        return gamma1 + (gamma2 - gamma1) * t / t_f

    def run_once(steps, with_samples):
        delta = t_f / steps
        segments = [
            (delta, build_walk(instance, ramp((k + 0.5) * delta))) for k in range(steps)
        ]
        grid = sample_grid(t_f, sample_dt) if with_samples else np.array([t_f])
        schedule = PiecewiseSchedule(segments=segments, sample_times=grid)
        samples = []

        def on_sample(t, state):
            samples.append((t, state.copy()))

        propagate_piecewise(driver_ground_state(instance.n), schedule, on_sample, tol)
        return samples

    gidx = ground_state_indices(instance)
    measure = _walk_observables(instance, gidx)
    samples = run_once(n_steps, with_samples=True)
    ground = brute_force_ground(instance)

    gap = np.nan
    if convergence_gate:
        hp_diag = problem_diagonal(instance)
        fine = run_once(2 * n_steps, with_samples=False)
        e_fine = float(hp_diag @ np.abs(fine[-1][1].amplitudes) ** 2)
        e_coarse = float(hp_diag @ np.abs(samples[-1][1].amplitudes) ** 2)
        gap = abs(e_fine - e_coarse)

    builder = TrajectoryBuilder(
        metadata={
            "protocol": "anneal",
            "gamma1": gamma1,
            "gamma2": gamma2,
            "t_f": t_f,
            "n_steps": n_steps,
            "sample_dt": sample_dt,
            "tol": tol,
            "e_p_ground": ground.energy,
            "n_system": instance.n,
            "instance_seed": instance.seed,
            "anneal_convergence_gap": gap,
            "anneal_converged": bool(gap < ANNEAL_GATE_TOL) if convergence_gate else None,
        }
    )
    for t, state in samples:
        e_p, e_driver, fid = measure(state, ramp(t))
        builder.add(t, e_p, e_p + e_driver, fid, 0.0, e_driver=e_driver)
    record = builder.finish()
    record.validate(instance.n)
    return record
