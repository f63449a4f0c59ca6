"""Scalar diagnostics: expectation values, cost-ground fidelity, von Neumann
entropy, bath magnetization, and the thermodynamic-limit reference curve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .hamiltonians import (
    BathParameters,
    build_bath,
    build_total,
    embed_bath,
    sparse_ground_state,
)
from .instances import SKInstance, ground_state_indices
from .spinops import DensityMatrix, SparseOperator, StateVector, site_pauli

__all__ = [
    "ImaginaryResidueWarning",
    "MagnetizationPoint",
    "expectation",
    "fidelity_to_problem_ground",
    "von_neumann_entropy",
    "bath_x_magnetization",
    "pfeuty_reference",
]

_EIG_FLOOR = -1e-10
DEFAULT_PINNING_EPSILON = 1e-6


class ImaginaryResidueWarning(UserWarning):
    """A nominally real expectation value picked up a nontrivial imaginary part."""


@dataclass(frozen=True)
class MagnetizationPoint:
    f: float
    m_x: float
    mode: str  # 'free', 'interacting', or 'thermodynamic_limit'
    pinning_epsilon: float
    n_bath: int

    def __post_init__(self):
        if abs(self.m_x) > 1.0 + 1e-9:
            raise ValueError(f"|m_x| = {abs(self.m_x)} exceeds 1")


def expectation(state, op: SparseOperator) -> float:
    """Real expectation value of a Hermitian operator in a pure or mixed state."""
    if not op.hermitian:
        raise ValueError("expectation requires a Hermitian operator")
    if state.n_qubits != op.n_qubits:
        raise ValueError("state and operator dimensions do not match")
    if isinstance(state, StateVector):
        val = np.vdot(state.amplitudes, op.matrix @ state.amplitudes)
    elif isinstance(state, DensityMatrix):
        # tr(rho A) = sum_{i,j} A[i,j] rho[j,i]
        val = op.matrix.multiply(state.matrix.T).sum()
    else:
        raise TypeError(f"unsupported state type {type(state)!r}")
    val = complex(val)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        warnings.warn(
            f"expectation has imaginary residue {val.imag:.3e}",
            ImaginaryResidueWarning,
            stacklevel=2,
        )
    return float(val.real)


def fidelity_to_problem_ground(state, instance: SKInstance) -> float:
    """Population of the cost ground configuration(s).

    The cost operator is diagonal, so this is a plain sum of basis
    populations; degenerate ground sets are summed over.
    """
    idx = ground_state_indices(instance)
    if isinstance(state, StateVector):
        pops = np.abs(state.amplitudes[idx]) ** 2
    elif isinstance(state, DensityMatrix):
        pops = np.real(np.diag(state.matrix)[idx])
    else:
        raise TypeError(f"unsupported state type {type(state)!r}")
    return float(min(max(pops.sum(), 0.0), 1.0))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-tr(rho ln rho) with 0 ln 0 = 0; tiny negative eigenvalues are clamped."""
    evals = np.linalg.eigvalsh(rho.matrix)
    if evals.min() < _EIG_FLOOR:
        raise ValueError(f"eigenvalue {evals.min():.3e} below {_EIG_FLOOR}")
    evals = evals.clip(min=0.0)
    positive = evals[evals > 0.0]
    return float(-(positive * np.log(positive)).sum())


def pfeuty_reference(f: float) -> float:
    """Thermodynamic-limit x-magnetization of the transverse-field chain.

    With lambda = (1-f)/f the ordered phase (f < 1/2) carries
    m_x = (1 - lambda^-2)^(1/8); the disordered phase has m_x = 0.
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"f={f} outside [0, 1]")
    if f == 0.0:
        return 1.0
    if f >= 0.5:
        return 0.0
    ratio = f / (1.0 - f)  # = 1/lambda < 1
    return float((1.0 - ratio * ratio) ** 0.125)


def _bath_site_expectations(rho_bath: np.ndarray, n_bath: int) -> np.ndarray:
    vals = np.empty(n_bath)
    for i in range(n_bath):
        x_i = site_pauli("x", i + 1, n_bath).matrix
        vals[i] = float(np.real(x_i.multiply(rho_bath.T).sum()))
    return vals


def bath_x_magnetization(
    instance: SKInstance | None,
    params: BathParameters,
    pinning_epsilon: float = DEFAULT_PINNING_EPSILON,
    mode: str | None = None,
    estimator: str = "pinning",
) -> MagnetizationPoint:
    """Per-site x-magnetization of the bath ground state.

    'free' diagonalizes the bare chain, 'interacting' the full coupled
    Hamiltonian (requires an instance). The finite-size Z2 symmetry is
    broken by a -epsilon X_1 pinning term and the site-averaged |<X_i>| is
    reported; estimator='correlation' instead uses
    sqrt(<X_1 X_N>) of the unpinned ground state.
    """
    if mode is None:
        mode = "interacting" if instance is not None else "free"
    if mode == "thermodynamic_limit":
        return MagnetizationPoint(
            f=params.f,
            m_x=pfeuty_reference(params.f),
            mode=mode,
            pinning_epsilon=0.0,
            n_bath=params.n_bath,
        )
    if mode == "interacting" and instance is None:
        raise ValueError("interacting mode needs a disorder instance")
    if estimator not in ("pinning", "correlation"):
        raise ValueError("estimator must be 'pinning' or 'correlation'")

    nb = params.n_bath
    epsilon = pinning_epsilon if estimator == "pinning" else 0.0
    pin = (-epsilon) * site_pauli("x", 1, nb).matrix
    if mode == "free":
        ham = build_bath(params).matrix + pin
        op = SparseOperator(nb, ham.tocsr())
        _, ground = sparse_ground_state(op)
        block = ground.amplitudes[None, :]
    elif mode == "interacting":
        joint = build_total(instance, params).matrix
        joint = joint + embed_bath(SparseOperator(nb, pin.tocsr()), instance.n).matrix
        op = SparseOperator(instance.n + nb, joint.tocsr())
        _, ground = sparse_ground_state(op)
        block = ground.amplitudes.reshape(1 << instance.n, 1 << nb)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    rho_bath = block.T @ block.conj()
    rho_bath = 0.5 * (rho_bath + rho_bath.conj().T)
    if estimator == "pinning":
        m_x = float(np.mean(np.abs(_bath_site_expectations(rho_bath, nb))))
    else:
        xx = (
            site_pauli("x", 1, nb).matrix @ site_pauli("x", nb, nb).matrix
            if nb > 1
            else site_pauli("x", 1, nb).matrix @ site_pauli("x", 1, nb).matrix
        )
        corr = float(np.real(xx.multiply(rho_bath.T).sum()))
        m_x = float(np.sqrt(max(corr, 0.0)))
    m_x = min(m_x, 1.0)
    return MagnetizationPoint(
        f=params.f, m_x=m_x, mode=mode, pinning_epsilon=epsilon, n_bath=nb
    )
