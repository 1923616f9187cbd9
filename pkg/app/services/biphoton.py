# File: app/services/biphoton.py
"""
Two-qubit polarization states: phase-shifted Bell states, local unitaries,
pump and receiver geometric-phase transfer, white-noise mixing and state
metrics.

Amplitudes are tracked exactly; comparisons between states are made up to
global phase, and canonicalize() fixes the HH amplitude real positive.
"""

import logging
import math
from typing import Optional

import numpy as np

from app.models.errors import StateError
from app.models.models import BellSign, BellStateSpec, Party
from app.models.quantum import DensityMatrix4, JonesMatrix, TwoQubitKet
from app.services.polarization import qhq

logger = logging.getLogger(__name__)

SQRT_HALF = 1.0 / math.sqrt(2.0)
SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]])
SPIN_FLIP = np.kron(SIGMA_Y, SIGMA_Y)
# density-matrix eigenvalues below this are rounding noise
CONCURRENCE_EIGEN_CUTOFF = 1e-14


def phase_shifted_bell(spec: BellStateSpec) -> TwoQubitKet:
    """
    (|HH> +/- e^{i phi}|VV>)/sqrt(2)
    """
    sign = 1.0 if spec.sign == BellSign.PLUS else -1.0
    vv = sign * np.exp(1j * spec.relative_phase)
    return TwoQubitKet([SQRT_HALF, 0.0, 0.0, SQRT_HALF * vv])


PHI_PLUS = phase_shifted_bell(BellStateSpec(relative_phase=0.0))
PHI_MINUS = phase_shifted_bell(BellStateSpec(relative_phase=math.pi))


def _check_unitary(u: JonesMatrix, name: str):
    if not u.is_unitary(tol=1e-10):
        raise StateError(f"{name} is not unitary")


def apply_local(u_a: JonesMatrix, u_b: JonesMatrix, s: TwoQubitKet) -> TwoQubitKet:
    """
    (u_a ⊗ u_b)|s>, Alice first
    """
    _check_unitary(u_a, "u_a")
    _check_unitary(u_b, "u_b")
    out = np.kron(u_a.data, u_b.data) @ s.data
    return TwoQubitKet.from_unnormalized(out)


def apply_local_density(u_a: JonesMatrix, u_b: JonesMatrix, rho: DensityMatrix4) -> DensityMatrix4:
    _check_unitary(u_a, "u_a")
    _check_unitary(u_b, "u_b")
    u = np.kron(u_a.data, u_b.data)
    out = u @ rho.data @ u.conj().T
    return DensityMatrix4(0.5 * (out + out.conj().T))


def state_after_pump_gp(phi_un: float, theta_H_P: float) -> TwoQubitKet:
    """
    (|HH> - e^{i(phi_un + 2 phi_g)}|VV>)/sqrt(2), phi_g = 2 theta_H_P
    """
    phi_g = 2.0 * theta_H_P
    return phase_shifted_bell(BellStateSpec(relative_phase=phi_un + 2.0 * phi_g, sign=BellSign.MINUS))


def state_after_receiver_gp(s: TwoQubitKet, theta_H_AB: float, party: Party = Party.BOB) -> TwoQubitKet:
    """
    Apply the receiver QHQ element on one party's photon.

    For a pump-side state the result carries the relative phase
    phi_un + 2 phi_g^P - 2 phi_g^AB on the plus branch.
    """
    element = qhq(theta_H_AB)
    identity = JonesMatrix.identity()
    if party == Party.ALICE:
        return apply_local(element, identity, s)
    return apply_local(identity, element, s)


def ket_to_density(s: TwoQubitKet) -> DensityMatrix4:
    return DensityMatrix4(np.outer(s.data, s.data.conj()))


def werner_mix(s: TwoQubitKet, p: float) -> DensityMatrix4:
    """
    (1 - p)|s><s| + p I/4
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Werner parameter must be in [0, 1], got {p}")
    pure = np.outer(s.data, s.data.conj())
    return DensityMatrix4((1.0 - p) * pure + p * np.eye(4) / 4.0)


def fidelity(rho: DensityMatrix4, target: TwoQubitKet) -> float:
    """
    <target|rho|target>
    """
    norm_sq = float(np.vdot(target.data, target.data).real)
    if abs(norm_sq - 1.0) > 1e-10:
        raise StateError("Fidelity target must be normalized")
    value = float(np.vdot(target.data, rho.data @ target.data).real)
    return min(max(value, 0.0), 1.0)


def concurrence(rho: DensityMatrix4) -> float:
    """
    Wootters concurrence from the spin-flipped spectrum.

    The lambdas are the singular values of sqrt(rho) (Y⊗Y) sqrt(rho)*, so
    no square root is taken of the near-zero part of the spectrum.
    """
    w, v = np.linalg.eigh(rho.data)
    w = np.where(w > CONCURRENCE_EIGEN_CUTOFF, w, 0.0)
    sqrt_rho = (v * np.sqrt(w)) @ v.conj().T
    lambdas = np.linalg.svd(sqrt_rho @ SPIN_FLIP @ sqrt_rho.conj(), compute_uv=False)
    value = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]
    return float(min(max(value, 0.0), 1.0))


def purity(rho: DensityMatrix4) -> float:
    return float(np.trace(rho.data @ rho.data).real)


def canonicalize(s: TwoQubitKet) -> TwoQubitKet:
    """
    Remove the global phase: HH amplitude real positive (largest amplitude if HH vanishes)
    """
    data = s.data
    ref = 0 if abs(data[0]) > 1e-9 else int(np.argmax(np.abs(data)))
    return TwoQubitKet(data * np.exp(-1j * np.angle(data[ref])))


def relative_phase(s: TwoQubitKet) -> float:
    """
    Plus-branch relative phase arg(c_VV / c_HH) in [0, 2 pi)
    """
    hh, vv = s.data[0], s.data[3]
    if abs(hh) < 1e-9 or abs(vv) < 1e-9:
        raise StateError("Relative phase needs both HH and VV amplitudes")
    return float(np.angle(vv / hh) % (2 * math.pi))


_NAMED_PHASES = (
    (0.0, "(HH + VV)/√2"),
    (math.pi / 2, "(HH + iVV)/√2"),
    (math.pi, "(HH − VV)/√2"),
    (3 * math.pi / 2, "(HH − iVV)/√2"),
)


def state_label(s: TwoQubitKet, tol: float = 1e-6) -> str:
    """
    Short label for an HH/VV superposition, e.g. "(HH − iVV)/√2"
    """
    phi = relative_phase(s)
    for phase, label in _NAMED_PHASES:
        if abs(math.remainder(phi - phase, 2 * math.pi)) < tol:
            return label
    return f"(HH + e^(i{math.degrees(phi):.1f}°)VV)/√2"


def bell_from_phase(phi: float, sign: Optional[BellSign] = None) -> TwoQubitKet:
    """Plus-branch phase-shifted Bell state"""
    return phase_shifted_bell(BellStateSpec(relative_phase=phi, sign=sign or BellSign.PLUS))
