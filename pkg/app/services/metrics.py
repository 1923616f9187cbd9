# File: app/services/metrics.py
"""
Closed-form laws for phase-shifted Bell states, empirical CHSH evaluation and
the compensation-angle solver.

    S(phi)    = sqrt(2) + sqrt(2)|cos phi|
    V(phi)    = S / (2 sqrt(2)) = (1 + |cos phi|) / 2
    QBER(phi) = (1 - V) / 2     = (1 - |cos phi|) / 4

The absolute values correspond to picking the better CHSH sign combination
(and the better X-basis bit convention) for each phi.
"""

import math
from typing import Optional

import numpy as np
from scipy.special import xlogy

from app.models.models import AnalyzerSettings, MetricsReport, PhaseWindow
from app.models.quantum import DensityMatrix4

SQRT2 = math.sqrt(2.0)

# Asymptotic BBM92 security threshold; 1 - 2 h2(Q) vanishes just above it
SECURITY_THRESHOLD = 0.11


def chsh_s(phi: float) -> float:
    return SQRT2 + SQRT2 * abs(math.cos(phi))


def visibility(phi: float) -> float:
    return (1.0 + abs(math.cos(phi))) / 2.0


def qber_analytic(phi: float) -> float:
    return (1.0 - abs(math.cos(phi))) / 4.0


def composite_qber(phi: float, noise_p: float) -> float:
    """
    Pooled Z/X QBER of a Werner-mixed phase-shifted Bell state.

    White noise disagrees with probability 1/2 in any basis.
    """
    return (1.0 - noise_p) * qber_analytic(phi) + noise_p / 2.0


def metrics_report(phi: float) -> MetricsReport:
    s_value = chsh_s(phi)
    v = s_value / (2.0 * SQRT2)
    return MetricsReport(s_value=s_value, visibility=v, qber=(1.0 - v) / 2.0)


def secure_phase_window(threshold: float = SECURITY_THRESHOLD) -> PhaseWindow:
    """
    |phi| (mod pi) range whose analytic QBER stays <= threshold
    """
    if not 0.0 < threshold <= 0.25:
        raise ValueError("threshold must be in (0, 0.25]")
    return PhaseWindow(half_width=math.acos(1.0 - 4.0 * threshold), threshold=threshold)


def binary_entropy(q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be a probability")
    return float(-(xlogy(q, q) + xlogy(1.0 - q, 1.0 - q)) / math.log(2.0))


def secure_key_rate(qber: float) -> float:
    """Asymptotic BBM92 rate max(0, 1 - 2 h2(Q))"""
    return max(0.0, 1.0 - 2.0 * binary_entropy(qber))


def _analyzer(angle: float) -> np.ndarray:
    """Projectors onto the + and - ports of a linear analyzer"""
    plus = np.array([math.cos(angle), math.sin(angle)])
    minus = np.array([-math.sin(angle), math.cos(angle)])
    return np.stack([np.outer(plus, plus), np.outer(minus, minus)])


def correlation_e(state: DensityMatrix4, alpha: float, beta: float) -> float:
    """
    E(alpha, beta) = p(++) + p(--) - p(+-) - p(-+)
    """
    proj_a = _analyzer(alpha)
    proj_b = _analyzer(beta)
    signs = ((1.0, -1.0), (-1.0, 1.0))
    value = 0.0
    for i in range(2):
        for j in range(2):
            p = np.trace(state.data @ np.kron(proj_a[i], proj_b[j])).real
            value += signs[i][j] * p
    return float(value)


def chsh_from_state(state: DensityMatrix4, settings: Optional[AnalyzerSettings] = None) -> float:
    """
    S = |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|
    """
    s = settings or AnalyzerSettings.canonical()
    return abs(correlation_e(state, s.a, s.b) - correlation_e(state, s.a, s.b_prime)) + abs(
        correlation_e(state, s.a_prime, s.b) + correlation_e(state, s.a_prime, s.b_prime)
    )


def compensation_angle(phi_un: float, theta_H_P: float) -> float:
    """
    Receiver HWP angle in [0, pi/2) cancelling the relative phase.

    Solves phi_un + 2 phi_g^P - 2 phi_g^AB = 0 (mod 2 pi) with
    phi_g = 2 theta; the compensated state is (|HH> + |VV>)/sqrt(2).
    """
    theta = ((phi_un + 4.0 * theta_H_P) / 4.0) % (math.pi / 2)
    return 0.0 if math.isclose(theta, math.pi / 2) else theta


def residual_phase(phi_un: float, theta_H_P: float, theta_H_AB: Optional[float] = None) -> float:
    """
    Plus-branch relative phase of the shared state.

    Without a receiver element the pump-side state sits on the minus branch.
    """
    if theta_H_AB is None:
        return (phi_un + 4.0 * theta_H_P + math.pi) % (2 * math.pi)
    return (phi_un + 4.0 * theta_H_P - 4.0 * theta_H_AB) % (2 * math.pi)


def pump_compensation_angle(phi_un: float) -> float:
    """
    Pump HWP angle in [0, pi/2) that makes the emitted state (|HH> + |VV>)/sqrt(2)

    The pump-side state sits on the minus branch, so phi_un + 4 theta must be pi.
    """
    theta = ((math.pi - phi_un) / 4.0) % (math.pi / 2)
    return 0.0 if math.isclose(theta, math.pi / 2) else theta
