# File: app/services/polarization.py
"""
Jones calculus for single-photon polarization.

Convention: a retarder with fast axis at theta and retardance gamma is
R(theta) diag(e^{i gamma/2}, e^{-i gamma/2}) R(-theta), with R the active
rotation. With it hwp(pi/8) maps H to D, and
qwp(pi/4) hwp(theta) qwp(pi/4) = i * qhq(theta), the closed form of the
quarter-half-quarter element up to the global phase i.
"""

import math
from typing import Sequence, Union

import numpy as np

from app.models.errors import StateError
from app.models.models import PlateKind, WavePlateSetting
from app.models.quantum import JonesMatrix, JonesVector

HALF_WAVE = math.pi
QUARTER_WAVE = math.pi / 2

H = JonesVector([1.0, 0.0])
V = JonesVector([0.0, 1.0])
D = JonesVector([1.0, 1.0]).normalized()
A = JonesVector([1.0, -1.0]).normalized()
R = JonesVector([1.0, 1j]).normalized()
L = JonesVector([1.0, -1j]).normalized()


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def retarder(theta: float, retardance: float) -> JonesMatrix:
    """Linear retarder with fast axis at theta"""
    if not (math.isfinite(theta) and math.isfinite(retardance)):
        raise ValueError("Wave plate angles must be finite")
    core = np.diag([np.exp(0.5j * retardance), np.exp(-0.5j * retardance)])
    return JonesMatrix(_rotation(theta) @ core @ _rotation(-theta))


def hwp(theta: float) -> JonesMatrix:
    """Half-wave plate; hwp(theta) == hwp(theta + pi)"""
    return retarder(theta, HALF_WAVE)


def qwp(theta: float) -> JonesMatrix:
    """Quarter-wave plate; qwp(theta) @ qwp(theta) == hwp(theta)"""
    return retarder(theta, QUARTER_WAVE)


def qhq(theta_H: float) -> JonesMatrix:
    """
    Geometric-phase element: diag(e^{2i theta}, -e^{-2i theta})

    Equals qwp(pi/4) hwp(theta_H) qwp(pi/4) up to the global phase i.
    """
    if not math.isfinite(theta_H):
        raise ValueError("theta_H must be finite")
    return JonesMatrix(np.diag([np.exp(2j * theta_H), -np.exp(-2j * theta_H)]))


def wave_plate(setting: WavePlateSetting) -> JonesMatrix:
    if setting.kind == PlateKind.HALF:
        return hwp(setting.fast_axis_angle)
    return qwp(setting.fast_axis_angle)


def compose(ms: Sequence[JonesMatrix]) -> JonesMatrix:
    """
    Product of the sequence; the first element acts first on the state
    """
    if len(ms) == 0:
        raise ValueError("compose needs at least one matrix")
    result = ms[0]
    for m in ms[1:]:
        result = m @ result
    return result


def apply(m: JonesMatrix, v: JonesVector) -> JonesVector:
    """m acting on v; rejects a non-unitary m"""
    if not m.is_unitary(tol=1e-10):
        raise StateError("Polarization transform is not unitary")
    return m @ v


def relative_phase(m: JonesMatrix) -> float:
    """arg(m_VV / m_HH) in [0, 2 pi) for a diagonal element"""
    return float(np.angle(m.data[1, 1] / m.data[0, 0]) % (2 * math.pi))


def pump_polarization(theta_H_P: float) -> JonesVector:
    """
    Diagonal pump after the pump-side QHQ element:
    (e^{2i theta}|H> - e^{-2i theta}|V>)/sqrt(2)
    """
    return apply(qhq(theta_H_P), D)


def equal_up_to_global_phase(
    a: Union[JonesMatrix, JonesVector, np.ndarray],
    b: Union[JonesMatrix, JonesVector, np.ndarray],
    tol: float = 1e-10,
) -> bool:
    """
    True iff a == e^{i gamma} b for some real gamma.

    The phase reference is a's largest-magnitude entry.
    """
    x = np.asarray(a, dtype=complex)
    y = np.asarray(b, dtype=complex)
    if x.shape != y.shape:
        raise StateError(f"Shape mismatch: {x.shape} vs {y.shape}")
    ref = np.unravel_index(np.argmax(np.abs(x)), x.shape)
    if abs(x[ref]) < tol:
        return bool(np.max(np.abs(y)) < tol)
    if abs(y[ref]) < tol:
        return False
    gamma = np.angle(y[ref]) - np.angle(x[ref])
    return bool(np.max(np.abs(x * np.exp(1j * gamma) - y)) < tol)
