# File: app/models/quantum.py
"""
Phase-Shifted Bell State QKD Simulator - Quantum Value Types
Immutable numpy-backed polarization vectors, Jones matrices, two-qubit kets
and density matrices. Two-qubit basis order is (HH, HV, VH, VV) with Alice
as the first tensor factor.
"""

from __future__ import annotations

from typing import Iterable, Union

import numpy as np

from app.models.errors import StateError

BASIS_ORDER = ("HH", "HV", "VH", "VV")

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-8

ArrayLike = Union[np.ndarray, Iterable]


def _frozen(values: ArrayLike, shape: tuple) -> np.ndarray:
    data = np.array(values, dtype=complex)
    if data.shape != shape:
        raise StateError(f"Expected shape {shape}, got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise StateError("Entries must be finite")
    data.setflags(write=False)
    return data


class _ComplexArray:
    """Shared plumbing for the value types"""

    shape: tuple = ()

    def __init__(self, values: ArrayLike):
        self._data = _frozen(values, self.shape)

    @property
    def data(self) -> np.ndarray:
        return self._data

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def allclose(self, other: "_ComplexArray", tol: float = 1e-10) -> bool:
        return bool(np.allclose(self._data, np.asarray(other), atol=tol, rtol=0.0))

    def __repr__(self):
        return f"<{type(self).__name__}({np.array2string(self._data, precision=4)})>"


# -------------------------------------------------
# Single-photon polarization
# -------------------------------------------------

class JonesVector(_ComplexArray):
    """
    Polarization state (c_H, c_V)
    """
    shape = (2,)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self._data))

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm ** 2 - 1.0) < NORM_TOL

    def normalized(self) -> "JonesVector":
        norm = self.norm
        if norm == 0.0:
            raise StateError("Cannot normalize the zero vector")
        return JonesVector(self._data / norm)


class JonesMatrix(_ComplexArray):
    """
    2x2 polarization transform acting on JonesVector
    """
    shape = (2, 2)

    @classmethod
    def identity(cls) -> "JonesMatrix":
        return cls(np.eye(2))

    def dagger(self) -> "JonesMatrix":
        return JonesMatrix(self._data.conj().T)

    def is_unitary(self, tol: float = NORM_TOL) -> bool:
        deviation = self._data.conj().T @ self._data - np.eye(2)
        return float(np.max(np.abs(deviation))) < tol

    def __matmul__(self, other):
        if isinstance(other, JonesMatrix):
            return JonesMatrix(self._data @ other.data)
        if isinstance(other, JonesVector):
            return JonesVector(self._data @ other.data)
        return NotImplemented

    def __neg__(self) -> "JonesMatrix":
        return JonesMatrix(-self._data)


# -------------------------------------------------
# Two-photon states
# -------------------------------------------------

class TwoQubitKet(_ComplexArray):
    """
    Normalized biphoton polarization ket over (HH, HV, VH, VV)
    """
    shape = (4,)

    def __init__(self, values: ArrayLike):
        super().__init__(values)
        norm_sq = float(np.vdot(self._data, self._data).real)
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise StateError(f"Ket is not normalized (norm^2={norm_sq:.3e})")

    @classmethod
    def from_unnormalized(cls, values: ArrayLike) -> "TwoQubitKet":
        data = np.array(values, dtype=complex)
        norm = np.linalg.norm(data)
        if norm == 0.0:
            raise StateError("Cannot normalize the zero ket")
        return cls(data / norm)

    def amplitude(self, label: str) -> complex:
        return complex(self._data[BASIS_ORDER.index(label)])


class DensityMatrix4(_ComplexArray):
    """
    Two-qubit density matrix over (HH, HV, VH, VV)

    Hermiticity and unit trace are always enforced. Positivity is enforced
    unless require_physical is False (raw linear-inversion output).
    """
    shape = (4, 4)

    def __init__(self, values: ArrayLike, require_physical: bool = True):
        super().__init__(values)
        if float(np.max(np.abs(self._data - self._data.conj().T))) > HERMITIAN_TOL:
            raise StateError("Density matrix is not Hermitian")
        trace = complex(np.trace(self._data))
        if abs(trace - 1.0) > TRACE_TOL:
            raise StateError(f"Density matrix trace is {trace.real:.6f}, expected 1")
        if require_physical and self.min_eigenvalue < EIGENVALUE_FLOOR:
            raise StateError(f"Density matrix has negative eigenvalue {self.min_eigenvalue:.3e}")

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix4":
        return cls(np.eye(4) / 4.0)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._data)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= EIGENVALUE_FLOOR
