# File: app/models/errors.py
"""
Exception hierarchy for the simulator.

Every error also derives from ValueError so code that validates inputs the
plain way keeps catching them.
"""


class QKDSimError(ValueError):
    """Base class for all simulator errors"""


class ConfigurationError(QKDSimError):
    """Invalid or unreadable configuration"""


class StateError(QKDSimError):
    """Operator or state violates a physical invariant"""


class OutOfRangeError(QKDSimError):
    """Parameter outside the modelled range"""


class UnsortedStreamError(QKDSimError):
    """Timestamp stream is not sorted"""


class InsufficientSampleError(QKDSimError):
    """Not enough disclosed pairs to estimate the QBER"""


class RankDeficientError(QKDSimError):
    """Tomography settings do not span the operator space"""


class DegenerateFitError(QKDSimError):
    """QBER samples carry no oscillation to fit"""


class NoSecureOperatingPointError(QKDSimError):
    """Every probe of a scan ended in an aborted session"""
