#!/usr/bin/env python3
"""
Phase-Shifted Bell State QKD Simulator - Domain Models
Pydantic models for configuration objects and records, validated on
construction. All angles are radians, times seconds, lengths millimeters.
"""

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from app.models.quantum import BASIS_ORDER, DensityMatrix4
from app.utils.utils import SerializationUtils

TWO_PI = 2.0 * math.pi
ARCSEC = math.pi / (180.0 * 3600.0)

# Werner admixture: 3.8% QBER floor (noise_p / 2), 26.1% peak on a 2 deg pump grid
DEFAULT_NOISE_P = 0.076


class Party(str, Enum):
    ALICE = "A"
    BOB = "B"


class Basis(str, Enum):
    Z = "Z"
    X = "X"


class PlateKind(str, Enum):
    HALF = "half"
    QUARTER = "quarter"


class BellSign(str, Enum):
    PLUS = "+"
    MINUS = "-"


class XParity(str, Enum):
    """Bob's X-basis bit convention"""
    AUTO = "auto"
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"


class ProjectorLabel(str, Enum):
    H = "H"
    V = "V"
    D = "D"
    A = "A"
    R = "R"
    L = "L"


class ExperimentName(str, Enum):
    SWEEP_PUMP_PHASE = "sweep-pump-phase"
    SWEEP_CRYSTAL = "sweep-crystal"
    COMPENSATE = "compensate"
    TOMOGRAPHY = "tomography"
    BBM92_RUN = "bbm92-run"
    TABLE1 = "table1"


# -------------------------------------------------
# Polarization Models
# -------------------------------------------------

class WavePlateSetting(BaseModel):
    """
    Wave plate kind and fast-axis angle, reduced modulo pi
    """
    model_config = ConfigDict(frozen=True)

    kind: PlateKind
    fast_axis_angle: float

    @field_validator("fast_axis_angle")
    @classmethod
    def reduce_angle(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("fast_axis_angle must be finite")
        return value % math.pi


class BellStateSpec(BaseModel):
    """
    (|HH> +/- e^{i phi}|VV>)/sqrt(2)
    """
    model_config = ConfigDict(frozen=True)

    relative_phase: float = 0.0
    sign: BellSign = BellSign.PLUS

    @field_validator("relative_phase")
    @classmethod
    def reduce_phase(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("relative_phase must be finite")
        reduced = value % TWO_PI
        return 0.0 if math.isclose(reduced, TWO_PI) else reduced


# -------------------------------------------------
# Metrics Models
# -------------------------------------------------

class MetricsReport(BaseModel):
    s_value: float
    visibility: float = Field(ge=0.0, le=1.0)
    qber: float = Field(ge=0.0, le=1.0)


class AnalyzerSettings(BaseModel):
    """
    Linear analyzer angles for a CHSH measurement
    """
    model_config = ConfigDict(frozen=True)

    a: float
    a_prime: float
    b: float
    b_prime: float

    @field_validator("a", "a_prime", "b", "b_prime")
    @classmethod
    def validate_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Analyzer angles must be finite")
        return value

    @classmethod
    def canonical(cls) -> "AnalyzerSettings":
        """(0, 45, 22.5, 67.5) degrees"""
        return cls(a=0.0, a_prime=math.pi / 4, b=math.pi / 8, b_prime=3 * math.pi / 8)


class PhaseWindow(BaseModel):
    """
    Relative phases |phi| <= half_width (and around pi) keep the QBER under threshold
    """
    half_width: float
    threshold: float

    def contains(self, phi: float) -> bool:
        return abs(math.cos(phi)) >= math.cos(self.half_width) - 1e-15


# -------------------------------------------------
# Source Models
# -------------------------------------------------

class SourceConfig(BaseModel):
    """
    Sagnac SPDC source parameters
    """
    model_config = ConfigDict(frozen=True)

    theta_H_P: float = 0.0
    delta_x: float = 0.0
    phi0: float = 0.0
    kappa: float = math.pi
    noise_p: float = DEFAULT_NOISE_P
    pair_rate: float = 20000.0
    duration: float = 1.0
    seed: int = 0
    falloff_sigma: Optional[float] = None

    @field_validator("pair_rate", "duration")
    @classmethod
    def validate_positive(cls, value: float, info) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be > 0")
        return value

    @field_validator("noise_p")
    @classmethod
    def validate_noise(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("noise_p must be in [0, 1]")
        return value

    @field_validator("delta_x")
    @classmethod
    def validate_displacement(cls, value: float) -> float:
        if not abs(value) <= 2.5:
            raise ValueError("delta_x must be within +/-2.5 mm")
        return value

    @field_validator("falloff_sigma")
    @classmethod
    def validate_falloff(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value > 0:
            raise ValueError("falloff_sigma must be > 0 when set")
        return value


class PairEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: float
    true_state_ref: str


# -------------------------------------------------
# Station Models
# -------------------------------------------------

# Detector numbering: Bob 1-4, Alice 5-8, channel order (H, V, D, A)
DEFAULT_DETECTOR_IDS = {
    Party.BOB: ("1", "2", "3", "4"),
    Party.ALICE: ("5", "6", "7", "8"),
}


class StationConfig(BaseModel):
    """
    Analysis station of one party
    """
    model_config = ConfigDict(frozen=True)

    party: Party
    gp_theta: Optional[float] = None
    basis_bias: float = 0.5
    detector_ids: Tuple[str, str, str, str] = None

    @model_validator(mode="before")
    @classmethod
    def default_detectors(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("detector_ids") is None:
            data = dict(data)
            data["detector_ids"] = DEFAULT_DETECTOR_IDS[Party(data.get("party"))]
        return data

    @field_validator("basis_bias")
    @classmethod
    def validate_bias(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("basis_bias must be in (0, 1)")
        return value

    @field_validator("detector_ids")
    @classmethod
    def validate_detectors(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if len(set(value)) != 4:
            raise ValueError("detector_ids must hold 4 distinct labels")
        return value

    def detector_for(self, basis: Basis, bit: int) -> str:
        return self.detector_ids[(0 if basis == Basis.Z else 2) + bit]


class DetectionRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: float
    party: Party
    basis: Basis
    bit: int = Field(ge=0, le=1)
    detector_id: str


# -------------------------------------------------
# Protocol Models
# -------------------------------------------------

class SessionConfig(BaseModel):
    """
    One BBM92 run
    """
    model_config = ConfigDict(frozen=True)

    source: SourceConfig = Field(default_factory=SourceConfig)
    station_a: StationConfig = Field(default_factory=lambda: StationConfig(party=Party.ALICE))
    station_b: StationConfig = Field(default_factory=lambda: StationConfig(party=Party.BOB))
    coincidence_window: float = 1e-9
    qber_sample_fraction: float = 0.1
    qber_abort_threshold: float = 0.11
    x_parity: XParity = XParity.AUTO
    seed: int = 0

    @field_validator("coincidence_window")
    @classmethod
    def validate_window(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("coincidence_window must be > 0")
        return value

    @field_validator("qber_sample_fraction")
    @classmethod
    def validate_fraction(cls, value: float) -> float:
        # 1.0 discloses the full sifted set (characterization mode)
        if not 0.0 < value <= 1.0:
            raise ValueError("qber_sample_fraction must be in (0, 1]")
        return value

    @field_validator("qber_abort_threshold")
    @classmethod
    def validate_threshold(cls, value: float) -> float:
        if not 0.0 < value <= 0.25:
            raise ValueError("qber_abort_threshold must be in (0, 0.25]")
        return value

    @model_validator(mode="after")
    def validate_parties(self) -> "SessionConfig":
        if self.station_a.party != Party.ALICE or self.station_b.party != Party.BOB:
            raise ValueError("station_a must be Alice's and station_b Bob's")
        return self


class SiftedPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: float
    basis: Basis
    bit_a: int = Field(ge=0, le=1)
    bit_b: int = Field(ge=0, le=1)


class ChannelMessage(BaseModel):
    """
    One public classical-channel message
    """
    model_config = ConfigDict(frozen=True)

    seq: int
    sender: Party
    kind: str
    payload: Dict[str, Any] = Field(default_factory=dict)


class QberEstimate(BaseModel):
    qber_z: Optional[float] = None
    qber_x: Optional[float] = None
    qber_total: float
    disclosed_z: int = 0
    disclosed_x: int = 0
    x_parity_flipped: bool = False
    key_bits: List[int] = Field(default_factory=list)


class SessionReport(BaseModel):
    """
    Output of one BBM92 session
    """
    raw_coincidences: int = Field(ge=0)
    sifted_count: int = Field(ge=0)
    disclosed_z: int = 0
    disclosed_x: int = 0
    qber_z: Optional[float] = None
    qber_x: Optional[float] = None
    qber_total: float
    x_parity_flipped: bool = False
    key_bits: List[int] = Field(default_factory=list)
    secure_key_rate_estimate: float = 0.0
    aborted: bool
    transcript: List[ChannelMessage] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_counts(self) -> "SessionReport":
        if self.sifted_count > self.raw_coincidences:
            raise ValueError("sifted_count cannot exceed raw_coincidences")
        return self

    @property
    def key_length(self) -> int:
        return len(self.key_bits)

    @field_serializer("key_bits")
    def serialize_key(self, bits: List[int]) -> str:
        return SerializationUtils.bits_to_hex(bits)

    def to_json_dict(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json")
        data["key_length"] = self.key_length
        return data


# -------------------------------------------------
# Tomography Models
# -------------------------------------------------

class TomographySetting(BaseModel):
    """
    Projector pair and its recorded counts (floats allowed for exact-probability input)
    """
    model_config = ConfigDict(frozen=True)

    projector_a: ProjectorLabel
    projector_b: ProjectorLabel
    counts: float = 0.0

    @field_validator("counts")
    @classmethod
    def validate_counts(cls, value: float) -> float:
        if not value >= 0:
            raise ValueError("counts must be >= 0")
        return value


class TomographyResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rho_raw: DensityMatrix4
    rho_physical: DensityMatrix4
    fidelity_to_target: float = Field(ge=0.0, le=1.0 + 1e-9)
    min_eigenvalue_raw: float
    purity: float
    concurrence: float

    @model_validator(mode="after")
    def validate_physical(self) -> "TomographyResult":
        if not self.rho_physical.is_physical:
            raise ValueError("rho_physical must be a physical density matrix")
        return self

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "basis_order": list(BASIS_ORDER),
            "rho_physical": SerializationUtils.complex_matrix(self.rho_physical.data),
            "fidelity": self.fidelity_to_target,
            "min_eigenvalue_raw": self.min_eigenvalue_raw,
            "purity": self.purity,
            "concurrence": self.concurrence,
        }


# -------------------------------------------------
# Compensator Models
# -------------------------------------------------

class RotatorModel(BaseModel):
    """
    Motorized rotation mount with a finite step
    """
    model_config = ConfigDict(frozen=True)

    step_resolution: float = 25 * ARCSEC
    range_max: float = math.pi

    @field_validator("step_resolution", "range_max")
    @classmethod
    def validate_positive(cls, value: float, info) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be > 0")
        return value

    def quantize(self, theta: float) -> float:
        """Snap to the step grid and wrap into [0, range_max)"""
        snapped = round(theta / self.step_resolution) * self.step_resolution
        wrapped = snapped % self.range_max
        return 0.0 if math.isclose(wrapped, self.range_max) else wrapped


class FitResult(BaseModel):
    """
    qber(theta) = a - b|cos(4 theta + delta)|, a and b in percent
    """
    a: float
    b: float = Field(ge=0.0)
    delta: float
    residual: float


class ControllerStep(BaseModel):
    iteration: int
    theta_requested: float
    theta_applied: float
    qber: float
    decision: str


class CompensationOutcome(BaseModel):
    """
    Result of one compensation run; angles in radians
    """
    theta_scan: float
    fit: Optional[FitResult] = None
    phase_candidates: List[float] = Field(default_factory=list)
    theta_final: float
    qber_final: float
    aborted: bool
    steps: List[ControllerStep] = Field(default_factory=list)

    def to_json_dict(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json", exclude={"steps"})
        data["theta_scan_deg"] = math.degrees(self.theta_scan)
        data["theta_final_deg"] = math.degrees(self.theta_final)
        return data


# -------------------------------------------------
# Experiment Models
# -------------------------------------------------

class ExperimentConfig(BaseModel):
    """
    One qkdsim invocation
    """
    experiment: ExperimentName
    config_path: Optional[Path] = None
    output_path: Optional[Path] = None
    seed: Optional[int] = None
    compensation: bool = False

    def output(self, suffix: str, results_dir: Path = Path("results")) -> Path:
        """Explicit output path, else results/<experiment><suffix>"""
        if self.output_path is not None:
            return self.output_path
        return results_dir / f"{self.experiment.value}{suffix}"
