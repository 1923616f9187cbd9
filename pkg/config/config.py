"""
Phase-Shifted Bell State QKD Simulator - Configuration
Settings loaded from a flat key=value file and environment variables.

Keys carry their unit in the suffix (deg, mm, rad, hz, s). Sections map to
nested models through the "__" delimiter, e.g. source__theta_h_p_deg=22.5
"""

import math
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.models.errors import ConfigurationError
from app.models.models import (
    ARCSEC,
    DEFAULT_NOISE_P,
    Party,
    RotatorModel,
    SessionConfig,
    SourceConfig,
    StationConfig,
    XParity,
)


class SourceSettings(BaseModel):
    theta_h_p_deg: float = 0.0
    delta_x_mm: float = 0.0
    phi0_rad: float = 0.0
    kappa_rad_per_mm: float = math.pi
    noise_p: float = DEFAULT_NOISE_P
    pair_rate_hz: float = 20000.0
    duration_s: float = 1.0
    seed: int = 0
    falloff_sigma_mm: Optional[float] = None


class StationSettings(BaseModel):
    gp_theta_a_deg: Optional[float] = None
    gp_theta_b_deg: Optional[float] = None
    basis_bias_a: float = 0.5
    basis_bias_b: float = 0.5


class SessionSettings(BaseModel):
    coincidence_window_s: float = 1e-9
    qber_sample_fraction: float = 0.1
    qber_abort_threshold: float = 0.11
    x_parity: XParity = XParity.AUTO
    seed: int = 0


class ExperimentSettings(BaseModel):
    sifted_pairs_per_point: int = 10000
    # Characterization runs disclose the whole sifted set
    sample_fraction: float = 1.0
    pump_start_deg: float = 0.0
    pump_stop_deg: float = 100.0
    pump_step_deg: float = 2.0
    crystal_start_mm: float = 0.0
    crystal_stop_mm: float = 2.0
    crystal_step_mm: float = 0.25
    tomography_shots: int = 100000
    workers: int = 4


class RotatorSettings(BaseModel):
    step_resolution_arcsec: float = 25.0
    coarse_step_deg: float = 2.0
    averaging: int = 3


class Settings(BaseSettings):
    """
    Application settings loaded from the config file and environment variables
    """
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",
    )

    # General
    debug: bool = False
    seed: int = 0

    # Logging Configuration
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Module sections
    source: SourceSettings = SourceSettings()
    station: StationSettings = StationSettings()
    session: SessionSettings = SessionSettings()
    experiment: ExperimentSettings = ExperimentSettings()
    rotator: RotatorSettings = RotatorSettings()

    def get_source_config(self, **overrides) -> SourceConfig:
        """
        Source section converted to radians and millimeters
        """
        src = self.source
        params = {
            "theta_H_P": math.radians(src.theta_h_p_deg),
            "delta_x": src.delta_x_mm,
            "phi0": src.phi0_rad,
            "kappa": src.kappa_rad_per_mm,
            "noise_p": src.noise_p,
            "pair_rate": src.pair_rate_hz,
            "duration": src.duration_s,
            "seed": src.seed,
            "falloff_sigma": src.falloff_sigma_mm,
        }
        params.update(overrides)
        return SourceConfig(**params)

    def get_station_config(self, party: Party, gp_theta: Optional[float] = None) -> StationConfig:
        """
        Station section for one party; gp_theta (radians) overrides the file
        """
        st = self.station
        if party == Party.ALICE:
            configured, bias = st.gp_theta_a_deg, st.basis_bias_a
        else:
            configured, bias = st.gp_theta_b_deg, st.basis_bias_b
        if gp_theta is None and configured is not None:
            gp_theta = math.radians(configured)
        return StationConfig(party=party, gp_theta=gp_theta, basis_bias=bias)

    def get_session_config(
        self,
        source: Optional[SourceConfig] = None,
        gp_theta_a: Optional[float] = None,
        gp_theta_b: Optional[float] = None,
        **overrides,
    ) -> SessionConfig:
        """
        Full session configuration; keyword overrides replace session fields
        """
        ses = self.session
        params = {
            "source": source or self.get_source_config(),
            "station_a": self.get_station_config(Party.ALICE, gp_theta_a),
            "station_b": self.get_station_config(Party.BOB, gp_theta_b),
            "coincidence_window": ses.coincidence_window_s,
            "qber_sample_fraction": ses.qber_sample_fraction,
            "qber_abort_threshold": ses.qber_abort_threshold,
            "x_parity": ses.x_parity,
            "seed": ses.seed,
        }
        params.update(overrides)
        return SessionConfig(**params)

    def get_rotator_model(self) -> RotatorModel:
        return RotatorModel(step_resolution=self.rotator.step_resolution_arcsec * ARCSEC)


def load_settings(path: Optional[Union[str, Path]] = None) -> Settings:
    """
    Load settings from an explicit config file (or the default .env)
    """
    try:
        if path is None:
            return Settings()
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigurationError(f"Config file not found: {config_path}")
        return Settings(_env_file=config_path)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


# Create global settings instance
settings = Settings()
