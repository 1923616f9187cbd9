"""
Shared fixtures: small, fast settings and analytic session factories
"""

import math
from types import SimpleNamespace

import pytest

from app.models.models import Party, SessionConfig, SourceConfig, StationConfig, XParity
from config.config import ExperimentSettings, Settings, SourceSettings


@pytest.fixture
def make_settings():
    """Settings with small per-point statistics, ignoring any local .env"""

    def factory(source=None, experiment=None, **fields) -> Settings:
        experiment_values = {"sifted_pairs_per_point": 2000, "tomography_shots": 20000, "workers": 2}
        experiment_values.update(experiment or {})
        return Settings(
            _env_file=None,
            source=SourceSettings(**(source or {})),
            experiment=ExperimentSettings(**experiment_values),
            **fields,
        )

    return factory


@pytest.fixture
def session_config():
    """SessionConfig builder with short runs"""

    def factory(theta_H_P=0.0, delta_x=0.0, noise_p=0.0, gp_theta_b=None, duration=0.5, seed=7, **overrides):
        source = SourceConfig(
            theta_H_P=theta_H_P,
            delta_x=delta_x,
            noise_p=noise_p,
            pair_rate=20000.0,
            duration=duration,
        )
        params = {
            "source": source,
            "station_a": StationConfig(party=Party.ALICE),
            "station_b": StationConfig(party=Party.BOB, gp_theta=gp_theta_b),
            "qber_sample_fraction": 1.0,
            "seed": seed,
        }
        params.update(overrides)
        return SessionConfig(**params)

    return factory


def analytic_factory(source_phase: float, noise_p: float = 0.0, threshold: float = 0.11):
    """
    Noise-free session stand-in for a source whose pump-side phase is
    source_phase (phi_un + 4 theta_H_P); Bob's element sits at theta.
    """
    calls = []

    def factory(theta: float, seed: int, **options):
        calls.append((theta, seed, options))
        phi = source_phase - 4.0 * theta
        if options.get("x_parity") == XParity.PHI_PLUS:
            # Z agrees; X disagrees with probability (1 - cos phi)/2
            qber = (1.0 - math.cos(phi)) / 4.0
        else:
            qber = (1.0 - abs(math.cos(phi))) / 4.0
        qber = (1.0 - noise_p) * qber + noise_p / 2.0
        return SimpleNamespace(qber_total=qber, aborted=qber > threshold)

    factory.calls = calls
    return factory


@pytest.fixture
def analytic_session():
    return analytic_factory
