# File: app/services/source.py
"""
Sagnac SPDC source model: crystal displacement and pump geometric phase
mapped to the emitted two-photon state, plus Poisson pair emission.
"""

import hashlib
import logging
import math
from typing import Optional

import numpy as np

from app.models.batches import PairStream
from app.models.errors import OutOfRangeError
from app.models.models import SourceConfig
from app.models.quantum import DensityMatrix4
from app.services.biphoton import state_after_pump_gp, werner_mix
from app.utils.utils import AngleUtils, RandomUtils

logger = logging.getLogger(__name__)

MAX_DISPLACEMENT_MM = 2.5


def unknown_phase(delta_x: float, phi0: float = 0.0, kappa: float = math.pi) -> float:
    """
    phi_un = phi0 + kappa * delta_x, reduced into [0, 2 pi)
    """
    if not abs(delta_x) <= MAX_DISPLACEMENT_MM:
        raise OutOfRangeError(f"delta_x={delta_x} mm outside +/-{MAX_DISPLACEMENT_MM} mm")
    return AngleUtils.wrap(phi0 + kappa * delta_x)


def emitted_state(config: SourceConfig) -> DensityMatrix4:
    phi_un = unknown_phase(config.delta_x, config.phi0, config.kappa)
    ket = state_after_pump_gp(phi_un, config.theta_H_P)
    return werner_mix(ket, config.noise_p)


def state_ref(rho: DensityMatrix4) -> str:
    """Short content hash identifying an emitted state"""
    rounded = np.round(rho.data, 12) + 0.0
    return hashlib.sha1(rounded.tobytes()).hexdigest()[:12]


def emission_rate(config: SourceConfig) -> float:
    """
    Pair rate, reduced by the optional Gaussian falloff in |delta_x|
    """
    if config.falloff_sigma is None:
        return config.pair_rate
    return config.pair_rate * math.exp(-0.5 * (config.delta_x / config.falloff_sigma) ** 2)


def emit_events(config: SourceConfig, rng: Optional[np.random.Generator] = None) -> PairStream:
    """
    Poisson-process pair timestamps over [0, duration)

    Gaps are drawn in blocks of exponentials and accumulated until the run
    length is covered.
    """
    rng = rng if rng is not None else RandomUtils.rng(config.seed)
    rate = emission_rate(config)
    expected = rate * config.duration
    block = int(expected + 6.0 * math.sqrt(expected) + 16)

    chunks = []
    t_last = 0.0
    while t_last < config.duration:
        times = t_last + np.cumsum(rng.exponential(1.0 / rate, size=block))
        chunks.append(times)
        t_last = float(times[-1])
    timestamps = np.concatenate(chunks)
    timestamps = timestamps[timestamps < config.duration]

    rho = emitted_state(config)
    stream = PairStream(timestamps, state_ref(rho))
    logger.debug(f"Emitted {len(stream)} pairs at {rate:.1f} Hz over {config.duration} s")
    return stream
