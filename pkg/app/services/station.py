# File: app/services/station.py
"""
Alice and Bob analysis stations.

Each station optionally carries a receiver QHQ element, picks Z (H/V) or X
(D/A) through a passive beam splitter and reads one of four detectors.
Bits: H -> 0, V -> 1, D -> 0, A -> 1.
"""

import logging
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np

from app.models.batches import BASIS_CODES, DETECTION_CSV_COLUMNS, DetectionBatch, PairStream
from app.models.models import Basis, DetectionRecord, PairEvent, StationConfig
from app.models.quantum import DensityMatrix4, JonesMatrix
from app.services.biphoton import apply_local_density
from app.services.polarization import A, D, H, V, qhq
from app.utils.utils import SerializationUtils

logger = logging.getLogger(__name__)

_BASIS_VECTORS = {
    Basis.Z: (H, V),
    Basis.X: (D, A),
}


def station_projectors(basis: Basis) -> Tuple[np.ndarray, np.ndarray]:
    """Rank-1 projectors for outcomes 0 and 1"""
    return tuple(np.outer(v.data, v.data.conj()) for v in _BASIS_VECTORS[Basis(basis)])


def _receiver_element(gp_theta: Optional[float]) -> JonesMatrix:
    return JonesMatrix.identity() if gp_theta is None else qhq(gp_theta)


def joint_probabilities(
    state: DensityMatrix4,
    basis_a: Basis,
    basis_b: Basis,
    gp_theta_a: Optional[float] = None,
    gp_theta_b: Optional[float] = None,
) -> np.ndarray:
    """
    Born-rule outcome probabilities over (00, 01, 10, 11), bit_a first.

    The receiver elements act before the projection.
    """
    if gp_theta_a is not None or gp_theta_b is not None:
        state = apply_local_density(_receiver_element(gp_theta_a), _receiver_element(gp_theta_b), state)
    proj_a = station_projectors(basis_a)
    proj_b = station_projectors(basis_b)
    probs = np.array(
        [np.trace(state.data @ np.kron(pa, pb)).real for pa in proj_a for pb in proj_b]
    )
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def outcome_table(
    state: DensityMatrix4, cfg_a: StationConfig, cfg_b: StationConfig
) -> np.ndarray:
    """
    Cumulative outcome probabilities indexed [2 * basis_a + basis_b, outcome]
    """
    table = np.empty((4, 4))
    for ia, ba in enumerate(BASIS_CODES):
        for ib, bb in enumerate(BASIS_CODES):
            table[2 * ia + ib] = np.cumsum(
                joint_probabilities(state, ba, bb, cfg_a.gp_theta, cfg_b.gp_theta)
            )
    table[:, -1] = 1.0
    return table


def sample_detections(
    stream: PairStream,
    state: DensityMatrix4,
    cfg_a: StationConfig,
    cfg_b: StationConfig,
    rng: np.random.Generator,
) -> Tuple[DetectionBatch, DetectionBatch]:
    """
    Basis choice and joint outcome for every pair of the stream.

    Draw order is fixed (Alice's bases, Bob's bases, outcomes) so the
    result depends only on the generator state.
    """
    n = len(stream)
    basis_a = (rng.random(n) >= cfg_a.basis_bias).astype(np.int8)
    basis_b = (rng.random(n) >= cfg_b.basis_bias).astype(np.int8)
    u = rng.random(n)

    cumulative = outcome_table(state, cfg_a, cfg_b)[2 * basis_a + basis_b]
    outcome = np.minimum((u[:, None] >= cumulative).sum(axis=1), 3)
    bits_a = outcome // 2
    bits_b = outcome % 2

    batch_a = DetectionBatch(cfg_a.party, stream.timestamps, basis_a, bits_a, cfg_a.detector_ids)
    batch_b = DetectionBatch(cfg_b.party, stream.timestamps, basis_b, bits_b, cfg_b.detector_ids)
    return batch_a, batch_b


def sample_detection(
    pair: PairEvent,
    state: DensityMatrix4,
    cfg_a: StationConfig,
    cfg_b: StationConfig,
    rng: np.random.Generator,
) -> Tuple[DetectionRecord, DetectionRecord]:
    """Single-pair form of sample_detections"""
    stream = PairStream([pair.timestamp], pair.true_state_ref)
    batch_a, batch_b = sample_detections(stream, state, cfg_a, cfg_b, rng)
    return batch_a.records()[0], batch_b.records()[0]


def write_detections_csv(path: Path, batches: Iterable[DetectionBatch]):
    """
    Detection records as CSV: timestamp_s, party, basis, bit, detector_id
    """
    rows = []
    for batch in batches:
        rows.extend(batch.csv_rows())
    rows.sort(key=lambda row: (row[0], row[1]))
    SerializationUtils.write_csv(path, DETECTION_CSV_COLUMNS, rows)
    logger.info(f"Wrote {len(rows)} detection records to {path}")
