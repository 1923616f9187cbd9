# File: app/services/protocol.py
"""
BBM92 session engine.

emit pairs -> detect -> pair coincidences -> sift over the public channel
-> estimate the QBER on a disclosed sample -> abort or keep the key.
"""

import logging
import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.models.batches import BASIS_CODES, CoincidencePairs, DetectionBatch, SiftedBatch
from app.models.errors import InsufficientSampleError, UnsortedStreamError
from app.models.models import Party, QberEstimate, SessionConfig, SessionReport, XParity
from app.services.channel import ClassicalChannel, InMemoryChannel, MessageKind
from app.services.metrics import secure_key_rate
from app.services.source import emit_events, emitted_state
from app.services.station import sample_detections
from app.utils.utils import RandomUtils

logger = logging.getLogger(__name__)

# Bases announced per channel message. An announcement is one basis character
# in a message payload, so every raw pair yields exactly two: one per party.
ANNOUNCEMENT_BLOCK = 4096


class SessionPhase(str, Enum):
    EMITTING = "emitting"
    DETECTING = "detecting"
    COINCIDING = "coinciding"
    SIFTING = "sifting"
    ESTIMATING = "estimating"
    FINISHED = "finished"
    ABORTED = "aborted"


SESSION_TRANSITIONS: Dict[Optional[SessionPhase], Tuple[SessionPhase, ...]] = {
    None: (SessionPhase.EMITTING,),
    SessionPhase.EMITTING: (SessionPhase.DETECTING,),
    SessionPhase.DETECTING: (SessionPhase.COINCIDING,),
    SessionPhase.COINCIDING: (SessionPhase.SIFTING,),
    SessionPhase.SIFTING: (SessionPhase.ESTIMATING,),
    SessionPhase.ESTIMATING: (SessionPhase.FINISHED, SessionPhase.ABORTED),
    SessionPhase.FINISHED: (),
    SessionPhase.ABORTED: (),
}


# -------------------------------------------------
# Pipeline steps
# -------------------------------------------------

def _check_sorted(timestamps: np.ndarray, name: str):
    if np.any(np.diff(timestamps) < 0):
        raise UnsortedStreamError(f"{name} timestamps are not sorted")


def coincide(events_a: DetectionBatch, events_b: DetectionBatch, window: float) -> CoincidencePairs:
    """
    Greedy one-to-one pairing within +/- window, earliest record first
    """
    if not window > 0:
        raise ValueError("window must be > 0")
    ta, tb = events_a.timestamps, events_b.timestamps
    _check_sorted(ta, "Alice")
    _check_sorted(tb, "Bob")

    if len(ta) == len(tb) and np.array_equal(ta, tb):
        index = np.arange(len(ta))
        return CoincidencePairs.from_batches(events_a, events_b, index, index)

    index_a, index_b = [], []
    i = j = 0
    while i < len(ta) and j < len(tb):
        if abs(tb[j] - ta[i]) <= window:
            index_a.append(i)
            index_b.append(j)
            i += 1
            j += 1
        elif ta[i] < tb[j]:
            i += 1
        else:
            j += 1
    return CoincidencePairs.from_batches(events_a, events_b, index_a, index_b)


def _basis_string(codes: np.ndarray) -> str:
    return "".join(BASIS_CODES[int(c)].value for c in codes)


def sift(pairs: CoincidencePairs, channel: Optional[ClassicalChannel] = None) -> Tuple[SiftedBatch, ClassicalChannel]:
    """
    Public basis reconciliation.

    Both parties announce their bases in timestamp order, Alice first, in
    blocks of ANNOUNCEMENT_BLOCK pairs; bits never leave the stations.
    """
    channel = channel if channel is not None else InMemoryChannel()
    for start in range(0, len(pairs), ANNOUNCEMENT_BLOCK):
        stop = min(start + ANNOUNCEMENT_BLOCK, len(pairs))
        for party, column in ((Party.ALICE, pairs.basis_a), (Party.BOB, pairs.basis_b)):
            channel.send(
                party,
                MessageKind.BASIS_ANNOUNCEMENT,
                {"first": start, "bases": _basis_string(column[start:stop])},
            )

    matched = pairs.basis_a == pairs.basis_b
    sifted = SiftedBatch(
        timestamps=pairs.timestamps[matched],
        basis=pairs.basis_a[matched],
        bit_a=pairs.bit_a[matched],
        bit_b=pairs.bit_b[matched],
    )
    logger.debug(f"Sifted {len(sifted)} of {len(pairs)} coincidences")
    return sifted, channel


def _parity_flip(x_parity: XParity, errors_x: int, disclosed_x: int) -> bool:
    if x_parity == XParity.PHI_MINUS:
        return True
    if x_parity == XParity.PHI_PLUS:
        return False
    return disclosed_x > 0 and errors_x > disclosed_x / 2


def estimate_qber(
    sifted: SiftedBatch,
    sample_fraction: float,
    rng: np.random.Generator,
    channel: Optional[ClassicalChannel] = None,
    x_parity: XParity = XParity.AUTO,
) -> QberEstimate:
    """
    Disclose a random sample without replacement and measure the error rate.

    The remaining pairs' Alice bits form the key. In X, Bob inverts his bits
    when the parity convention says so (auto: majority of disclosed X pairs
    disagree).
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError("sample_fraction must be in (0, 1]")
    channel = channel if channel is not None else InMemoryChannel()
    n = len(sifted)
    k = int(math.floor(sample_fraction * n + 1e-9))
    if k == 0:
        raise InsufficientSampleError(
            f"No pairs disclosed from {n} sifted pairs at fraction {sample_fraction}; "
            "collect more pairs or raise the sample fraction"
        )

    disclosed = np.sort(rng.choice(n, size=k, replace=False))
    bits_a = sifted.bit_a[disclosed]
    bits_b = sifted.bit_b[disclosed]
    basis = sifted.basis[disclosed]

    channel.send(Party.ALICE, MessageKind.SAMPLE_INDICES, {"indices": disclosed.tolist()})
    channel.send(Party.ALICE, MessageKind.SAMPLE_BITS, {"bits": bits_a.tolist()})
    channel.send(Party.BOB, MessageKind.SAMPLE_BITS, {"bits": bits_b.tolist()})

    is_z = basis == 0
    errors = bits_a != bits_b
    disclosed_z = int(is_z.sum())
    disclosed_x = k - disclosed_z
    errors_z = int(errors[is_z].sum())
    errors_x = int(errors[~is_z].sum())

    flipped = _parity_flip(x_parity, errors_x, disclosed_x)
    if flipped:
        errors_x = disclosed_x - errors_x
    channel.send(Party.BOB, MessageKind.PARITY_DECISION, {"flip": flipped, "mode": x_parity.value})

    qber_z = errors_z / disclosed_z if disclosed_z else None
    qber_x = errors_x / disclosed_x if disclosed_x else None
    qber_total = (errors_z + errors_x) / k

    keep = np.ones(n, dtype=bool)
    keep[disclosed] = False
    return QberEstimate(
        qber_z=qber_z,
        qber_x=qber_x,
        qber_total=qber_total,
        disclosed_z=disclosed_z,
        disclosed_x=disclosed_x,
        x_parity_flipped=flipped,
        key_bits=sifted.bit_a[keep].astype(int).tolist(),
    )


# -------------------------------------------------
# Session
# -------------------------------------------------

class BBM92Session:
    """
    One seeded BBM92 run
    """

    def __init__(self, config: SessionConfig, channel: Optional[ClassicalChannel] = None):
        self.config = config
        self.channel = channel if channel is not None else InMemoryChannel()
        self.phase: Optional[SessionPhase] = None
        self.history: List[SessionPhase] = []

    def _advance(self, phase: SessionPhase):
        if phase not in SESSION_TRANSITIONS[self.phase]:
            raise RuntimeError(f"Illegal session transition {self.phase} -> {phase}")
        self.phase = phase
        self.history.append(phase)
        logger.debug(f"Session seed={self.config.seed}: {phase.value}")

    def run(self) -> SessionReport:
        cfg = self.config
        rng_source, rng_stations, rng_sample = RandomUtils.spawn(cfg.seed, 3)

        self._advance(SessionPhase.EMITTING)
        rho = emitted_state(cfg.source)
        stream = emit_events(cfg.source, rng=rng_source)

        self._advance(SessionPhase.DETECTING)
        detections_a, detections_b = sample_detections(stream, rho, cfg.station_a, cfg.station_b, rng_stations)

        self._advance(SessionPhase.COINCIDING)
        pairs = coincide(detections_a, detections_b, cfg.coincidence_window)

        self._advance(SessionPhase.SIFTING)
        sifted, _ = sift(pairs, self.channel)

        self._advance(SessionPhase.ESTIMATING)
        estimate = estimate_qber(sifted, cfg.qber_sample_fraction, rng_sample, self.channel, cfg.x_parity)

        aborted = estimate.qber_total > cfg.qber_abort_threshold
        if aborted:
            self.channel.send(Party.ALICE, MessageKind.ABORT, {"qber_total": estimate.qber_total})
            self._advance(SessionPhase.ABORTED)
            logger.warning(
                f"Session aborted: QBER {estimate.qber_total:.4f} > {cfg.qber_abort_threshold}"
            )
        else:
            self.channel.send(Party.ALICE, MessageKind.QBER_RESULT, {"qber_total": estimate.qber_total})
            self._advance(SessionPhase.FINISHED)

        key_bits = [] if aborted else estimate.key_bits
        report = SessionReport(
            raw_coincidences=len(pairs),
            sifted_count=len(sifted),
            disclosed_z=estimate.disclosed_z,
            disclosed_x=estimate.disclosed_x,
            qber_z=estimate.qber_z,
            qber_x=estimate.qber_x,
            qber_total=estimate.qber_total,
            x_parity_flipped=estimate.x_parity_flipped,
            key_bits=key_bits,
            secure_key_rate_estimate=0.0 if aborted else secure_key_rate(estimate.qber_total),
            aborted=aborted,
            transcript=self.channel.transcript(),
        )
        logger.info(
            f"Session seed={cfg.seed}: {report.raw_coincidences} coincidences, "
            f"{report.sifted_count} sifted, QBER {report.qber_total:.4f}, "
            f"{'aborted' if aborted else f'key {report.key_length} bits'}"
        )
        return report


def run_session(config: SessionConfig, channel: Optional[ClassicalChannel] = None) -> SessionReport:
    return BBM92Session(config, channel).run()
