# File: app/models/batches.py
"""
Column-oriented event streams.

Sessions move tens of thousands of events, so the pipeline works on numpy
columns and only materializes per-event pydantic records on export.
Basis columns hold 0 for Z and 1 for X.
"""

from typing import Iterator, List, Sequence, Tuple

import numpy as np

from app.models.errors import UnsortedStreamError
from app.models.models import Basis, DetectionRecord, PairEvent, Party, SiftedPair

BASIS_CODES = (Basis.Z, Basis.X)
DETECTION_CSV_COLUMNS = ("timestamp_s", "party", "basis", "bit", "detector_id")


def _column(values, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class PairStream:
    """
    Coincident pair emission times from one source run
    """

    def __init__(self, timestamps: Sequence[float], state_ref: str):
        self.timestamps = _column(timestamps, float)
        self.state_ref = state_ref
        if np.any(np.diff(self.timestamps) <= 0):
            raise UnsortedStreamError("Pair timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def events(self) -> Iterator[PairEvent]:
        for t in self.timestamps:
            yield PairEvent(timestamp=float(t), true_state_ref=self.state_ref)

    def __repr__(self):
        return f"<PairStream(n={len(self)}, state={self.state_ref})>"


class DetectionBatch:
    """
    One party's detection records
    """

    def __init__(
        self,
        party: Party,
        timestamps: Sequence[float],
        basis: Sequence[int],
        bits: Sequence[int],
        detector_ids: Tuple[str, str, str, str],
    ):
        self.party = Party(party)
        self.timestamps = _column(timestamps, float)
        self.basis = _column(basis, np.int8)
        self.bits = _column(bits, np.uint8)
        self.detector_ids = tuple(detector_ids)
        if not (len(self.timestamps) == len(self.basis) == len(self.bits)):
            raise ValueError("Detection columns must have equal length")

    def __len__(self) -> int:
        return len(self.timestamps)

    def detector_column(self) -> List[str]:
        """Channel order (H, V, D, A)"""
        index = 2 * self.basis.astype(int) + self.bits.astype(int)
        return [self.detector_ids[i] for i in index]

    def records(self) -> List[DetectionRecord]:
        detectors = self.detector_column()
        return [
            DetectionRecord(
                timestamp=float(t),
                party=self.party,
                basis=BASIS_CODES[int(b)],
                bit=int(bit),
                detector_id=det,
            )
            for t, b, bit, det in zip(self.timestamps, self.basis, self.bits, detectors)
        ]

    def csv_rows(self) -> Iterator[tuple]:
        for record in self.records():
            yield (record.timestamp, record.party.value, record.basis.value, record.bit, record.detector_id)


class CoincidencePairs:
    """
    Paired detections, one row per coincidence
    """

    def __init__(self, timestamps, basis_a, basis_b, bit_a, bit_b):
        self.timestamps = _column(timestamps, float)
        self.basis_a = _column(basis_a, np.int8)
        self.basis_b = _column(basis_b, np.int8)
        self.bit_a = _column(bit_a, np.uint8)
        self.bit_b = _column(bit_b, np.uint8)

    def __len__(self) -> int:
        return len(self.timestamps)

    @classmethod
    def from_batches(cls, a: DetectionBatch, b: DetectionBatch, index_a, index_b) -> "CoincidencePairs":
        index_a = np.asarray(index_a, dtype=int)
        index_b = np.asarray(index_b, dtype=int)
        return cls(
            timestamps=a.timestamps[index_a],
            basis_a=a.basis[index_a],
            basis_b=b.basis[index_b],
            bit_a=a.bits[index_a],
            bit_b=b.bits[index_b],
        )


class SiftedBatch:
    """
    Basis-matched pairs
    """

    def __init__(self, timestamps, basis, bit_a, bit_b):
        self.timestamps = _column(timestamps, float)
        self.basis = _column(basis, np.int8)
        self.bit_a = _column(bit_a, np.uint8)
        self.bit_b = _column(bit_b, np.uint8)

    def __len__(self) -> int:
        return len(self.timestamps)

    def pairs(self) -> List[SiftedPair]:
        return [
            SiftedPair(timestamp=float(t), basis=BASIS_CODES[int(b)], bit_a=int(x), bit_b=int(y))
            for t, b, x, y in zip(self.timestamps, self.basis, self.bit_a, self.bit_b)
        ]
