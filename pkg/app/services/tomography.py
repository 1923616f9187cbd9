# File: app/services/tomography.py
"""
Two-qubit polarization state tomography.

Over-complete 36-setting scheme over {H, V, D, A, R, L} per party.
Counts are normalized within their basis pair (the four outcomes of one
pair of analyzer bases), then rho is recovered by unweighted least squares
on the Pauli expansion

    rho = (I + sum_{(i,j) != (0,0)} r_ij sigma_i ⊗ sigma_j) / 4

and restored to physicality by projecting its spectrum onto the simplex.
"""

import logging
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.models.errors import RankDeficientError
from app.models.models import ProjectorLabel, TomographyResult, TomographySetting
from app.models.quantum import DensityMatrix4, TwoQubitKet
from app.services.biphoton import concurrence, fidelity, purity
from app.services.polarization import A, D, H, L, R, V
from app.utils.utils import RandomUtils, SerializationUtils

logger = logging.getLogger(__name__)

COUNTS_CSV_COLUMNS = ("projector_a", "projector_b", "counts")

PROJECTOR_VECTORS = {
    ProjectorLabel.H: H,
    ProjectorLabel.V: V,
    ProjectorLabel.D: D,
    ProjectorLabel.A: A,
    ProjectorLabel.R: R,
    ProjectorLabel.L: L,
}

# Each label belongs to one analyzer basis (0: H/V, 1: D/A, 2: R/L)
_BASIS_OF = {
    ProjectorLabel.H: 0,
    ProjectorLabel.V: 0,
    ProjectorLabel.D: 1,
    ProjectorLabel.A: 1,
    ProjectorLabel.R: 2,
    ProjectorLabel.L: 2,
}

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_PAULI_INDICES = [(i, j) for i in range(4) for j in range(4) if (i, j) != (0, 0)]
PARAMETER_COUNT = len(_PAULI_INDICES)


def projector(label: ProjectorLabel) -> np.ndarray:
    v = PROJECTOR_VECTORS[ProjectorLabel(label)].data
    return np.outer(v, v.conj())


def standard_settings() -> List[TomographySetting]:
    """All 36 projector pairs, Alice's label varying slowest"""
    return [
        TomographySetting(projector_a=a, projector_b=b)
        for a, b in product(ProjectorLabel, ProjectorLabel)
    ]


def born_probability(state: DensityMatrix4, label_a: ProjectorLabel, label_b: ProjectorLabel) -> float:
    op = np.kron(projector(label_a), projector(label_b))
    return max(float(np.trace(state.data @ op).real), 0.0)


def _group_key(setting: TomographySetting) -> Tuple[int, int]:
    return _BASIS_OF[setting.projector_a], _BASIS_OF[setting.projector_b]


def synthesize_counts(
    state: DensityMatrix4,
    shots_per_setting: int,
    rng: Optional[np.random.Generator] = None,
    exact: bool = False,
) -> List[TomographySetting]:
    """
    Simulated counts for the standard settings.

    Each basis pair receives shots_per_setting shots split multinomially over
    its four outcomes. With exact=True the counts are probability * shots.
    """
    if shots_per_setting <= 0:
        raise ValueError("shots_per_setting must be > 0")
    rng = rng if rng is not None else RandomUtils.rng(0)

    settings = standard_settings()
    groups: Dict[Tuple[int, int], List[int]] = {}
    for index, setting in enumerate(settings):
        groups.setdefault(_group_key(setting), []).append(index)

    counts = np.zeros(len(settings))
    for key in sorted(groups):
        members = groups[key]
        probs = np.array(
            [born_probability(state, settings[i].projector_a, settings[i].projector_b) for i in members]
        )
        probs = probs / probs.sum()
        if exact:
            counts[members] = probs * shots_per_setting
        else:
            counts[members] = rng.multinomial(shots_per_setting, probs)

    return [s.model_copy(update={"counts": float(c)}) for s, c in zip(settings, counts)]


def _observed_probabilities(settings: Sequence[TomographySetting]) -> Tuple[List[TomographySetting], np.ndarray]:
    """Counts normalized by their basis-pair totals; empty groups are dropped"""
    totals: Dict[Tuple[int, int], float] = {}
    for s in settings:
        totals[_group_key(s)] = totals.get(_group_key(s), 0.0) + s.counts
    used = [s for s in settings if totals[_group_key(s)] > 0]
    observed = np.array([s.counts / totals[_group_key(s)] for s in used])
    return used, observed


def _design_row(setting: TomographySetting) -> np.ndarray:
    va = PROJECTOR_VECTORS[setting.projector_a].data
    vb = PROJECTOR_VECTORS[setting.projector_b].data
    exp_a = [np.vdot(va, p @ va).real for p in PAULIS]
    exp_b = [np.vdot(vb, p @ vb).real for p in PAULIS]
    return np.array([exp_a[i] * exp_b[j] / 4.0 for i, j in _PAULI_INDICES])


def linear_reconstruct(settings: Sequence[TomographySetting]) -> DensityMatrix4:
    """
    Least-squares density matrix (Hermitian, unit trace, possibly not positive)
    """
    used, observed = _observed_probabilities(settings)
    if not used:
        raise RankDeficientError("No counts recorded")
    design = np.array([_design_row(s) for s in used])
    rank = np.linalg.matrix_rank(design)
    if rank < PARAMETER_COUNT:
        raise RankDeficientError(f"Settings span rank {rank}, need {PARAMETER_COUNT}")

    coeffs, *_ = np.linalg.lstsq(design, observed - 0.25, rcond=None)
    rho = np.eye(4, dtype=complex)
    for r, (i, j) in zip(coeffs, _PAULI_INDICES):
        rho = rho + r * np.kron(PAULIS[i], PAULIS[j])
    rho = rho / 4.0
    return DensityMatrix4(0.5 * (rho + rho.conj().T), require_physical=False)


def _simplex_projection(values: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1}"""
    u = np.sort(values)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(u) + 1)
    k = ks[u - (css - 1.0) / ks > 0][-1]
    tau = (css[k - 1] - 1.0) / k
    return np.maximum(values - tau, 0.0)


def project_physical(rho_raw: DensityMatrix4) -> DensityMatrix4:
    """
    Nearest density matrix sharing rho_raw's eigenbasis
    """
    if rho_raw.min_eigenvalue >= 0.0:
        return DensityMatrix4(rho_raw.data)
    evals, evecs = np.linalg.eigh(rho_raw.data)
    clipped = _simplex_projection(evals)
    rho = (evecs * clipped) @ evecs.conj().T
    logger.debug(f"Projected spectrum {np.round(evals, 5)} -> {np.round(clipped, 5)}")
    return DensityMatrix4(0.5 * (rho + rho.conj().T))


def tomography_report(settings: Sequence[TomographySetting], target: TwoQubitKet) -> TomographyResult:
    rho_raw = linear_reconstruct(settings)
    if not rho_raw.is_physical:
        logger.warning(f"Raw reconstruction is unphysical (min eigenvalue {rho_raw.min_eigenvalue:.2e})")
    rho_physical = project_physical(rho_raw)
    return TomographyResult(
        rho_raw=rho_raw,
        rho_physical=rho_physical,
        fidelity_to_target=fidelity(rho_physical, target),
        min_eigenvalue_raw=rho_raw.min_eigenvalue,
        purity=purity(rho_physical),
        concurrence=concurrence(rho_physical),
    )


def write_counts_csv(path: Path, settings: Sequence[TomographySetting]):
    rows = [(s.projector_a.value, s.projector_b.value, s.counts) for s in settings]
    SerializationUtils.write_csv(path, COUNTS_CSV_COLUMNS, rows)


def read_counts_csv(path: Path) -> List[TomographySetting]:
    """
    Counts file with columns projector_a, projector_b, counts
    """
    rows = SerializationUtils.read_csv(path)
    missing = [c for c in COUNTS_CSV_COLUMNS if rows and c not in rows[0]]
    if missing:
        raise ValueError(f"Counts file {path} lacks columns {missing}")
    return [
        TomographySetting(
            projector_a=row["projector_a"].strip().upper(),
            projector_b=row["projector_b"].strip().upper(),
            counts=float(row["counts"]),
        )
        for row in rows
    ]
