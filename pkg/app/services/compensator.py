# File: app/services/compensator.py
"""
Active geometric-phase compensation on the receiver QHQ element.

The controller drives a quantized rotation mount: coarse QBER scan over
one period of the element, golden-section refinement around the best
coarse point, a fit of the scan to a - b|cos(4 theta + delta)|, and one
pinned-parity probe per phase candidate to resolve the |cos| ambiguity.

A session factory is any callable factory(theta_applied, seed, **options)
returning an object with .qber_total and .aborted; the controller passes
x_parity=... as an option for the disambiguation probes.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from app.models.errors import DegenerateFitError, NoSecureOperatingPointError
from app.models.models import (
    CompensationOutcome,
    ControllerStep,
    FitResult,
    RotatorModel,
    XParity,
)
from app.services.metrics import compensation_angle
from app.utils.utils import AngleUtils, RandomUtils, SerializationUtils

logger = logging.getLogger(__name__)

SessionFactory = Callable[..., object]

TRACE_CSV_COLUMNS = ("iteration", "theta_deg_requested", "theta_deg_applied", "qber", "decision")
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SCAN_PERIOD = math.pi / 2
FIT_GRID_POINTS = 720
MIN_FIT_SAMPLES = 8
MIN_FIT_SPAN = math.pi / 4


def qber_objective(
    theta_H_AB: float,
    session_factory: SessionFactory,
    rotator: Optional[RotatorModel] = None,
    seed: int = 0,
) -> float:
    """
    Pooled QBER of one session at the quantized receiver angle
    """
    rotator = rotator or RotatorModel()
    return float(session_factory(rotator.quantize(theta_H_AB), seed).qber_total)


# -------------------------------------------------
# Curve fit
# -------------------------------------------------

def _model(params: np.ndarray, theta: np.ndarray) -> np.ndarray:
    a, b, delta = params
    return a - b * np.abs(np.cos(4.0 * theta + delta))


def fit_qber_curve(samples: Sequence[Tuple[float, float]]) -> FitResult:
    """
    Least-squares fit of qber(theta) = a - b|cos(4 theta + delta)|

    samples are (theta radians, qber fraction); a and b come back in percent
    and delta in [0, pi). A dense delta grid with closed-form (a, b) seeds a
    bounded local refinement.
    """
    if len(samples) < MIN_FIT_SAMPLES:
        raise DegenerateFitError(f"Need at least {MIN_FIT_SAMPLES} samples, got {len(samples)}")
    theta = np.array([s[0] for s in samples], dtype=float)
    y = 100.0 * np.array([s[1] for s in samples], dtype=float)
    if np.ptp(theta) < MIN_FIT_SPAN - 1e-12:
        raise DegenerateFitError("Samples must span at least 45 degrees")
    if np.ptp(y) < 1e-12:
        raise DegenerateFitError("QBER samples are constant")

    best = None
    for delta in np.linspace(0.0, math.pi, FIT_GRID_POINTS, endpoint=False):
        c = np.abs(np.cos(4.0 * theta + delta))
        design = np.column_stack([np.ones_like(c), -c])
        (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
        b = max(b, 0.0)
        if b == 0.0:
            a = float(np.mean(y))
        cost = float(np.sum((a - b * c - y) ** 2))
        if best is None or cost < best[0]:
            best = (cost, np.array([a, b, delta]))

    grid_cost, x0 = best
    x0[1] = max(x0[1], 1e-9)
    refined = least_squares(
        lambda p: _model(p, theta) - y,
        x0,
        bounds=([-np.inf, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
    )
    params = refined.x if 2.0 * refined.cost <= grid_cost else x0
    residual = float(np.sum((_model(params, theta) - y) ** 2))
    fit = FitResult(
        a=float(params[0]),
        b=float(params[1]),
        delta=AngleUtils.wrap(float(params[2]), math.pi),
        residual=residual,
    )
    logger.info(f"QBER fit: a={fit.a:.2f}% b={fit.b:.2f}% delta={fit.delta:.4f} rad")
    return fit


def phase_from_fit(fit: FitResult) -> Tuple[float, float]:
    """
    Phase candidates {delta, delta + pi} (mod 2 pi) left by the |cos| symmetry
    """
    first = AngleUtils.wrap(fit.delta)
    return first, AngleUtils.wrap(first + math.pi)


# -------------------------------------------------
# Controller
# -------------------------------------------------

class CompensationController:
    """
    Feedback loop around a receiver-side rotation mount
    """

    def __init__(
        self,
        session_factory: SessionFactory,
        rotator: Optional[RotatorModel] = None,
        coarse_step: float = math.radians(2.0),
        averaging: int = 3,
        seed: int = 0,
    ):
        self.session_factory = session_factory
        self.rotator = rotator or RotatorModel()
        if coarse_step < self.rotator.step_resolution:
            raise ValueError("coarse_step must be >= the rotator step resolution")
        if averaging < 1:
            raise ValueError("averaging must be >= 1")
        self.coarse_step = coarse_step
        self.averaging = averaging
        # Every probe reuses the same seeds so angle comparisons share their shot noise
        self.seeds = RandomUtils.derive_seeds(seed, averaging + 1)
        self.steps: List[ControllerStep] = []
        self._cache: Dict[Tuple[float, int, Optional[str]], object] = {}

    def _session(self, theta_applied: float, seed: int, x_parity: Optional[XParity] = None):
        key = (theta_applied, seed, x_parity.value if x_parity else None)
        if key not in self._cache:
            if x_parity is None:
                self._cache[key] = self.session_factory(theta_applied, seed)
            else:
                self._cache[key] = self.session_factory(theta_applied, seed, x_parity=x_parity)
        return self._cache[key]

    def probe(
        self,
        theta: float,
        decision: str,
        samples: int = 1,
        seed: Optional[int] = None,
        x_parity: Optional[XParity] = None,
    ) -> Tuple[float, float, bool]:
        """
        Mean QBER over `samples` sessions at the quantized angle.

        Returns (theta_applied, qber, all_aborted) and records a trace step.
        """
        applied = self.rotator.quantize(theta)
        seeds = [seed] if seed is not None else self.seeds[:samples]
        reports = [self._session(applied, s, x_parity) for s in seeds]
        qber = float(np.mean([r.qber_total for r in reports]))
        all_aborted = all(r.aborted for r in reports)
        self.steps.append(
            ControllerStep(
                iteration=len(self.steps),
                theta_requested=theta,
                theta_applied=applied,
                qber=qber,
                decision=decision,
            )
        )
        logger.debug(f"{decision}: theta={math.degrees(applied):.4f} deg qber={qber:.4f}")
        return applied, qber, all_aborted

    def coarse_scan(self) -> List[Tuple[float, float, bool]]:
        grid = np.arange(0.0, SCAN_PERIOD - 1e-12, self.coarse_step)
        return [self.probe(float(theta), "coarse") for theta in grid]

    def refine(self, center: float) -> Tuple[float, float]:
        """
        Golden-section search on [center - coarse_step, center + coarse_step]
        down to the rotator resolution
        """
        lo, hi = center - self.coarse_step, center + self.coarse_step
        tol = self.rotator.step_resolution

        def objective(theta: float) -> float:
            return self.probe(theta, "refine", samples=self.averaging)[1]

        c = hi - INV_PHI * (hi - lo)
        d = lo + INV_PHI * (hi - lo)
        fc, fd = objective(c), objective(d)
        while hi - lo > tol:
            if fc < fd:
                hi, d, fd = d, c, fc
                c = hi - INV_PHI * (hi - lo)
                fc = objective(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + INV_PHI * (hi - lo)
                fd = objective(d)

        theta, qber, _ = self.probe(0.5 * (lo + hi), "refine", samples=self.averaging)
        refined = [s for s in self.steps if s.decision == "refine"]
        best = min(refined, key=lambda s: s.qber)
        if best.qber < qber:
            return best.theta_applied, best.qber
        return theta, qber

    def scan_minimize(self) -> float:
        """
        Quantized receiver angle minimizing the measured QBER
        """
        coarse = self.coarse_scan()
        if all(aborted for _, _, aborted in coarse):
            raise NoSecureOperatingPointError(
                f"All {len(coarse)} coarse probes aborted; no secure operating point"
            )
        center = min(coarse, key=lambda p: p[1])[0]
        theta, qber = self.refine(center)
        logger.info(f"Scan minimum at {math.degrees(theta):.4f} deg, QBER {qber:.4f}")
        return theta

    def disambiguate(self, candidates: Sequence[float]) -> Tuple[float, float]:
        """
        Probe each candidate's compensation angle with the X parity pinned to
        the (HH + VV) convention and keep the lower QBER
        """
        results = []
        for phase in candidates:
            theta = compensation_angle(phase, 0.0)
            applied, qber, _ = self.probe(
                theta, "disambiguate", seed=self.seeds[0], x_parity=XParity.PHI_PLUS
            )
            results.append((qber, phase, applied))
        qber, phase, applied = min(results)
        logger.info(f"Phase {phase:.4f} rad selected (pinned-parity QBER {qber:.4f})")
        return phase, applied

    def run(self) -> CompensationOutcome:
        theta_scan = self.scan_minimize()
        coarse = [(s.theta_applied, s.qber) for s in self.steps if s.decision == "coarse"]

        fit = None
        candidates: List[float] = []
        theta_final = theta_scan
        try:
            # Scanning the receiver angle reverses the sign of the phase law
            fit = fit_qber_curve([(-theta, qber) for theta, qber in coarse])
            candidates = list(phase_from_fit(fit))
            _, theta_final = self.disambiguate(candidates)
        except DegenerateFitError as e:
            logger.warning(f"Fit unavailable, keeping the scan optimum: {e}")

        applied, qber, aborted = self.probe(theta_final, "final", seed=self.seeds[-1])
        outcome = CompensationOutcome(
            theta_scan=theta_scan,
            fit=fit,
            phase_candidates=candidates,
            theta_final=applied,
            qber_final=qber,
            aborted=aborted,
            steps=list(self.steps),
        )
        logger.info(
            f"Compensation finished at {math.degrees(applied):.4f} deg, QBER {qber:.4f}"
            f"{' (aborted)' if aborted else ''}"
        )
        return outcome

    def write_trace(self, path: Path):
        rows = [
            (s.iteration, math.degrees(s.theta_requested), math.degrees(s.theta_applied), s.qber, s.decision)
            for s in self.steps
        ]
        SerializationUtils.write_csv(path, TRACE_CSV_COLUMNS, rows)


def scan_minimize(
    rotator: RotatorModel,
    coarse_step: float,
    session_factory: SessionFactory,
    seed: int = 0,
    averaging: int = 3,
) -> float:
    return CompensationController(session_factory, rotator, coarse_step, averaging, seed).scan_minimize()
