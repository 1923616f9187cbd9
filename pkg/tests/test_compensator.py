import math
from types import SimpleNamespace

import numpy as np
import pytest

from app.models.errors import DegenerateFitError, NoSecureOperatingPointError
from app.models.models import ARCSEC, FitResult, RotatorModel, XParity
from app.services.compensator import (
    TRACE_CSV_COLUMNS,
    CompensationController,
    fit_qber_curve,
    phase_from_fit,
    qber_objective,
    scan_minimize,
)
from app.services.metrics import compensation_angle
from app.utils.utils import SerializationUtils

ROTATOR = RotatorModel()


def _mod_pi_distance(x: float, y: float) -> float:
    d = (x - y) % math.pi
    return min(d, math.pi - d)


def _curve(delta: float, a: float = 25.0, b: float = 25.0, n: int = 45):
    thetas = np.linspace(0.0, math.pi / 2, n, endpoint=False)
    return [(float(t), (a - b * abs(math.cos(4 * t + delta))) / 100.0) for t in thetas]


# -------------------------------------------------
# Rotator and objective
# -------------------------------------------------

def test_quantize_snaps_to_step_grid():
    theta = ROTATOR.quantize(0.123456)
    steps = theta / ROTATOR.step_resolution
    assert steps == pytest.approx(round(steps), abs=1e-6)
    assert abs(theta - 0.123456) <= ROTATOR.step_resolution / 2 + 1e-15


def test_quantize_wraps_into_range():
    assert ROTATOR.quantize(math.pi + 0.1) == pytest.approx(ROTATOR.quantize(0.1), abs=1e-12)
    assert 0.0 <= ROTATOR.quantize(-0.1) < math.pi


def test_rotator_rejects_zero_step():
    with pytest.raises(ValueError):
        RotatorModel(step_resolution=0.0)


def test_objective_uses_quantized_angle(analytic_session):
    factory = analytic_session(1.0)
    qber_objective(0.3, factory, ROTATOR, seed=5)
    theta, seed, _ = factory.calls[0]
    assert theta == ROTATOR.quantize(0.3)
    assert seed == 5


# -------------------------------------------------
# Curve fit
# -------------------------------------------------

def test_fit_recovers_unshifted_curve():
    fit = fit_qber_curve(_curve(0.0))
    assert fit.a == pytest.approx(25.0, abs=1e-3)
    assert fit.b == pytest.approx(25.0, abs=1e-3)
    assert _mod_pi_distance(fit.delta, 0.0) < 1e-4
    assert 0.0 <= fit.delta < math.pi


@pytest.mark.parametrize("delta", [0.3, 1.2, 2.9])
def test_fit_recovers_injected_phase(delta):
    fit = fit_qber_curve(_curve(delta, a=27.0, b=23.0))
    assert _mod_pi_distance(fit.delta, delta) < 0.02
    assert fit.a == pytest.approx(27.0, abs=0.05)
    assert fit.b == pytest.approx(23.0, abs=0.05)


def test_fit_tolerates_shot_noise():
    rng = np.random.default_rng(8)
    samples = [(t, q + rng.normal(0.0, 0.003)) for t, q in _curve(0.3)]
    fit = fit_qber_curve(samples)
    assert _mod_pi_distance(fit.delta, 0.3) < 0.02
    assert fit.residual > 0.0


def test_fit_needs_enough_samples():
    with pytest.raises(DegenerateFitError):
        fit_qber_curve(_curve(0.3)[:5])


def test_fit_needs_a_wide_span():
    narrow = [(0.01 * i, 0.1 + 0.01 * i) for i in range(10)]
    with pytest.raises(DegenerateFitError):
        fit_qber_curve(narrow)


def test_fit_rejects_constant_data():
    with pytest.raises(DegenerateFitError):
        fit_qber_curve([(t, 0.05) for t, _ in _curve(0.0)])


def test_phase_candidates_differ_by_pi():
    first, second = phase_from_fit(FitResult(a=25.0, b=25.0, delta=0.4, residual=0.0))
    assert first == pytest.approx(0.4)
    assert second == pytest.approx(0.4 + math.pi)


# -------------------------------------------------
# Controller
# -------------------------------------------------

def test_controller_validates_parameters(analytic_session):
    with pytest.raises(ValueError):
        CompensationController(analytic_session(0.0), ROTATOR, coarse_step=ROTATOR.step_resolution / 2)
    with pytest.raises(ValueError):
        CompensationController(analytic_session(0.0), ROTATOR, averaging=0)


@pytest.mark.parametrize("source_phase", [0.0, 1.0, math.pi / 2, 4.0])
def test_scan_reaches_a_perfect_correlation_point(analytic_session, source_phase):
    theta = scan_minimize(ROTATOR, math.radians(2.0), analytic_session(source_phase))
    assert abs(math.cos(source_phase - 4 * theta)) == pytest.approx(1.0, abs=1e-6)
    assert theta == pytest.approx(ROTATOR.quantize(theta), abs=1e-12)


def test_scan_with_every_probe_aborted(analytic_session):
    with pytest.raises(NoSecureOperatingPointError):
        scan_minimize(ROTATOR, math.radians(2.0), analytic_session(0.0, threshold=-1.0))


def test_coarse_probes_share_one_seed(analytic_session):
    factory = analytic_session(0.7)
    controller = CompensationController(factory, ROTATOR, seed=3)
    controller.coarse_scan()
    assert {seed for _, seed, _ in factory.calls} == {controller.seeds[0]}
    assert len(factory.calls) == 45


@pytest.mark.parametrize("source_phase", [0.5, 2.0, 5.5])
def test_run_restores_phi_plus(analytic_session, source_phase):
    factory = analytic_session(source_phase)
    outcome = CompensationController(factory, ROTATOR, seed=1).run()
    expected = ROTATOR.quantize(compensation_angle(source_phase, 0.0))
    assert abs(outcome.theta_final - expected) <= 2 * ROTATOR.step_resolution
    assert math.cos(source_phase - 4 * outcome.theta_final) == pytest.approx(1.0, abs=1e-6)
    assert outcome.qber_final == pytest.approx(0.0, abs=1e-6)
    assert not outcome.aborted
    assert len(outcome.phase_candidates) == 2
    assert _mod_pi_distance(outcome.fit.delta, source_phase) < 0.02


def test_disambiguation_pins_the_parity(analytic_session):
    factory = analytic_session(1.3)
    CompensationController(factory, ROTATOR).run()
    pinned = [options for _, _, options in factory.calls if options]
    assert len(pinned) == 2
    assert all(options["x_parity"] == XParity.PHI_PLUS for options in pinned)


def test_run_with_noise_floor(analytic_session):
    outcome = CompensationController(analytic_session(2.2, noise_p=0.053), ROTATOR).run()
    assert outcome.qber_final == pytest.approx(0.0265, abs=1e-4)
    assert outcome.fit.b == pytest.approx(25.0 * (1 - 0.053), abs=0.1)


def test_run_keeps_scan_optimum_when_fit_fails():
    def flat(theta, seed, **options):
        return SimpleNamespace(qber_total=0.05, aborted=False)

    outcome = CompensationController(flat, ROTATOR).run()
    assert outcome.fit is None
    assert outcome.phase_candidates == []
    assert outcome.theta_final == pytest.approx(outcome.theta_scan, abs=1e-12)


def test_sessions_are_cached(analytic_session):
    factory = analytic_session(0.9)
    controller = CompensationController(factory, ROTATOR)
    controller.probe(0.2, "coarse")
    controller.probe(0.2, "coarse")
    assert len(factory.calls) == 1
    assert len(controller.steps) == 2


def test_trace_csv(analytic_session, tmp_path):
    controller = CompensationController(analytic_session(1.0), ROTATOR, coarse_step=math.radians(5.0))
    outcome = controller.run()
    path = tmp_path / "trace.csv"
    controller.write_trace(path)
    rows = SerializationUtils.read_csv(path)
    assert tuple(rows[0]) == TRACE_CSV_COLUMNS
    assert len(rows) == len(outcome.steps)
    assert {row["decision"] for row in rows} == {"coarse", "refine", "disambiguate", "final"}
    assert float(rows[-1]["theta_deg_applied"]) == pytest.approx(math.degrees(outcome.theta_final))


def test_outcome_json_reports_degrees(analytic_session):
    outcome = CompensationController(analytic_session(1.0), ROTATOR).run()
    payload = outcome.to_json_dict()
    assert "steps" not in payload
    assert payload["theta_final_deg"] == pytest.approx(math.degrees(outcome.theta_final))


def test_finer_step_resolution_is_honored(analytic_session):
    fine = RotatorModel(step_resolution=5 * ARCSEC)
    outcome = CompensationController(analytic_session(1.0), fine).run()
    assert outcome.theta_final == pytest.approx(fine.quantize(outcome.theta_final), abs=1e-12)
