import math

import numpy as np
import pytest

from app.models.models import AnalyzerSettings
from app.services.biphoton import PHI_PLUS, bell_from_phase, ket_to_density, werner_mix
from app.services.metrics import (
    SECURITY_THRESHOLD,
    binary_entropy,
    chsh_from_state,
    chsh_s,
    compensation_angle,
    composite_qber,
    correlation_e,
    metrics_report,
    pump_compensation_angle,
    qber_analytic,
    residual_phase,
    secure_key_rate,
    secure_phase_window,
    visibility,
)


def test_closed_forms_at_named_phases():
    assert chsh_s(0.0) == pytest.approx(2 * math.sqrt(2))
    assert chsh_s(math.pi / 2) == pytest.approx(math.sqrt(2))
    assert visibility(math.pi) == pytest.approx(1.0)
    assert qber_analytic(0.0) == pytest.approx(0.0)
    assert qber_analytic(math.pi / 2) == pytest.approx(0.25)


@pytest.mark.parametrize("phi", np.linspace(0.0, 2 * math.pi, 9))
def test_report_is_self_consistent(phi):
    report = metrics_report(phi)
    assert report.visibility == pytest.approx(report.s_value / (2 * math.sqrt(2)))
    assert report.qber == pytest.approx(qber_analytic(phi))


@pytest.mark.parametrize("phi", [0.0, 0.4, math.pi / 2, 2.0, math.pi, 4.5])
def test_chsh_from_state_follows_closed_form(phi):
    rho = ket_to_density(bell_from_phase(phi))
    assert chsh_from_state(rho) == pytest.approx(chsh_s(phi), abs=1e-10)


def test_correlation_of_phi_plus():
    rho = ket_to_density(PHI_PLUS)
    assert correlation_e(rho, 0.0, 0.0) == pytest.approx(1.0)
    assert correlation_e(rho, 0.0, math.pi / 4) == pytest.approx(0.0, abs=1e-12)


def test_chsh_of_werner_state_shrinks_linearly():
    rho = werner_mix(PHI_PLUS, 0.2)
    assert chsh_from_state(rho, AnalyzerSettings.canonical()) == pytest.approx(0.8 * 2 * math.sqrt(2))


def test_composite_qber_floor_and_peak():
    assert composite_qber(0.0, 0.053) == pytest.approx(0.0265)
    assert composite_qber(math.pi / 2, 0.053) == pytest.approx(0.947 * 0.25 + 0.0265)


def test_secure_window_width():
    window = secure_phase_window()
    assert window.threshold == SECURITY_THRESHOLD
    assert window.half_width == pytest.approx(math.acos(0.56))
    assert window.contains(0.9)
    assert window.contains(math.pi - 0.9)
    assert not window.contains(1.1)
    assert qber_analytic(window.half_width) == pytest.approx(0.11)


def test_secure_window_rejects_bad_threshold():
    with pytest.raises(ValueError):
        secure_phase_window(0.3)


def test_binary_entropy_and_key_rate():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0)
    assert secure_key_rate(0.0) == pytest.approx(1.0)
    assert secure_key_rate(0.11) == pytest.approx(0.0, abs=1e-3)
    assert secure_key_rate(0.2) == 0.0
    with pytest.raises(ValueError):
        binary_entropy(1.5)


@pytest.mark.parametrize(
    "phi_un, theta_p_deg, expected_deg",
    [
        (0.0, 0.0, 0.0),
        (0.0, 22.5, 22.5),
        (0.0, 45.0, 45.0),
        (0.0, 67.5, 67.5),
        (0.0, 90.0, 0.0),
        (math.pi / 2, 0.0, 22.5),
        (math.pi, 0.0, 45.0),
    ],
)
def test_compensation_angles(phi_un, theta_p_deg, expected_deg):
    theta = compensation_angle(phi_un, math.radians(theta_p_deg))
    assert math.degrees(theta) == pytest.approx(expected_deg, abs=1e-9)
    assert 0.0 <= theta < math.pi / 2


@pytest.mark.parametrize("phi_un", [0.0, 0.3, 2.0, 5.5])
def test_compensation_cancels_residual_phase(phi_un):
    theta_p = 0.37
    residual = residual_phase(phi_un, theta_p, compensation_angle(phi_un, theta_p))
    assert abs(math.remainder(residual, 2 * math.pi)) < 1e-9


def test_residual_phase_without_receiver_element():
    assert residual_phase(0.0, 0.0) == pytest.approx(math.pi)
    assert qber_analytic(residual_phase(0.0, math.pi / 8)) == pytest.approx(0.25)


def test_pump_compensation_angle_range():
    for phi_un in np.linspace(0.0, 2 * math.pi, 13):
        theta = pump_compensation_angle(phi_un)
        assert 0.0 <= theta < math.pi / 2
        assert abs(math.remainder(phi_un + 4 * theta - math.pi, 2 * math.pi)) < 1e-9
