import math

import numpy as np
import pytest

from app.models.errors import StateError
from app.models.models import BellSign, BellStateSpec, Party
from app.models.quantum import DensityMatrix4, JonesMatrix, TwoQubitKet
from app.services.biphoton import (
    PHI_MINUS,
    PHI_PLUS,
    apply_local,
    apply_local_density,
    bell_from_phase,
    canonicalize,
    concurrence,
    fidelity,
    ket_to_density,
    phase_shifted_bell,
    purity,
    relative_phase,
    state_after_pump_gp,
    state_after_receiver_gp,
    state_label,
    werner_mix,
)
from app.services.metrics import compensation_angle, pump_compensation_angle
from app.services.polarization import equal_up_to_global_phase, hwp, qhq


def test_phase_shifted_bell_amplitudes():
    s = phase_shifted_bell(BellStateSpec(relative_phase=math.pi / 2))
    assert s.allclose(np.array([1, 0, 0, 1j]) / math.sqrt(2))
    assert PHI_MINUS.allclose(np.array([1, 0, 0, -1]) / math.sqrt(2))


def test_minus_sign_adds_pi():
    minus = phase_shifted_bell(BellStateSpec(relative_phase=0.0, sign=BellSign.MINUS))
    assert minus.allclose(PHI_MINUS)


def test_bell_state_spec_reduces_phase():
    assert BellStateSpec(relative_phase=2 * math.pi + 0.5).relative_phase == pytest.approx(0.5)


@pytest.mark.parametrize(
    "theta_deg, label",
    [
        (0.0, "(HH − VV)/√2"),
        (22.5, "(HH − iVV)/√2"),
        (45.0, "(HH + VV)/√2"),
        (67.5, "(HH + iVV)/√2"),
        (90.0, "(HH − VV)/√2"),
    ],
)
def test_pump_angle_cycles_through_table_states(theta_deg, label):
    assert state_label(state_after_pump_gp(0.0, math.radians(theta_deg))) == label


@pytest.mark.parametrize("phi_un", [0.0, 0.7, math.pi / 2, 2.5, 4.0])
@pytest.mark.parametrize("theta_p_deg", [0.0, 10.0, 22.5, 67.5])
def test_receiver_element_at_compensation_angle_restores_phi_plus(phi_un, theta_p_deg):
    theta_p = math.radians(theta_p_deg)
    ket = state_after_pump_gp(phi_un, theta_p)
    out = state_after_receiver_gp(ket, compensation_angle(phi_un, theta_p))
    assert equal_up_to_global_phase(out, PHI_PLUS)


def test_compensation_on_alice_side_is_equivalent():
    ket = state_after_pump_gp(0.0, math.pi / 8)
    theta = compensation_angle(0.0, math.pi / 8)
    on_bob = state_after_receiver_gp(ket, theta, Party.BOB)
    on_alice = state_after_receiver_gp(ket, theta, Party.ALICE)
    assert equal_up_to_global_phase(on_bob, on_alice)


def test_pump_site_compensation_matches_receiver_site():
    phi_un = 1.1
    via_receiver = state_after_receiver_gp(
        state_after_pump_gp(phi_un, math.radians(15.0)), compensation_angle(phi_un, math.radians(15.0))
    )
    via_pump = state_after_pump_gp(phi_un, pump_compensation_angle(phi_un))
    assert equal_up_to_global_phase(via_receiver, via_pump)
    assert equal_up_to_global_phase(via_pump, PHI_PLUS)


def test_apply_local_rejects_non_unitary():
    with pytest.raises(StateError):
        apply_local(JonesMatrix([[1, 0], [0, 0.5]]), JonesMatrix.identity(), PHI_PLUS)


def test_apply_local_density_matches_ket_evolution():
    u_a, u_b = hwp(0.3), qhq(0.2)
    rho = apply_local_density(u_a, u_b, ket_to_density(PHI_PLUS))
    expected = ket_to_density(apply_local(u_a, u_b, PHI_PLUS))
    assert rho.allclose(expected)


def test_werner_fidelity():
    rho = werner_mix(PHI_MINUS, 0.106)
    assert fidelity(rho, PHI_MINUS) == pytest.approx(1 - 3 * 0.106 / 4, abs=1e-12)


def test_werner_parameter_range():
    with pytest.raises(ValueError):
        werner_mix(PHI_PLUS, 1.2)


@pytest.mark.parametrize("p", [0.0, 0.2, 0.5, 0.8])
def test_werner_concurrence(p):
    assert concurrence(werner_mix(PHI_PLUS, p)) == pytest.approx(max(0.0, 1 - 1.5 * p), abs=1e-9)


def test_concurrence_of_product_state_is_zero():
    product = TwoQubitKet([1, 0, 0, 0])
    assert concurrence(ket_to_density(product)) == pytest.approx(0.0, abs=1e-9)
    assert concurrence(DensityMatrix4.maximally_mixed()) == pytest.approx(0.0, abs=1e-9)


def test_purity_bounds():
    assert purity(ket_to_density(PHI_PLUS)) == pytest.approx(1.0)
    assert purity(DensityMatrix4.maximally_mixed()) == pytest.approx(0.25)


def test_canonicalize_and_relative_phase():
    ket = TwoQubitKet(np.exp(1j * 0.9) * bell_from_phase(1.2).data)
    canon = canonicalize(ket)
    assert canon.data[0].imag == pytest.approx(0.0, abs=1e-12)
    assert canon.data[0].real > 0
    assert relative_phase(ket) == pytest.approx(1.2)


def test_state_label_falls_back_to_degrees():
    assert state_label(bell_from_phase(math.radians(30.0))) == "(HH + e^(i30.0°)VV)/√2"


def test_relative_phase_needs_both_amplitudes():
    with pytest.raises(StateError):
        relative_phase(TwoQubitKet([1, 0, 0, 0]))


def _random_unitary(rng) -> JonesMatrix:
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return JonesMatrix(q * (np.diag(r) / np.abs(np.diag(r))))


def test_phase_shifted_bell_is_maximally_entangled():
    rng = np.random.default_rng(17)
    for phi in rng.uniform(0.0, 2 * math.pi, 50):
        for sign in (BellSign.PLUS, BellSign.MINUS):
            rho = ket_to_density(bell_from_phase(phi, sign))
            assert concurrence(rho) == pytest.approx(1.0, abs=1e-10)


def test_concurrence_is_invariant_under_local_unitaries():
    rng = np.random.default_rng(23)
    for p in (0.0, 0.1, 0.3):
        rho = werner_mix(bell_from_phase(rng.uniform(0.0, 2 * math.pi)), p)
        before = concurrence(rho)
        for _ in range(10):
            rotated = apply_local_density(_random_unitary(rng), _random_unitary(rng), rho)
            assert concurrence(rotated) == pytest.approx(before, abs=1e-9)
