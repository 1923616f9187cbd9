import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.models.errors import OutOfRangeError
from app.models.models import SourceConfig
from app.services.biphoton import PHI_MINUS, fidelity, state_after_pump_gp, state_label
from app.services.metrics import qber_analytic
from app.services.source import emission_rate, emit_events, emitted_state, state_ref, unknown_phase
from app.utils.utils import RandomUtils


@pytest.mark.parametrize(
    "delta_x, label",
    [
        (0.0, "(HH − VV)/√2"),
        (0.5, "(HH − iVV)/√2"),
        (1.0, "(HH + VV)/√2"),
        (1.5, "(HH + iVV)/√2"),
        (2.0, "(HH − VV)/√2"),
    ],
)
def test_displacement_cycles_through_table_states(delta_x, label):
    assert state_label(state_after_pump_gp(unknown_phase(delta_x), 0.0)) == label


def test_unknown_phase_is_reduced():
    assert unknown_phase(2.0) == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= unknown_phase(-0.25) < 2 * math.pi


def test_unknown_phase_rejects_large_displacement():
    with pytest.raises(OutOfRangeError):
        unknown_phase(3.0)


def test_emitted_state_is_two_millimeter_periodic():
    a = emitted_state(SourceConfig(delta_x=0.25, noise_p=0.1))
    b = emitted_state(SourceConfig(delta_x=2.25, noise_p=0.1))
    assert a.allclose(b, tol=1e-10)


def test_emitted_state_werner_fidelity():
    rho = emitted_state(SourceConfig(noise_p=0.106))
    assert fidelity(rho, PHI_MINUS) == pytest.approx(0.9205, abs=1e-12)


def test_pure_emitted_state_at_zero():
    rho = emitted_state(SourceConfig(noise_p=0.0))
    assert fidelity(rho, PHI_MINUS) == pytest.approx(1.0)


def test_qber_is_45_degree_periodic_in_pump_angle():
    for theta in np.linspace(0.0, math.pi / 4, 7):
        phi_a = 4 * theta
        phi_b = 4 * (theta + math.pi / 4)
        assert qber_analytic(phi_a + math.pi) == pytest.approx(qber_analytic(phi_b + math.pi), abs=1e-12)


def test_event_count_follows_poisson_statistics():
    stream = emit_events(SourceConfig(pair_rate=1000.0, duration=1.0, seed=3))
    assert 1000 - 4 * math.sqrt(1000) <= len(stream) <= 1000 + 4 * math.sqrt(1000)


def test_events_are_sorted_and_inside_the_run():
    stream = emit_events(SourceConfig(pair_rate=5000.0, duration=0.2, seed=11))
    assert np.all(np.diff(stream.timestamps) > 0)
    assert stream.timestamps[0] >= 0.0
    assert stream.timestamps[-1] < 0.2


def test_events_are_deterministic_per_seed():
    config = SourceConfig(pair_rate=2000.0, duration=0.5, seed=42)
    first, second = emit_events(config), emit_events(config)
    assert np.array_equal(first.timestamps, second.timestamps)
    assert first.state_ref == second.state_ref
    other = emit_events(config, rng=RandomUtils.rng(43))
    assert not np.array_equal(first.timestamps[:10], other.timestamps[:10])


def test_events_reference_the_emitted_state():
    config = SourceConfig(theta_H_P=0.3, pair_rate=100.0, duration=0.1)
    stream = emit_events(config)
    refs = {event.true_state_ref for event in stream.events()}
    assert refs == {state_ref(emitted_state(config))}


@pytest.mark.parametrize(
    "field, value",
    [("pair_rate", 0.0), ("duration", -1.0), ("noise_p", 1.5), ("delta_x", 2.6)],
)
def test_source_config_validation(field, value):
    with pytest.raises(ValidationError):
        SourceConfig(**{field: value})


def test_emission_rate_falloff():
    assert emission_rate(SourceConfig(pair_rate=1000.0, delta_x=1.0)) == 1000.0
    reduced = emission_rate(SourceConfig(pair_rate=1000.0, delta_x=1.0, falloff_sigma=1.0))
    assert reduced == pytest.approx(1000.0 * math.exp(-0.5))
