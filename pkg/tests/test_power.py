import pytest
from hypothesis import given, settings, strategies as st

from voltdrop.errors import ConfigError
from voltdrop.power import (FaultSchedule, Mode, VoltageModel, device_available, power_state_at,
                            schedule_faults, voltage_at)

MODEL = VoltageModel()


@pytest.mark.parametrize("elapsed, loaded, volts", [
    (0, True, 5.0),
    (40, True, 4.5),
    (470, True, 2.25),
    (900, True, 0.0),
    (2000, True, 0.0),
    (0, False, 5.0),
    (1400, False, 0.0),
    (700, False, 2.5),
])
def test_voltage_anchors(elapsed, loaded, volts):
    assert voltage_at(MODEL, elapsed, loaded) == pytest.approx(volts, abs=1e-12)


def test_negative_elapsed_rejected():
    with pytest.raises(ValueError):
        voltage_at(MODEL, -1)


@pytest.mark.parametrize("v, up", [(5.0, True), (4.5, True), (4.49, False), (0.0, False)])
def test_availability_threshold(v, up):
    assert device_available(MODEL, v) is up


@given(st.floats(0, 3000), st.floats(0, 3000), st.booleans())
def test_voltage_monotone(a, b, loaded):
    lo, hi = sorted((a, b))
    assert voltage_at(MODEL, hi, loaded) <= voltage_at(MODEL, lo, loaded)


def test_zero_faults_empty():
    assert schedule_faults(1, 0, 10_000, 500).cutoffs == ()


def test_schedule_deterministic():
    assert schedule_faults(1, 3, 60_000, 500) == schedule_faults(1, 3, 60_000, 500)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_schedule_spacing(seed, n):
    horizon = 60_000.0
    if horizon <= n * 1900:
        with pytest.raises(ConfigError):
            schedule_faults(seed, n, horizon, 500)
        return
    s = schedule_faults(seed, n, horizon, 500)
    assert len(s.cutoffs) == n
    assert all(0 <= c < horizon for c in s.cutoffs)
    assert all(b - a > 1400 + 500 for a, b in zip(s.cutoffs, s.cutoffs[1:]))


def test_seed7_example():
    s = schedule_faults(7, 3, 60_000, 500)
    assert len(s.cutoffs) == 3
    assert all(b - a > 1900 for a, b in zip(s.cutoffs, s.cutoffs[1:]))


def test_infeasible_horizon():
    with pytest.raises(ConfigError):
        schedule_faults(1, 10, 5_000, 500)


def test_power_state_examples():
    empty = FaultSchedule()
    state, v = power_state_at(empty, MODEL, 12345)
    assert state.mode is Mode.ON and v == 5.0

    s = FaultSchedule((1000.0,), 500)
    state, v = power_state_at(s, MODEL, 1040)
    assert state.mode is Mode.DISCHARGING and state.elapsed == 40 and v == pytest.approx(4.5)
    state, v = power_state_at(s, MODEL, 2000)
    assert state.mode is Mode.OFF and v == 0.0
    state, v = power_state_at(s, MODEL, 2500)
    assert state.mode is Mode.ON and v == 5.0


def test_mode_sequence_on_discharging_off_on():
    s = FaultSchedule((1000.0,), 500)
    modes = []
    for t in range(0, 4000, 10):
        m = power_state_at(s, MODEL, t)[0].mode
        if not modes or modes[-1] is not m:
            modes.append(m)
    assert modes == [Mode.ON, Mode.DISCHARGING, Mode.OFF, Mode.ON]


def test_schedule_validation():
    with pytest.raises(ConfigError):
        FaultSchedule((5.0, 5.0))
    with pytest.raises(ConfigError):
        VoltageModel(t_unavailable=950)
