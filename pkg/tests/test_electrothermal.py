import math
from dataclasses import replace

import numpy as np
import pytest

from pnrsim.electrothermal import (ElectrothermalParams, delayed_current_fraction, extract_rise_time,
                                   fit_rise_exponent, power_law_slope, rise_times, simulate_transient)
from pnrsim.errors import DomainError, NoPulseError

P = ElectrothermalParams()


@pytest.fixture(scope="module")
def one_photon():
    return simulate_transient(P, [0.0])


def test_no_photon_is_flat():
    r = simulate_transient(P, [])
    assert np.all(r.current == P.bias_current)
    assert np.all(r.voltage == 0.0)
    assert r.domain_lifetime is None


def test_circuit_bounds_and_output_law(one_photon):
    r = one_photon
    assert r.current[0] == P.bias_current
    assert np.all(r.current >= 0) and np.all(r.current <= P.bias_current * (1 + 1e-12))
    assert np.array_equal(r.voltage, (P.bias_current - r.current) * P.load_resistance)
    assert r.voltage.max() <= P.bias_current * P.load_resistance
    assert len(r.times) == len(r.current) == len(r.voltage) == r.domain_lengths.shape[1]


def test_recovery_after_collapse(one_photon):
    r = one_photon
    assert r.domain_lifetime is not None
    after = r.times > r.domain_lifetime + 1e-12
    deficit = P.bias_current - r.current[after]
    t = r.times[after]
    # log-linear decay of the current deficit once the wire is superconducting
    tau = -1.0 / np.polyfit(t[:2000], np.log(deficit[:2000]), 1)[0]
    assert tau == pytest.approx(P.kinetic_inductance / P.load_resistance, rel=0.05)
    assert abs(r.current[-1] - P.bias_current) < 0.01 * P.bias_current


def test_rise_time_decreases_with_photon_number():
    tr = rise_times(P, 7)
    assert np.all(np.diff(tr) < 0)


def test_convergence_under_step_halving(one_photon):
    fine = simulate_transient(replace(P, time_step=P.time_step / 2), [0.0], check_convergence=False)
    assert extract_rise_time(fine) == pytest.approx(extract_rise_time(one_photon), rel=0.01)
    assert fine.domain_lifetime == pytest.approx(one_photon.domain_lifetime, rel=0.01)


def test_extract_rise_time_ramp_and_pole():
    t = np.linspace(0, 200e-12, 2001)
    ramp = np.clip(t / 100e-12, 0, 1)
    assert extract_rise_time(t, voltage=ramp) == pytest.approx(80e-12, rel=1e-9)
    tau = 1e-9
    t = np.linspace(0, 20e-9, 200_001)
    step = 1 - np.exp(-t / tau)
    assert extract_rise_time(t, voltage=step) == pytest.approx(tau * math.log(9), rel=1e-6)
    with pytest.raises(NoPulseError):
        extract_rise_time(t, voltage=np.zeros_like(t))


def test_power_law_slope_exact():
    ns = np.arange(1, 8)
    assert power_law_slope(ns, 3.0 * ns ** -0.3) == pytest.approx(-0.3, abs=1e-9)


def test_fit_rise_exponent_default_range():
    p = fit_rise_exponent(P, 7)
    assert -0.45 <= p <= -0.15
    with pytest.raises(DomainError):
        fit_rise_exponent(P, 2)


def test_delayed_current_fraction(one_photon):
    assert delayed_current_fraction(P, 0.0) == pytest.approx(1.0)
    r = one_photon
    stop = r.times[np.argmin(r.current)]
    delays = np.linspace(0, stop, 40)
    fr = [delayed_current_fraction(P, d) for d in delays]
    assert np.all(np.diff(fr) <= 1e-12)
    third = delayed_current_fraction(P, r.domain_lifetime / 3)
    assert 0.3 <= third <= 0.7
    with pytest.raises(DomainError):
        delayed_current_fraction(P, -1e-12)
    with pytest.raises(DomainError):
        delayed_current_fraction(P, 2 * P.max_time)


def test_delayed_second_photon_extends_the_pulse(one_photon):
    both = simulate_transient(P, [0.0, 100e-12])
    assert both.domain_lengths.shape[0] == 2
    assert both.voltage.max() >= one_photon.voltage.max()


def test_parameter_validation():
    with pytest.raises(DomainError):
        ElectrothermalParams(bias_current=40e-6)
    with pytest.raises(DomainError):
        ElectrothermalParams(load_resistance=0)
    with pytest.raises(DomainError):
        simulate_transient(P, [P.max_time * 2])
    with pytest.raises(DomainError):
        simulate_transient(P, [1e-9, 0.0])


def test_transient_csv(tmp_path, one_photon):
    path = tmp_path / "t.csv"
    one_photon.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time_seconds,current_amperes,voltage_volts,total_normal_length_meters"
    assert len(lines) == len(one_photon.times) + 1
