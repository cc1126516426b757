"""Lumped electrothermal transient of a current-biased nanowire.

Circuit: kinetic inductance in series with the time-dependent normal-domain
resistance, shunted by the load (readout) resistor::

    L dI/dt = (I_b - I) R_L - I R_n(t),   R_n = R_sheet * sum(lengths) / width

Each absorption nucleates a normal domain of ``seed_domain_length`` whose two
walls move with a speed that relaxes, over ``wall_response_time``, towards the
current-dependent domain-wall velocity

    v(I) = v0 (psi j^2 - 2) / sqrt(psi j^2 - 1)     for psi j^2 > 2
    v(I) = v0 (psi j^2 - 2)                         otherwise (shrinking)

with ``j = I / I_sw``.  Domains from separate absorptions are independent, so
a photon arriving while a domain already exists adds two more walls.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kernels
from .errors import AccuracyError, DomainError, NoPulseError

SWITCHING_CURRENT = 37.5e-6


@dataclass(frozen=True)
class ElectrothermalParams:
    kinetic_inductance: float = 400e-9
    load_resistance: float = 50.0
    bias_current: float = 0.97 * SWITCHING_CURRENT
    switching_current: float = SWITCHING_CURRENT
    sheet_resistance: float = 400.0
    wire_width: float = 70e-9
    # calibration constants: 1-photon 10-90% rise ~0.3 ns, rise exponent ~ -0.33
    wall_velocity_scale: float = 1000.0
    stekly: float = 10.0
    wall_response_time: float = 200e-12
    seed_domain_length: float = 20e-9
    max_time: float = 50e-9
    time_step: float = 0.5e-12

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "wall_response_time":
                ok = value >= 0
            else:
                ok = value > 0
            if not (ok and math.isfinite(value)):
                raise DomainError(f"{f.name} must be positive and finite, got {value!r}")
        if self.bias_current > self.switching_current:
            raise DomainError("bias_current must not exceed switching_current")
        if self.time_step >= self.max_time:
            raise DomainError("time_step must be smaller than max_time")

    def to_dict(self):
        return asdict(self)


@dataclass
class TransientResult:
    times: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    domain_lengths: np.ndarray
    domain_lifetime: float | None
    bias_current: float
    load_resistance: float

    @property
    def total_normal_length(self):
        return self.domain_lengths.sum(axis=0) if self.domain_lengths.size else np.zeros_like(self.times)

    def to_csv(self, path):
        total = self.total_normal_length
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_seconds", "current_amperes", "voltage_volts", "total_normal_length_meters"])
            for row in zip(self.times, self.current, self.voltage, total):
                w.writerow([repr(float(v)) for v in row])


def _lifetime(births, deaths):
    """First time after the first birth at which no domain is alive."""
    if len(births) == 0:
        return None
    intervals = sorted(zip(births, deaths))
    end = intervals[0][1]
    if math.isnan(end):
        return None
    for b, d in intervals[1:]:
        if b > end:
            break
        if math.isnan(d):
            return None
        end = max(end, d)
    return end - intervals[0][0]


def _integrate(params, births, dt):
    n_steps = int(round(params.max_time / dt))
    current, lengths, deaths = kernels.rk4_transient(
        params.kinetic_inductance,
        params.load_resistance,
        params.bias_current,
        params.switching_current,
        params.sheet_resistance / params.wire_width,
        params.wall_velocity_scale,
        params.stekly,
        params.wall_response_time,
        params.seed_domain_length,
        dt,
        n_steps,
        births,
    )
    times = np.arange(n_steps + 1) * dt
    voltage = (params.bias_current - current) * params.load_resistance
    return TransientResult(
        times, current, voltage, lengths, _lifetime(births, deaths),
        params.bias_current, params.load_resistance,
    )


def simulate_transient(params: ElectrothermalParams, absorption_times=(), check_convergence=True):
    """Integrate the nanowire transient for photons absorbed at ``absorption_times``.

    With ``check_convergence`` the run is repeated at half the time step and
    an :class:`AccuracyError` is raised if the 10-90% rise time or the domain
    lifetime moves by 1% or more.
    """
    births = np.asarray(absorption_times, dtype=float).ravel()
    if births.size:
        if np.any(births < 0) or np.any(np.diff(births) < 0):
            raise DomainError("absorption_times must be sorted and non-negative")
        if births[-1] > params.max_time:
            raise DomainError("absorption after max_time")
    result = _integrate(params, births, params.time_step)
    if check_convergence and births.size:
        fine = _integrate(params, births, params.time_step / 2)
        _check_converged(result, fine)
    return result


def _check_converged(coarse, fine, tol=0.01):
    pairs = []
    if coarse.domain_lifetime is not None and fine.domain_lifetime is not None:
        pairs.append(("domain lifetime", coarse.domain_lifetime, fine.domain_lifetime))
    try:
        pairs.append(("rise time", extract_rise_time(coarse), extract_rise_time(fine)))
    except NoPulseError:
        pass
    for name, a, b in pairs:
        if abs(a - b) > tol * abs(b):
            raise AccuracyError(f"{name} changes from {a:.6g} to {b:.6g} under step halving")


def _first_crossing(times, values, level):
    above = np.nonzero(values >= level)[0]
    if above.size == 0:
        return None
    i = above[0]
    if i == 0:
        return float(times[0])
    v0, v1 = values[i - 1], values[i]
    return float(times[i - 1] + (level - v0) / (v1 - v0) * (times[i] - times[i - 1]))


def extract_rise_time(result, low_fraction=0.1, high_fraction=0.9, voltage=None):
    """10-90% (by default) rise time of a pulse, linearly interpolated.

    ``result`` is a :class:`TransientResult`, or a time array when
    ``voltage`` is given separately.
    """
    if voltage is None:
        times, v = result.times, result.voltage
    else:
        times, v = np.asarray(result, dtype=float), np.asarray(voltage, dtype=float)
    peak = float(np.max(v)) if v.size else 0.0
    if not peak > 0:
        raise NoPulseError("waveform has no positive pulse")
    stop = int(np.argmax(v)) + 1
    t_lo = _first_crossing(times[:stop], v[:stop], low_fraction * peak)
    t_hi = _first_crossing(times[:stop], v[:stop], high_fraction * peak)
    if t_lo is None or t_hi is None:
        raise NoPulseError("pulse never reaches the upper fraction of its peak")
    return t_hi - t_lo


def rise_times(params: ElectrothermalParams, n_max: int) -> np.ndarray:
    """Rise time for n = 1..n_max photons absorbed simultaneously at t = 0."""
    return np.array([
        extract_rise_time(simulate_transient(params, np.zeros(n)))
        for n in range(1, n_max + 1)
    ])


def power_law_slope(ns, values):
    """Least-squares slope of log(values) against log(ns)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def fit_rise_exponent(params: ElectrothermalParams, n_max: int) -> float:
    if n_max < 3:
        raise DomainError("n_max must be >= 3")
    return power_law_slope(np.arange(1, n_max + 1), rise_times(params, n_max))


def delayed_current_fraction(params: ElectrothermalParams, delay: float) -> float:
    """Wire current at ``delay`` after one absorption, relative to the bias.

    This is the current left to register a second photon arriving late.
    """
    if delay < 0:
        raise DomainError("delay must be >= 0")
    if delay > params.max_time:
        raise DomainError("delay beyond max_time")
    res = simulate_transient(params, [0.0])
    return float(np.interp(delay, res.times, res.current) / params.bias_current)
