"""Closed-form counting statistics for a photon-number-resolving nanowire.

The detector is treated as ``N`` independent elements sharing an efficiency
``eta``.  Timing of a pulse initiated by ``n`` photons is described by a
:class:`TimingModel`: rise time ``t_R(n) = t_R(1) * n**p``, jitter
``sigma_n = ratio * t_R(n)`` and trigger-crossing mean
``mu_n = offset + trigger_fraction * t_R(n)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import AccuracyError, DomainError

# relative error budget of the float alternating sum before the
# positive-series path takes over
_CANCELLATION_TOL = 1e-11


@dataclass(frozen=True)
class DetectorArrayModel:
    elements: int
    efficiency: float

    def __post_init__(self):
        if int(self.elements) != self.elements or self.elements < 1:
            raise DomainError(f"elements must be a positive integer, got {self.elements!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError(f"efficiency must lie in [0, 1], got {self.efficiency!r}")


@dataclass(frozen=True)
class TimingModel:
    """Per-photon-number timing of the detector pulse leading edge.

    ``jitter_ratio`` is sigma/t_R.  In the analytic theory it is the total
    timing jitter; the waveform synthesizer uses it as the intrinsic part and
    adds readout noise on top.
    """

    base_rise_time: float = 0.6e-9
    exponent: float = -0.3
    jitter_ratio: float = 0.0045
    trigger_fraction: float = 0.7
    time_offset: float = 1.0e-9

    def __post_init__(self):
        if not self.base_rise_time > 0:
            raise DomainError("base_rise_time must be > 0")
        if not self.jitter_ratio > 0:
            raise DomainError("jitter_ratio must be > 0")
        if not 0.0 < self.trigger_fraction < 1.0:
            raise DomainError("trigger_fraction must lie in (0, 1)")

    def rise_time(self, n):
        return rise_time(self, n)

    def jitter(self, n):
        return jitter(self, n)

    def crossing_mean(self, n):
        return crossing_mean(self, n)


@dataclass(frozen=True)
class PhotonNumberDistribution:
    """Probabilities over k = 0..k_max.

    ``tail_mass`` is the probability of k > k_max that was cut off (zero for
    measured distributions); ``total`` is the number of trials behind a
    measured distribution, when known.
    """

    probabilities: np.ndarray
    mean: float
    tail_mass: float = 0.0
    total: int | None = None
    derived_mean: bool = field(default=True, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("probabilities must be a non-empty 1-D array")
        if np.any(p < 0) or np.any(p > 1):
            raise DomainError("probabilities must lie in [0, 1]")
        if abs(p.sum() + self.tail_mass - 1.0) > 1e-9:
            raise DomainError(f"probabilities sum to {p.sum() + self.tail_mass!r}, not 1")
        if self.mean < 0:
            raise DomainError("mean must be >= 0")
        if self.derived_mean and abs(self.mean - float(np.arange(p.size) @ p)) > 1e-9:
            raise DomainError("declared mean disagrees with sum(k * p_k)")

    @classmethod
    def from_probabilities(cls, probabilities, total=None):
        p = np.asarray(probabilities, dtype=float)
        return cls(p, float(np.arange(p.size) @ p), 0.0, total)

    @property
    def k_max(self):
        return self.probabilities.size - 1

    def __len__(self):
        return self.probabilities.size


# --------------------------------------------------------------------------
# multiplexed-array click statistics


def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def click_probability(model: DetectorArrayModel, n: int, q: int) -> float:
    """Probability that exactly ``n`` elements fire when ``q`` photons arrive.

    Evaluates the inclusion-exclusion sum over ``j`` in log space with sign
    tracking. When cancellation eats more than ~1e-11 of relative accuracy the
    probability is re-evaluated from an equivalent series of positive terms.
    """
    N, eta = int(model.elements), float(model.efficiency)
    if q < 0 or n < 0:
        raise DomainError("n and q must be non-negative")
    if n > q or n > N:
        raise DomainError(f"n={n} exceeds min(q={q}, N={N})")
    if q == 0:
        return 1.0
    if eta == 0.0:
        return 1.0 if n == 0 else 0.0

    j = np.arange(n + 1)
    base = (1.0 - eta) + (n - j) * (eta / N)
    live = base > 0
    j, base = j[live], base[live]
    if j.size == 0:
        return 0.0
    log_terms = _log_binom(n, j) + q * np.log(base)
    signs = np.where(j % 2 == 0, 1.0, -1.0)
    top = log_terms.max()
    scaled = np.exp(log_terms - top)
    pos = math.fsum(scaled[signs > 0])
    neg = math.fsum(scaled[signs < 0])
    s = pos - neg
    log_pref = float(_log_binom(N, n))

    magnitude = pos + neg
    if s > 0 and magnitude / s * 4 * np.finfo(float).eps * (n + 1) < _CANCELLATION_TOL:
        value = math.exp(log_pref + top) * s
    else:
        value = _click_probability_series(N, eta, n, q)
    if not math.isfinite(value) or value < -1e-12 or value > 1 + 1e-12:
        raise AccuracyError(f"click_probability({N}, {eta}, {n}, {q}) evaluated to {value!r}")
    return min(max(value, 0.0), 1.0)


@functools.lru_cache(maxsize=128)
def _log_stirling2(q, n):
    """log S(m, n) for m = n..q (Stirling numbers of the second kind, exact ints)."""
    row = [1] + [0] * n  # S(0, k)
    out = []
    for m in range(1, q + 1):
        for k in range(min(m, n), 0, -1):
            row[k] = k * row[k] + row[k - 1]
        row[0] = 0
        if m >= n:
            out.append(math.log(row[n]))
    return out


def _click_probability_series(N, eta, n, q):
    """Same probability as a sum of positive terms.

    The alternating sum is the n-th forward difference of
    ((1 - eta) + x eta / N)**q; expanding in powers of x and using
    Delta^n x^m = n! S(m, n) leaves no cancellation at all.
    """
    if n == 0:
        return (1.0 - eta) ** q
    log_s = _log_stirling2(q, n)
    ms = range(n, q + 1) if eta < 1.0 else range(q, q + 1)
    terms = []
    for m in ms:
        t = _log_binom(q, m) + m * math.log(eta / N) + math.lgamma(n + 1) + log_s[m - n]
        if m < q:
            t += (q - m) * math.log1p(-eta)
        terms.append(float(t))
    top = max(terms)
    return math.exp(float(_log_binom(N, n)) + top + math.log(math.fsum(math.exp(t - top) for t in terms)))


def collision_probability(N: int, q: int) -> float:
    """Probability that at least two of ``q`` photons share an element."""
    if N < 1 or q < 0:
        raise DomainError("need N >= 1 and q >= 0")
    if q <= 1:
        return 0.0
    if q > N:
        return 1.0
    i = np.arange(1, q)
    return float(-math.expm1(math.fsum(np.log1p(-i / N))))


# --------------------------------------------------------------------------
# Gaussian discrimination


def _log_pdf(x, mu, sigma):
    return -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma)


def _crossings(mu1, s1, mu2, s2):
    """All points where the two normal densities are equal, ascending."""
    if s1 == s2:
        return [] if mu1 == mu2 else [0.5 * (mu1 + mu2)]
    # work in units of the first distribution: N(0, 1) against N(m, r)
    m = (mu2 - mu1) / s1
    r = s2 / s1
    a = 1.0 - 1.0 / r**2
    b = 2.0 * m / r**2
    c = -(m**2) / r**2 - 2.0 * math.log(r)
    disc = b * b - 4 * a * c
    if disc < 0:
        # unequal widths always cross twice; only rounding lands here
        disc = 0.0
    qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [0.0] if qq == 0 else [qq / a, c / qq]
    return sorted(_polish(mu1 + s1 * u, mu1, s1, mu2, s2) for u in roots)


def _polish(x, mu1, s1, mu2, s2):
    # Newton on the log-density difference
    for _ in range(3):
        f = _log_pdf(x, mu1, s1) - _log_pdf(x, mu2, s2)
        df = -(x - mu1) / s1**2 + (x - mu2) / s2**2
        if df == 0 or not math.isfinite(f):
            break
        step = f / df
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def gaussian_intersection(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """Point between ``mu1 < mu2`` where the two normal densities are equal."""
    if not mu1 < mu2:
        raise DomainError("gaussian_intersection needs mu1 < mu2")
    if not (sigma1 > 0 and sigma2 > 0):
        raise DomainError("sigmas must be positive")
    inside = [r for r in _crossings(mu1, sigma1, mu2, sigma2) if mu1 < r < mu2]
    if not inside:
        raise DomainError(
            "densities do not cross between the means "
            f"(mu1={mu1}, sigma1={sigma1}, mu2={mu2}, sigma2={sigma2})"
        )
    return inside[0]


def _normal_mass(a, b, mu, sigma):
    za = -math.inf if a == -math.inf else (a - mu) / sigma
    zb = math.inf if b == math.inf else (b - mu) / sigma
    if za >= 0:
        return float(ndtr(-za) - ndtr(-zb))
    if zb <= 0:
        return float(ndtr(zb) - ndtr(za))
    return float(1.0 - ndtr(za) - ndtr(-zb))


def discrimination_overlap(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """Overlapping coefficient of two normal densities, integral of min(pdf1, pdf2).

    0 means perfectly distinguishable, 1 means identical.  Accepts the means
    in either order and handles both density crossings when the widths differ.
    """
    if not (sigma1 > 0 and sigma2 > 0):
        raise DomainError("sigmas must be positive")
    if mu1 == mu2 and sigma1 == sigma2:
        return 1.0
    cuts = [-math.inf, *_crossings(mu1, sigma1, mu2, sigma2), math.inf]
    scale = max(sigma1, sigma2)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a == -math.inf:
            probe = b - scale
        elif b == math.inf:
            probe = a + scale
        else:
            probe = 0.5 * (a + b)
        if _log_pdf(probe, mu1, sigma1) <= _log_pdf(probe, mu2, sigma2):
            total += _normal_mass(a, b, mu1, sigma1)
        else:
            total += _normal_mass(a, b, mu2, sigma2)
    return min(max(total, 0.0), 1.0)


def discrimination_probability(mu_fast, sigma_fast, mu_slow, sigma_slow):
    """Probability of telling an (n+1)-photon pulse from an n-photon pulse.

    The (n+1)-photon pulse rises faster, so its crossing mean ``mu_fast`` is
    the earlier one.  Both are split at their density intersection ``c``::

        1/2 [erf((c - mu_fast)/(sigma_fast sqrt2)) - erf((c - mu_slow)/(sigma_slow sqrt2))]

    which equals ``1 - discrimination_overlap`` for equal widths.
    """
    c = gaussian_intersection(mu_fast, sigma_fast, mu_slow, sigma_slow)
    a = (c - mu_fast) / (sigma_fast * math.sqrt(2))
    b = (c - mu_slow) / (sigma_slow * math.sqrt(2))
    return 0.5 * (math.erf(a) - math.erf(b))


# --------------------------------------------------------------------------
# timing model


def rise_time(model: TimingModel, n) -> float:
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("rise time is defined for n >= 1 (n = 0 produces no pulse)")
    out = model.base_rise_time * np.power(n.astype(float), model.exponent)
    return float(out) if out.ndim == 0 else out


def jitter(model: TimingModel, n) -> float:
    return model.jitter_ratio * rise_time(model, n)


def crossing_mean(model: TimingModel, n) -> float:
    return model.time_offset + model.trigger_fraction * rise_time(model, n)


def resolution_curve(model: TimingModel, n_max: int) -> np.ndarray:
    """Rows of ``(n, overlap between the n- and (n+1)-photon crossing laws)``."""
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    rows = np.empty((n_max, 2))
    for n in range(1, n_max + 1):
        ovl = discrimination_overlap(
            crossing_mean(model, n + 1), jitter(model, n + 1),
            crossing_mean(model, n), jitter(model, n),
        )
        rows[n - 1] = n, ovl
    return rows


# --------------------------------------------------------------------------
# Poisson source


def poisson_pmf(lam: float, k) -> float:
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise DomainError("k must be >= 0")
    kf = k_arr.astype(float)
    if lam == 0:
        out = np.where(k_arr == 0, 1.0, 0.0)
    else:
        out = np.exp(kf * math.log(lam) - lam - gammaln(kf + 1))
    return float(out) if out.ndim == 0 else out


def poisson_distribution(lam: float, k_max: int) -> PhotonNumberDistribution:
    """Poisson law truncated at ``k_max``; the cut-off mass goes to ``tail_mass``."""
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    p = poisson_pmf(lam, np.arange(k_max + 1))
    p = np.atleast_1d(p)
    tail = max(0.0, 1.0 - math.fsum(p))
    return PhotonNumberDistribution(p, float(lam), tail, derived_mean=False)
