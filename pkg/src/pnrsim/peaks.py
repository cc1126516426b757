"""Arrival-time histograms and multi-Gaussian peak fitting.

The fit model integrates each Gaussian over its bin (CDF differences), so
narrow peaks spanning only a few bins are not biased.  Parameters are
refined jointly by a Levenberg-Marquardt loop on Poisson-weighted
residuals; the weights are refreshed from the model a few times, which
approximates the Poisson maximum-likelihood fit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d, gaussian_filter1d
from scipy.signal import find_peaks
from scipy.special import ndtr

from .errors import DomainError, EmptyHistogramError, FitError, NoPeaksError

SQRT2PI = math.sqrt(2.0 * math.pi)
# widest allowed component relative to the largest-area one
WIDTH_CAP = 1.25
# refuse histograms with more bins than this (bin width far too small)
MAX_BINS = 50_000_000


@dataclass(frozen=True)
class ArrivalHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total_slots: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or counts.ndim != 1 or counts.size != edges.size - 1:
            raise DomainError("need len(counts) == len(bin_edges) - 1")
        if np.any(counts < 0):
            raise DomainError("counts must be non-negative")
        if counts.sum() > self.total_slots:
            raise DomainError("histogram holds more events than slots")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def n_events(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class GaussianPeak:
    """One fitted component; ``amplitude`` is in counts per bin at the mode."""

    amplitude: float
    mean: float
    sigma: float
    area: float

    def __post_init__(self):
        if not (self.amplitude > 0 and self.sigma > 0):
            raise DomainError("amplitude and sigma must be > 0")

    @classmethod
    def from_area(cls, area, mean, sigma, bin_width):
        return cls(area * bin_width / (sigma * SQRT2PI), mean, sigma, area)

    def to_dict(self):
        return {"amplitude": self.amplitude, "mean_seconds": self.mean,
                "sigma_seconds": self.sigma, "area": self.area}


def freedman_diaconis_width(tags) -> float:
    t = np.asarray(tags, dtype=float)
    if t.size == 0:
        raise EmptyHistogramError("no tags")
    q75, q25 = np.percentile(t, [75, 25])
    width = 2.0 * (q75 - q25) * t.size ** (-1.0 / 3.0)
    if width > 0:
        return float(width)
    span = float(t.max() - t.min())
    return span / t.size if span > 0 else 1e-12


def build_histogram(tags, bin_width: float, total_slots: int, span=None) -> ArrivalHistogram:
    """Uniform bins covering the tags (or ``span``) plus three bins each side."""
    if not bin_width > 0:
        raise DomainError("bin_width must be > 0")
    t = np.asarray(tags, dtype=float)
    if t.size == 0:
        raise EmptyHistogramError("cannot histogram an empty tag list")
    lo, hi = (t.min(), t.max()) if span is None else span
    first = lo - 3.0 * bin_width
    n_inner = int(math.floor((hi - lo) / bin_width)) + 1
    if n_inner > MAX_BINS:
        raise DomainError(f"bin_width {bin_width!r} gives {n_inner} bins over the tag span")
    n_bins = n_inner + 6
    edges = first + bin_width * np.arange(n_bins + 1)
    # index from lo so the first inner bin is not lost to rounding of ``first``
    idx = 3 + np.floor((t - lo) / bin_width).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    counts = np.bincount(idx, minlength=n_bins)
    return ArrivalHistogram(edges, counts, total_slots)


# --------------------------------------------------------------------------
# mixture model in bin units: bin i spans [i, i + 1)


def _clamp(theta, n_bins, total, log_sigma_cap=None):
    """Keep parameters in a range where the model stays finite."""
    t = theta.copy()
    t[0::3] = np.clip(t[0::3], -10.0, math.log(10.0 * total + 10.0))
    t[1::3] = np.clip(t[1::3], 0.0, float(n_bins))
    t[2::3] = np.clip(t[2::3], math.log(0.05), math.log(n_bins + 1.0))
    if log_sigma_cap is not None:
        t[2::3] = np.minimum(t[2::3], log_sigma_cap)
    return t


def _sigma_cap(comps):
    """Width ceiling (log, bins) from the dominant component, or None."""
    if WIDTH_CAP is None or len(comps) < 2:
        return None
    big = max(comps, key=lambda c: c[0])
    return math.log(big[2] * WIDTH_CAP)


def _model(theta, edges):
    """Binned mixture and its Jacobian for theta = (log area, mean, log sigma) per peak."""
    k = theta.size // 3
    n = edges.size - 1
    m = np.zeros(n)
    J = np.empty((n, 3 * k))
    for j in range(k):
        area = math.exp(theta[3 * j])
        mu = theta[3 * j + 1]
        s = math.exp(theta[3 * j + 2])
        z = (edges - mu) / s
        cdf = ndtr(z)
        pdf = np.exp(-0.5 * z * z) / SQRT2PI
        mass = area * (cdf[1:] - cdf[:-1])
        m += mass
        J[:, 3 * j] = mass
        J[:, 3 * j + 1] = area * (pdf[:-1] - pdf[1:]) / s
        zp = z * pdf
        J[:, 3 * j + 2] = area * (zp[:-1] - zp[1:])
    return m, J


def _lm(theta, y, edges, weights, max_iter, tol=1e-10, cap=None):
    """Levenberg-Marquardt on weighted residuals.  Returns (theta, cost, iterations)."""
    sw = np.sqrt(weights)
    total = float(y.sum())
    theta = _clamp(theta, y.size, total, cap)
    m, J = _model(theta, edges)
    r = sw * (m - y)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        Jw = J * sw[:, None]
        H = Jw.T @ Jw
        g = Jw.T @ r
        d = np.maximum(np.diag(H), 1e-12 * max(np.diag(H).max(), 1e-300))
        while True:
            try:
                step = np.linalg.solve(H + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = _clamp(theta + step, y.size, total, cap)
                m2, J2 = _model(trial, edges)
                r2 = sw * (m2 - y)
                c2 = float(r2 @ r2)
                if np.isfinite(c2) and c2 <= cost:
                    break
            lam *= 10.0
            if lam > 1e16:
                return theta, cost, it
        gain = cost - c2
        moved = np.max(np.abs(trial - theta))
        theta, m, J, r, cost = trial, m2, J2, r2, c2
        lam = max(lam / 10.0, 1e-15)
        if gain <= tol * max(cost, 1.0) and moved < 1e-7:
            return theta, cost, it
        if gain <= tol * max(cost, 1.0) * 1e-3:
            return theta, cost, it
    raise FitError(f"no convergence after {max_iter} iterations", best=theta)


def _fit(theta, y, edges, max_iter, reweights=6, cap=None):
    """Iteratively reweighted LM with Poisson weights 1/max(model, 1)."""
    w = 1.0 / np.maximum(y, 1.0)
    iters = 0
    for round_ in range(reweights):
        try:
            new, cost, it = _lm(theta, y, edges, w, max_iter, cap=cap)
        except FitError as exc:
            if round_ == 0:
                raise FitError(str(exc), best=_unpack(exc.best)) from None
            # the weight refresh is a refinement; keep the last converged round
            iters += max_iter
            break
        iters += it
        done = np.max(np.abs(new - theta)) < 1e-6
        theta = new
        m, _ = _model(theta, edges)
        w = 1.0 / np.maximum(m, 1.0)
        if done:
            break
    return theta, iters


def _unpack(theta):
    return [(math.exp(theta[3 * j]), theta[3 * j + 1], math.exp(theta[3 * j + 2]))
            for j in range(theta.size // 3)]


def _seed_peaks(y, smooth, max_peaks):
    """Local maxima of the smoothed histogram standing out of its Poisson noise."""
    ys = gaussian_filter1d(y.astype(float), smooth, mode="constant")
    # variance of the smoothed value from Poisson counts: sum_j k_j^2 y_j
    radius = int(4 * smooth + 0.5)
    x = np.arange(-radius, radius + 1)
    kern = np.exp(-0.5 * (x / smooth) ** 2)
    kern /= kern.sum()
    var = convolve1d(np.maximum(y, 1.0), kern**2, mode="constant")
    idx, props = find_peaks(np.concatenate(([0.0], ys, [0.0])), prominence=0.0)
    idx = idx - 1
    prom = props["prominences"]
    score = prom / (3.0 * np.sqrt(var[idx]))
    keep = score >= 1.0
    idx, score = idx[keep], score[keep]
    order = np.argsort(-score)[:max_peaks]
    return np.sort(idx[order]), ys


def _initial_theta(idx, y, ys, smooth):
    theta = []
    for i in idx:
        half = ys[i] / 2.0
        lo = i
        while lo > 0 and ys[lo] > half:
            lo -= 1
        hi = i
        while hi < ys.size - 1 and ys[hi] > half:
            hi += 1
        fwhm_s = max(hi - lo, 1)
        sig = math.sqrt(max((fwhm_s / 2.3548) ** 2 - smooth**2, 0.25))
        # local width can be inflated by a neighbor; cap it
        sig = min(sig, 3.0 * smooth + 1.0)
        area = max(ys[i] * sig * SQRT2PI, 1.0)
        theta += [math.log(area), i + 0.5, math.log(sig)]
    return np.array(theta)


def _residual_candidate(y, m, smooth, threshold):
    """Bin index of the most significant positive residual bump, or None."""
    rs = gaussian_filter1d(y - m, smooth, mode="constant")
    radius = int(4 * smooth + 0.5)
    x = np.arange(-radius, radius + 1)
    kern = np.exp(-0.5 * (x / smooth) ** 2)
    kern /= kern.sum()
    var = convolve1d(np.maximum(m, 1.0), kern**2, mode="constant")
    score = rs / np.sqrt(var)
    idx, _ = find_peaks(np.concatenate(([0.0], score, [0.0])), height=threshold)
    if idx.size == 0:
        return None
    idx = idx - 1
    return int(idx[np.argmax(score[idx])]), float(rs[idx[np.argmax(score[idx])]])


def _split_seeds(y, others, edges, mu, sigma, width):
    """Two starting components for splitting a peak, placed at the two
    strongest maxima of what the other components leave unexplained."""
    local = y - (_model(_pack(others), edges)[0] if others else 0.0)
    local = gaussian_filter1d(local, max(0.5 * width, 0.5), mode="constant")
    lo = max(int(mu - 2.5 * sigma), 0)
    hi = min(int(mu + 2.5 * sigma) + 1, y.size)
    seg = local[lo:hi]
    idx, _ = find_peaks(np.concatenate(([-np.inf], seg, [-np.inf])))
    idx = idx - 1
    if idx.size >= 2:
        top = idx[np.argsort(-seg[idx])[:2]]
        centers = lo + top + 0.5
    else:
        centers = np.array([mu - sigma, mu + sigma])
    heights = np.maximum(np.interp(centers - 0.5, np.arange(y.size), local), 1.0)
    return [(h * width * SQRT2PI, c, width) for h, c in zip(heights, centers)]


def _estimate_smoothing(y):
    """Half the width (sigma, in bins) of the tallest peak, clamped to [1, 10]."""
    ys = gaussian_filter1d(y.astype(float), 1.0, mode="constant")
    i = int(np.argmax(ys))
    half = ys[i] / 2.0
    lo, hi = i, i
    while lo > 0 and ys[lo] > half:
        lo -= 1
    while hi < ys.size - 1 and ys[hi] > half:
        hi += 1
    sig = max((hi - lo) / 2.3548, 1.0)
    return float(min(max(0.35 * sig, 1.0), 10.0))


@dataclass
class PeakFit:
    peaks: list
    residual_rms: float
    iterations: int
    bin_width: float

    def __iter__(self):
        return iter(self.peaks)

    def __len__(self):
        return len(self.peaks)


def _deviance(y, m):
    """Poisson deviance of counts ``y`` under model ``m``."""
    m = np.maximum(m, 1e-300)
    pos = y > 0
    return float(2.0 * (np.sum(m - y) + np.sum(y[pos] * np.log(y[pos] / m[pos]))))


def _pack(comps):
    return np.array([v for a, mu, s in comps for v in (math.log(a), mu, math.log(s))])


def _prune(comps, n_bins, area_floor, wing_ratio):
    """Drop components that are too small, off the axis, or shape-mismatch wings; merge coincident ones."""
    comps = sorted((c for c in comps if c[0] >= area_floor and 0.0 <= c[1] <= n_bins), key=lambda c: c[1])
    merged = []
    for c in comps:
        if merged and abs(c[1] - merged[-1][1]) < max(c[2], merged[-1][2]):
            a0, m0, s0 = merged[-1]
            a = a0 + c[0]
            mu = (a0 * m0 + c[0] * c[1]) / a
            var = (a0 * (s0**2 + m0**2) + c[0] * (c[2] ** 2 + c[1] ** 2)) / a - mu**2
            merged[-1] = (a, mu, math.sqrt(max(var, 1e-6)))
        else:
            merged.append(c)
    # a tiny component hugging a huge one models the big peak's non-Gaussian tail
    out = []
    for i, c in enumerate(merged):
        wing = False
        for j in (i - 1, i + 1):
            if 0 <= j < len(merged):
                nb = merged[j]
                if c[0] * wing_ratio < nb[0] and abs(c[1] - nb[1]) < 4.0 * nb[2]:
                    wing = True
        if not wing:
            out.append(c)
    return out


def _fit_pruned(comps, y, edges, max_iter, area_floor, wing_ratio):
    """Fit, prune, and refit until the component set is stable."""
    iterations = 0
    for _ in range(len(comps) + 1):
        theta, it = _fit(_pack(comps), y, edges, max_iter, cap=_sigma_cap(comps))
        iterations += it
        fitted = _unpack(theta)
        kept = _prune(fitted, y.size, area_floor, wing_ratio)
        if len(kept) == len(fitted):
            return sorted(fitted, key=lambda c: c[1]), iterations
        if not kept:
            raise NoPeaksError("every fitted component fell below the area floor")
        comps = kept
    return sorted(comps, key=lambda c: c[1]), iterations


def detect_and_fit_peaks(histogram: ArrivalHistogram, max_peaks: int = 12, smoothing: float | None = None,
                         area_floor: float = 10.0, max_iter: int = 500, min_improvement: float = 25.0,
                         wing_ratio: float = 50.0) -> PeakFit:
    """Find and jointly fit the Gaussian peaks of an arrival histogram.

    Candidates are maxima of a Gaussian-smoothed histogram (``smoothing`` in
    bins, estimated from the tallest peak when omitted) whose prominence
    exceeds three standard deviations of the smoothed Poisson noise.  After
    each joint fit, components below ``area_floor`` counts are dropped,
    components closer than one sigma merged, and components smaller than
    1/``wing_ratio`` of a neighbor within four of its sigmas (tails of a
    not-quite-Gaussian peak) removed.

    The model then grows one component at a time, either at the most
    significant residual bump or by splitting an existing component in two,
    as long as the Poisson deviance drops by more than ``min_improvement``.
    Peaks come back sorted by ascending mean.
    """
    y = np.asarray(histogram.counts, dtype=float)
    if y.sum() <= 0:
        raise EmptyHistogramError("histogram is empty")
    if max_peaks < 1:
        raise DomainError("max_peaks must be >= 1")
    smooth = _estimate_smoothing(y) if smoothing is None else float(smoothing)
    idx, ys = _seed_peaks(y, smooth, max_peaks)
    if idx.size == 0:
        raise NoPeaksError("no peak exceeds the noise floor")
    edges = np.arange(y.size + 1, dtype=float)
    comps, iterations = _fit_pruned(_unpack(_initial_theta(idx, y, ys, smooth)), y, edges,
                                    max_iter, area_floor, wing_ratio)
    dev = _deviance(y, _model(_pack(comps), edges)[0])

    while len(comps) < max_peaks:
        trials = []
        m = _model(_pack(comps), edges)[0]
        cand = _residual_candidate(y, m, smooth, 3.0)
        if cand is not None:
            i, height = cand
            sig = float(np.median([c[2] for c in comps]))
            trials.append(comps + [(max(height * sig * SQRT2PI, area_floor), i + 0.5, sig)])
        typical = float(np.median([c[2] for c in comps]))
        for k, (a, mu, sg) in enumerate(comps):
            if a >= 2 * area_floor and sg > 1.0:
                rest = comps[:k] + comps[k + 1:]
                split = _split_seeds(y, rest, edges, mu, sg, min(0.6 * sg, typical))
                if split is not None:
                    trials.append(rest + split)
        best = None
        for trial in trials:
            try:
                fitted, it = _fit_pruned(trial, y, edges, max_iter, area_floor, wing_ratio)
            except FitError:
                continue
            iterations += it
            if len(fitted) <= len(comps):
                continue
            d = _deviance(y, _model(_pack(fitted), edges)[0])
            if dev - d > min_improvement and (best is None or d < best[0]):
                best = (d, fitted)
        if best is None:
            break
        dev, comps = best

    theta = _pack(comps)
    m, _ = _model(theta, edges)
    rms = float(np.sqrt(np.mean((y - m) ** 2)))
    bw = histogram.bin_width
    e0 = histogram.bin_edges[0]
    peaks = [GaussianPeak.from_area(a, e0 + mu * bw, s * bw, bw) for a, mu, s in comps]
    return PeakFit(peaks, rms, iterations, bw)


def mixture_counts(peaks, bin_edges):
    """Expected counts per bin of a fitted mixture."""
    edges = np.asarray(bin_edges, dtype=float)
    out = np.zeros(edges.size - 1)
    for p in peaks:
        c = ndtr((edges - p.mean) / p.sigma)
        out += p.area * np.diff(c)
    return out
