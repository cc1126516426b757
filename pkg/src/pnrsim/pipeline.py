"""Photon-number statistics from arrival-time histograms.

Steps: histogram the crossing times, fit Gaussian peaks, label the peaks with
photon numbers (latest peak is one photon, numbers grow toward earlier
times), turn peak areas into per-pulse probabilities using the slot count,
and compare with the Poisson law of the same mean.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .counting import PhotonNumberDistribution, TimingModel, discrimination_overlap, poisson_distribution
from .errors import DegenerateComparisonError, DomainError, FitError, InconsistencyError, NoPeaksError
from .peaks import (ArrivalHistogram, PeakFit, build_histogram, detect_and_fit_peaks,
                    freedman_diaconis_width)

SCHEMA_VERSION = "1.0"


class AssignmentWarning(UserWarning):
    """Peak spacings do not follow the expected rise-time scaling."""


def default_bin_width(tags, timing_hint: TimingModel | None = None) -> float:
    """A fifth of the expected one-photon jitter, or Freedman-Diaconis without a hint."""
    if timing_hint is not None:
        return timing_hint.jitter(1) / 5.0
    return freedman_diaconis_width(tags)


# --------------------------------------------------------------------------
# photon-number assignment


def assign_photon_numbers(peaks, timing_hint: TimingModel | None = None):
    """Label peaks 1, 2, ... from the latest mean toward earlier ones.

    Returns a list of ``(n, peak)`` ordered by n.  With ``timing_hint`` an
    :class:`AssignmentWarning` is issued when the spacings do not follow the
    hint's rise-time law (see :func:`spacing_consistent`).
    """
    peaks = list(peaks)
    if not peaks:
        raise DomainError("need at least one peak")
    ordered = sorted(peaks, key=lambda p: (-p.mean, p.sigma, p.area))
    assigned = [(n, p) for n, p in enumerate(ordered, start=1)]
    if timing_hint is not None and not spacing_consistent(assigned, timing_hint):
        warnings.warn("peak spacings do not follow the expected rise-time scaling", AssignmentWarning,
                      stacklevel=2)
    return assigned


def spacing_consistent(assigned, timing_hint: TimingModel, tolerance=0.5) -> bool:
    """Whether gaps between neighboring peaks shrink like t_R(n) - t_R(n+1).

    The overall scale is fitted, so only the pattern is checked: every gap
    must lie within ``tolerance`` (relative) of the scaled expectation.
    """
    if len(assigned) < 3:
        return True
    ns = np.array([n for n, _ in assigned])
    mus = np.array([p.mean for _, p in assigned])
    gaps = mus[:-1] - mus[1:]
    if np.any(gaps <= 0):
        return False
    expected = timing_hint.rise_time(ns[:-1]) - timing_hint.rise_time(ns[1:])
    scale = float(gaps @ expected / (expected @ expected))
    return bool(np.all(np.abs(gaps - scale * expected) <= tolerance * scale * expected))


# --------------------------------------------------------------------------
# statistics


def reconstruct_statistics(assigned, total_slots: int):
    """Measured distribution and mean photon number per slot.

    ``p_k = area_k / total_slots`` for the fitted k and ``p_0`` is what is
    left over; ``lambda_hat`` is the photon total over the slot count.
    """
    if total_slots <= 0:
        raise DomainError("total_slots must be > 0")
    assigned = sorted(assigned, key=lambda a: a[0])
    ns = [n for n, _ in assigned]
    if ns and ns != list(range(1, len(ns) + 1)):
        raise DomainError("photon numbers must be consecutive from 1")
    areas = np.array([p.area for _, p in assigned], dtype=float)
    if areas.sum() > total_slots:
        raise InconsistencyError(f"peak areas ({areas.sum():.1f}) exceed the slot count ({total_slots})")
    p = np.empty(len(assigned) + 1)
    p[1:] = areas / total_slots
    p[0] = min(max(1.0 - math.fsum(p[1:]), 0.0), 1.0)
    lam = float(math.fsum(np.arange(1, p.size) * areas) / total_slots)
    measured = PhotonNumberDistribution(p, lam, total=int(total_slots), derived_mean=False)
    return measured, lam


@dataclass
class PoissonComparison:
    predicted: PhotonNumberDistribution
    total_variation: float
    chi_square: float | None
    chi_square_dof: int | None
    per_k: list

    def table_rows(self):
        return [(r["k"], r["measured"], r["predicted"], r["signed_error"]) for r in self.per_k]


def compare_poisson(measured: PhotonNumberDistribution, lambda_hat: float, total: int | None = None):
    """Distance between a measured distribution and Poisson(``lambda_hat``).

    The prediction is truncated at the measured ``k_max``; its tail beyond
    that enters the total variation as unmatched mass.  Pearson chi-square
    uses the cells whose predicted count is at least 5 and needs a trial
    count (``total`` or ``measured.total``).
    """
    pm = np.asarray(measured.probabilities, dtype=float)
    if abs(pm.sum() + measured.tail_mass - 1.0) > 1e-9:
        raise DomainError("measured distribution is not normalized")
    if lambda_hat == 0 and pm[1:].sum() > 0:
        raise DegenerateComparisonError("lambda_hat is 0 but the measurement has photons")
    pred = poisson_distribution(lambda_hat, measured.k_max)
    pp = pred.probabilities
    diff = pm - pp
    tvd = 0.5 * (float(np.abs(diff).sum()) + pred.tail_mass + measured.tail_mass)
    n = total if total is not None else measured.total
    chi2 = dof = None
    if n:
        expected = n * pp
        cells = expected >= 5.0
        if cells.any():
            chi2 = float(np.sum((n * pm[cells] - expected[cells]) ** 2 / expected[cells]))
            dof = max(int(cells.sum()) - 2, 1)
    per_k = [{"k": k, "measured": float(pm[k]), "predicted": float(pp[k]), "signed_error": float(diff[k])}
             for k in range(pm.size)]
    return PoissonComparison(pred, tvd, chi2, dof, per_k)


# --------------------------------------------------------------------------
# report


@dataclass
class ReconstructionReport:
    peaks: list
    measured: PhotonNumberDistribution
    lambda_hat: float
    predicted: PhotonNumberDistribution
    divergence: dict
    residual_rms: float
    total_slots: int
    bin_width: float
    level: float | None = None
    events_tagged: int | None = None
    events_dropped: int | None = None
    assignment_consistent: bool | None = None
    per_k: list = field(default_factory=list)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "level_volts": self.level,
            "total_slots": self.total_slots,
            "events_tagged": self.events_tagged,
            "events_dropped": self.events_dropped,
            "bin_width_seconds": self.bin_width,
            "residual_rms_counts": self.residual_rms,
            "assignment_consistent": self.assignment_consistent,
            "peaks": [{"photon_number": n, **p.to_dict()} for n, p in self.peaks],
            "lambda_hat": self.lambda_hat,
            "measured": [float(v) for v in self.measured.probabilities],
            "predicted": [float(v) for v in self.predicted.probabilities],
            "predicted_tail_mass": self.predicted.tail_mass,
            "divergence": dict(self.divergence),
            "per_k": list(self.per_k),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        out = io.StringIO()
        lvl = "n/a" if self.level is None else f"{self.level * 1e3:.0f} mV"
        out.write(f"trigger level   {lvl}\n")
        out.write(f"slots           {self.total_slots}\n")
        out.write(f"lambda_hat      {self.lambda_hat:.6f}\n")
        out.write(f"total variation {self.divergence['total_variation']:.6f}\n")
        chi2 = self.divergence.get("chi_square")
        if chi2 is not None:
            out.write(f"chi-square      {chi2:.3f} (dof {self.divergence['chi_square_dof']})\n")
        out.write("\n  n     mean [ps]  sigma [ps]        area\n")
        for n, p in self.peaks:
            out.write(f"{n:3d}  {p.mean * 1e12:12.3f}  {p.sigma * 1e12:10.3f}  {p.area:10.1f}\n")
        out.write("\n  k      measured     predicted         error\n")
        for row in self.per_k:
            out.write(f"{row['k']:3d}  {row['measured']:12.6f}  {row['predicted']:12.6f}  {row['signed_error']:+12.6f}\n")
        return out.getvalue()

    def per_k_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["k", "measured", "predicted", "abs_error", "signed_error"])
        for row in self.per_k:
            w.writerow([row["k"], repr(row["measured"]), repr(row["predicted"]),
                        repr(abs(row["signed_error"])), repr(row["signed_error"])])
        return out.getvalue()


def report_schema():
    return json.loads(resources.files("pnrsim").joinpath("schemas/report.schema.json").read_text())


def validate_report(data):
    import jsonschema
    jsonschema.validate(data, report_schema())


def reconstruct(tags, total_slots: int, bin_width: float | None = None, max_peaks: int = 12,
                timing_hint: TimingModel | None = None, level: float | None = None,
                events_dropped: int | None = None) -> ReconstructionReport:
    """Full chain from crossing times to a :class:`ReconstructionReport`."""
    tags = np.asarray(tags, dtype=float)
    if bin_width is None:
        bin_width = default_bin_width(tags, timing_hint)
    hist = build_histogram(tags, bin_width, total_slots)
    fit = detect_and_fit_peaks(hist, max_peaks=max_peaks)
    return report_from_fit(fit, hist, timing_hint, level, events_dropped)


def report_from_fit(fit: PeakFit, hist: ArrivalHistogram, timing_hint=None, level=None, events_dropped=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssignmentWarning)
        assigned = assign_photon_numbers(fit.peaks)
    consistent = None if timing_hint is None else spacing_consistent(assigned, timing_hint)
    measured, lam = reconstruct_statistics(assigned, hist.total_slots)
    cmp = compare_poisson(measured, lam)
    divergence = {"total_variation": cmp.total_variation, "chi_square": cmp.chi_square,
                  "chi_square_dof": cmp.chi_square_dof}
    return ReconstructionReport(assigned, measured, lam, cmp.predicted, divergence, fit.residual_rms,
                                hist.total_slots, hist.bin_width, level, hist.n_events, events_dropped,
                                consistent, cmp.per_k)


# --------------------------------------------------------------------------
# per-event labels and level selection


def classify_tags(times, assigned, use_areas=True):
    """Most probable photon number for each crossing time.

    With ``use_areas`` the fitted areas act as priors; otherwise every peak
    counts equally.
    """
    t = np.asarray(times, dtype=float)[:, None]
    ns = np.array([n for n, _ in assigned])
    mu = np.array([p.mean for _, p in assigned])[None, :]
    sg = np.array([p.sigma for _, p in assigned])[None, :]
    logw = np.log([p.area for _, p in assigned])[None, :] if use_areas else 0.0
    score = logw - np.log(sg) - 0.5 * ((t - mu) / sg) ** 2
    return ns[np.argmax(score, axis=1)]


def mean_adjacent_overlap(assigned) -> float:
    """Average overlapping coefficient of neighboring fitted peaks (0 for one peak)."""
    ps = [p for _, p in sorted(assigned, key=lambda a: a[0])]
    if len(ps) < 2:
        return 0.0
    return float(np.mean([discrimination_overlap(a.mean, a.sigma, b.mean, b.sigma)
                          for a, b in zip(ps[:-1], ps[1:])]))


@dataclass
class LevelScore:
    level: float
    n_peaks: int
    mean_overlap: float
    fit: PeakFit | None = field(default=None, repr=False)
    histogram: ArrivalHistogram | None = field(default=None, repr=False)


def _score_one(level, times, total_slots, bin_width, max_peaks):
    if times.size == 0:
        return LevelScore(level, 0, 1.0)
    hist = build_histogram(times, bin_width, total_slots)
    try:
        fit = detect_and_fit_peaks(hist, max_peaks=max_peaks)
    except (NoPeaksError, FitError):
        return LevelScore(level, 0, 1.0, None, hist)
    assigned = assign_photon_numbers(fit.peaks)
    return LevelScore(level, len(fit.peaks), mean_adjacent_overlap(assigned), fit, hist)


def score_levels(tag_results, total_slots: int, bin_width: float, max_peaks: int = 12,
                 workers: int = 1):
    """Fit every level's histogram and count its resolvable peaks.

    Levels are independent, so with ``workers > 1`` they are fitted in
    separate processes; results come back in input order either way.
    """
    jobs = [(tr.level, np.asarray(tr.times, dtype=float), total_slots, bin_width, max_peaks)
            for tr in tag_results]
    if workers <= 1 or len(jobs) < 2:
        return [_score_one(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_score_one, *zip(*jobs)))


def select_optimal_level(scores) -> LevelScore:
    """Most resolved peaks; ties go to the smaller mean neighbor overlap, then the lower level."""
    if not scores:
        raise DomainError("no levels to choose from")
    return min(scores, key=lambda s: (-s.n_peaks, s.mean_overlap, s.level))
