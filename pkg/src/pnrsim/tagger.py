"""Leading-edge time tagging and trigger-level sweeps."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError
from .peaks import ArrivalHistogram, build_histogram, freedman_diaconis_width

DEFAULT_LEVELS = tuple(round(0.1 * i, 1) for i in range(1, 9))


@dataclass(frozen=True)
class TagConfig:
    """Rising-edge, linearly interpolated trigger levels in volts."""

    trigger_levels: tuple = DEFAULT_LEVELS

    def __post_init__(self):
        levels = np.asarray(self.trigger_levels, dtype=float)
        if levels.ndim != 1 or levels.size == 0:
            raise DomainError("trigger_levels must be a non-empty 1-D sequence")
        if np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
            raise DomainError("trigger_levels must be positive and strictly increasing")
        object.__setattr__(self, "trigger_levels", tuple(float(v) for v in levels))


def crossing_time(waveform, level: float, sample_rate: float, t0: float = 0.0) -> float | None:
    """First rising crossing of ``level``, in seconds after the laser reference.

    ``t0`` is the time of sample 0.  Returns ``None`` when the waveform never
    crosses (a no-event).
    """
    if not level > 0:
        raise DomainError("level must be > 0")
    w = np.asarray(waveform, dtype=np.float64).reshape(1, -1)
    idx = kernels.first_crossings(w, np.array([level], dtype=np.float64))[0, 0]
    return None if np.isnan(idx) else t0 + float(idx) / sample_rate


@dataclass
class TagResult:
    """Crossing times (seconds) of the events that crossed one level."""

    level: float
    slot_index: np.ndarray
    times: np.ndarray
    dropped: int
    true_counts: np.ndarray | None = None

    @property
    def n_tagged(self):
        return self.slot_index.size

    @property
    def n_events(self):
        return self.n_tagged + self.dropped


def _blocks(events):
    if hasattr(events, "blocks"):
        yield from events.blocks()
        return
    from .waveform import EventBlock, MAIN, SUPPRESSED
    events = list(events)
    if not events:
        return
    yield EventBlock(
        np.array([e.slot_index for e in events], dtype=np.int64),
        np.array([MAIN if e.slot_kind == "main" else SUPPRESSED for e in events], dtype=np.int8),
        np.array([e.true_photon_count for e in events], dtype=np.int16),
        np.stack([np.asarray(e.waveform, dtype=np.float64) for e in events]),
        events[0].sample_rate,
        np.array([e.t0 for e in events], dtype=np.float64),
    )


def tag_levels(events, levels) -> list[TagResult]:
    """Tag every event at every level in one pass over the waveforms."""
    levels = np.asarray(levels, dtype=np.float64)
    if np.any(levels <= 0):
        raise DomainError("levels must be > 0")
    parts = [[] for _ in levels]
    for blk in _blocks(events):
        if blk.waveforms is None:
            raise DomainError("events carry no waveforms")
        idx = kernels.first_crossings(np.asarray(blk.waveforms, dtype=np.float64), levels)
        for j in range(levels.size):
            parts[j].append((blk.slot_index, blk.t0 + idx[:, j] / blk.sample_rate, blk.counts))
    out = []
    for j, lv in enumerate(levels):
        if parts[j]:
            slots = np.concatenate([p[0] for p in parts[j]])
            times = np.concatenate([p[1] for p in parts[j]])
            counts = np.concatenate([p[2] for p in parts[j]]).astype(np.int64)
        else:
            slots, times, counts = np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64)
        ok = ~np.isnan(times)
        out.append(TagResult(float(lv), slots[ok], times[ok], int((~ok).sum()), counts[ok]))
    return out


def tag_dataset(events, level: float) -> TagResult:
    """Crossing times at one level, in slot order; no-events are counted, not kept."""
    return tag_levels(events, [level])[0]


@dataclass
class Waterfall:
    """Per-level arrival histograms on one shared time axis."""

    levels: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    tags: list = field(repr=False, default_factory=list)

    def histogram(self, i, total_slots) -> ArrivalHistogram:
        return ArrivalHistogram(self.bin_edges, self.counts[i], total_slots)

    def mean_times(self):
        return np.array([t.times.mean() if t.n_tagged else np.nan for t in self.tags])

    def conservation(self):
        """Rows of (level, tagged, dropped, total events)."""
        return [(t.level, t.n_tagged, t.dropped, t.n_events) for t in self.tags]

    def write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(["level_volts", "bin_left_seconds", "count"])
        for lv, row in zip(self.levels, self.counts):
            for left, c in zip(self.bin_edges[:-1], row):
                w.writerow([repr(float(lv)), repr(float(left)), int(c)])


def trigger_sweep(events, config: TagConfig = TagConfig(), bin_width: float | None = None,
                  total_slots: int | None = None) -> Waterfall:
    """Tag at every configured level and histogram on a common axis.

    Without ``bin_width`` the narrowest Freedman-Diaconis width over the
    levels is used.
    """
    if len(config.trigger_levels) < 2:
        raise DomainError("a sweep needs at least two levels")
    tags = tag_levels(events, config.trigger_levels)
    populated = [t.times for t in tags if t.n_tagged]
    if not populated:
        raise DomainError("no event crossed any trigger level")
    if bin_width is None:
        bin_width = min(freedman_diaconis_width(t) for t in populated)
    lo = min(t.min() for t in populated)
    hi = max(t.max() for t in populated)
    hists = []
    for t in tags:
        total = total_slots if total_slots is not None else max(t.n_events, 1)
        if t.n_tagged:
            hists.append(build_histogram(t.times, bin_width, total, span=(lo, hi)))
        else:
            hists.append(None)
    edges = next(h.bin_edges for h in hists if h is not None)
    counts = np.array([h.counts if h is not None else np.zeros(edges.size - 1, np.int64) for h in hists])
    return Waterfall(np.asarray(config.trigger_levels), edges, counts, tags)
