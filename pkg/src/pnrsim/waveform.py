"""Synthetic digitizer datasets for a pulsed-laser photon-number experiment.

Slots are laser pulses.  Every ``suppressed_slots_per_main + 1``-th slot is a
main (picked) pulse; the others are pulses the picker should have blocked but
leak through attenuated by the extinction ratio.  Photon numbers are Poisson
per slot.  A slot with ``k >= 1`` photons produces a detector pulse whose
rising edge depends on ``k``, is low-pass filtered by the amplifier and the
scope, and picks up additive noise.

Random numbers come in fixed blocks of slots, each block drawing from its own
stream seeded by ``(seed, block_index)``.  Any slot range is therefore
reproducible on its own, independent of how generation is chunked.
"""
from __future__ import annotations

import csv
import functools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .counting import TimingModel, rise_time
from .electrothermal import ElectrothermalParams, simulate_transient
from .errors import DomainError, SlotCapError

BLOCK_SLOTS = 4096
MAIN, SUPPRESSED = 0, 1
KIND_NAMES = {MAIN: "main", SUPPRESSED: "suppressed"}


@dataclass(frozen=True)
class SourceConfig:
    repetition_rate: float = 1.012e6
    mean_photons: float = 0.35
    extinction_ratio_db: float = 20.0
    suppressed_slots_per_main: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.repetition_rate > 0:
            raise DomainError("repetition_rate must be > 0")
        if self.mean_photons < 0:
            raise DomainError("mean_photons must be >= 0")
        if self.extinction_ratio_db < 0:
            raise DomainError("extinction_ratio_db must be >= 0")
        if self.suppressed_slots_per_main < 0 or int(self.suppressed_slots_per_main) != self.suppressed_slots_per_main:
            raise DomainError("suppressed_slots_per_main must be a non-negative integer")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 bits")

    @property
    def leakage_mean(self):
        return self.mean_photons * 10.0 ** (-self.extinction_ratio_db / 10.0)


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: float = 40e9
    amplifier_bandwidth: float = 2e9
    scope_bandwidth: float = 4e9
    pulse_amplitude: float = 1.0
    fall_time_constant: float = 20e-9
    # calibration constant: 1-photon jitter ~11 ps FWHM at the 0.7 V trigger
    noise_rms: float = 6.5e-3
    record_length: int = 128

    def __post_init__(self):
        if not (self.amplifier_bandwidth > 0 and self.scope_bandwidth > 0):
            raise DomainError("bandwidths must be > 0")
        # an infinite bandwidth means that filter stage is bypassed
        lowest = min(self.amplifier_bandwidth, self.scope_bandwidth)
        if math.isfinite(lowest) and not self.sample_rate > 2 * lowest:
            raise DomainError("sample_rate must exceed twice the lowest bandwidth")
        if self.noise_rms < 0:
            raise DomainError("noise_rms must be >= 0")
        if not (self.pulse_amplitude > 0 and self.fall_time_constant > 0):
            raise DomainError("pulse_amplitude and fall_time_constant must be > 0")
        if self.record_length < 2 or int(self.record_length) != self.record_length:
            raise DomainError("record_length must be an integer >= 2")

    @property
    def sample_times(self):
        return np.arange(self.record_length) / self.sample_rate


@dataclass
class EventRecord:
    slot_index: int
    slot_kind: str
    true_photon_count: int
    waveform: np.ndarray | None = None
    sample_rate: float = 40e9
    t0: float = 0.0
    crossing_times: dict = field(default_factory=dict)


@dataclass
class EventBlock:
    """Columnar batch of events; ``waveforms`` has one row per event.

    ``t0`` is the time of sample 0 relative to the slot's laser reference.
    The digitizer clock is not locked to the laser, so it differs from event
    to event by up to half a sample.
    """

    slot_index: np.ndarray
    slot_kind: np.ndarray
    counts: np.ndarray
    waveforms: np.ndarray | None
    sample_rate: float
    t0: np.ndarray

    def __len__(self):
        return self.slot_index.size

    def records(self):
        for i in range(len(self)):
            yield EventRecord(
                int(self.slot_index[i]),
                KIND_NAMES[int(self.slot_kind[i])],
                int(self.counts[i]),
                None if self.waveforms is None else self.waveforms[i],
                self.sample_rate,
                float(self.t0[i]),
            )


# --------------------------------------------------------------------------
# photon numbers


def _slot_kinds(source, idx):
    period = source.suppressed_slots_per_main + 1
    return np.where(idx % period == 0, MAIN, SUPPRESSED).astype(np.int8)


def _block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))


def _block_counts(source, block, rng):
    idx = np.arange(block * BLOCK_SLOTS, (block + 1) * BLOCK_SLOTS, dtype=np.int64)
    kinds = _slot_kinds(source, idx)
    means = np.where(kinds == MAIN, source.mean_photons, source.leakage_mean)
    return idx, kinds, rng.poisson(means).astype(np.int64)


def sample_photon_counts(source: SourceConfig, n_slots: int, start: int = 0):
    """Slot kinds and photon numbers for slots ``start .. start + n_slots - 1``."""
    if n_slots < 1:
        raise DomainError("n_slots must be >= 1")
    stop = start + n_slots
    kinds, counts = [], []
    for block in range(start // BLOCK_SLOTS, (stop - 1) // BLOCK_SLOTS + 1):
        idx, k, c = _block_counts(source, block, _block_rng(source.seed, block))
        keep = (idx >= start) & (idx < stop)
        kinds.append(k[keep])
        counts.append(c[keep])
    return np.concatenate(kinds), np.concatenate(counts)


# --------------------------------------------------------------------------
# pulse shapes and analog front end


def _analytic_edges(t, start, ramp, amplitude, fall):
    """Linear rise of length ``ramp`` from ``start`` then exponential decay."""
    rel = t - start
    up = np.clip(rel / ramp, 0.0, 1.0)
    down = np.exp(-np.maximum(rel - ramp, 0.0) / fall)
    return amplitude * np.where(rel <= ramp, up, down)


@functools.lru_cache(maxsize=64)
def _electrothermal_shape(params: ElectrothermalParams, n: int):
    res = simulate_transient(params, np.zeros(n))
    v = res.voltage / res.voltage.max()
    return res.times[1] - res.times[0], v


def pulse_template(timing, n: int, frontend: FrontendConfig, start: float | None = None):
    """Ideal (unfiltered, noiseless) detector pulse sampled on the scope grid.

    ``timing`` is a :class:`TimingModel` (analytic ramp) or an
    :class:`ElectrothermalParams` (simulated voltage, resampled).  The pulse
    begins at ``start`` seconds after the laser reference (default: the
    timing model's offset, or 1 ns for the electrothermal backend) and peaks
    at ``frontend.pulse_amplitude``.
    """
    t = frontend.sample_times
    if n == 0:
        return np.zeros_like(t)
    if n < 0:
        raise DomainError("n must be >= 0")
    if isinstance(timing, TimingModel):
        start = timing.time_offset if start is None else start
        return _analytic_edges(t, start, rise_time(timing, n), frontend.pulse_amplitude,
                               frontend.fall_time_constant)
    if isinstance(timing, ElectrothermalParams):
        start = 1e-9 if start is None else start
        dt, shape = _electrothermal_shape(timing, int(n))
        grid = np.arange(shape.size) * dt
        return frontend.pulse_amplitude * np.interp(t - start, grid, shape, left=0.0, right=shape[-1])
    raise TypeError("timing must be a TimingModel or ElectrothermalParams")


def pole_coefficient(bandwidth, sample_rate):
    """Impulse-invariant smoothing factor of a single pole at ``bandwidth``."""
    if math.isinf(bandwidth):
        return 1.0
    return 1.0 - math.exp(-2.0 * math.pi * bandwidth / sample_rate)


def filter_chain(waveforms, frontend: FrontendConfig):
    x = np.atleast_2d(np.asarray(waveforms, dtype=np.float64))
    for bw in (frontend.amplifier_bandwidth, frontend.scope_bandwidth):
        alpha = pole_coefficient(bw, frontend.sample_rate)
        if alpha < 1.0:
            x = kernels.single_pole(x, alpha)
    return x


def apply_frontend(waveform, frontend: FrontendConfig, noise_seed=None, rng=None):
    """Amplifier pole, scope pole, then white Gaussian noise per sample."""
    w = np.asarray(waveform, dtype=np.float64)
    out = filter_chain(w, frontend)
    if frontend.noise_rms > 0:
        rng = np.random.default_rng(noise_seed) if rng is None else rng
        out = out + frontend.noise_rms * rng.standard_normal(out.shape)
    return out.reshape(w.shape)


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """A deterministic stream of detector events.

    ``total_slots`` counts every laser slot consumed (main and suppressed);
    ``main_slots`` is the number of picked pulses, the denominator for
    per-pulse photon statistics.
    """

    source: SourceConfig
    timing: TimingModel
    frontend: FrontendConfig
    n_events: int
    total_slots: int
    main_slots: int
    electrothermal: ElectrothermalParams | None = None

    def _block_events(self, block, with_waveforms=True):
        rng = _block_rng(self.source.seed, block)
        idx, kinds, counts = _block_counts(self.source, block, rng)
        fire = counts > 0
        idx, kinds, counts = idx[fire], kinds[fire], counts[fire]
        n_ev = idx.size
        fe = self.frontend
        phase = rng.uniform(-0.5, 0.5, n_ev) / fe.sample_rate
        z = rng.standard_normal(n_ev)
        noise = rng.standard_normal((n_ev, fe.record_length)) if fe.noise_rms > 0 else None
        keep = idx < self.total_slots
        if not with_waveforms:
            return EventBlock(idx[keep], kinds[keep], counts[keep].astype(np.int16), None,
                              fe.sample_rate, phase[keep])
        idx, kinds, counts, phase, z = idx[keep], kinds[keep], counts[keep], phase[keep], z[keep]
        if noise is not None:
            noise = noise[keep]
        waves = self._ideal(counts, phase, z)
        waves = filter_chain(waves, fe)
        if noise is not None:
            waves += fe.noise_rms * noise
        return EventBlock(idx, kinds, counts.astype(np.int16), waves.astype(np.float32),
                          fe.sample_rate, phase)

    def _ideal(self, counts, t0, z):
        fe, tm = self.frontend, self.timing
        t = fe.sample_times[None, :]
        ramp = rise_time(tm, np.maximum(counts, 1)) if counts.size else np.zeros(0)
        # pulse start on the sample grid of each event
        start = tm.time_offset + tm.jitter_ratio * ramp * z - t0
        if self.electrothermal is None:
            return _analytic_edges(t, start[:, None], ramp[:, None], fe.pulse_amplitude,
                                   fe.fall_time_constant)
        out = np.empty((counts.size, fe.record_length))
        for i, (n, s) in enumerate(zip(counts, start)):
            out[i] = pulse_template(self.electrothermal, int(n), fe, start=s)
        return out

    def blocks(self, with_waveforms=True):
        last = (self.total_slots - 1) // BLOCK_SLOTS
        for block in range(last + 1):
            yield self._block_events(block, with_waveforms)

    def __iter__(self):
        for blk in self.blocks():
            yield from blk.records()

    def ground_truth(self):
        """``(slot_index, slot_kind, true_photon_count)`` for every event."""
        parts = list(self.blocks(with_waveforms=False))
        return (np.concatenate([p.slot_index for p in parts]),
                np.concatenate([p.slot_kind for p in parts]),
                np.concatenate([p.counts for p in parts]).astype(np.int64))

    def main_slot_counts(self):
        """Photon numbers of every main slot, including empty ones."""
        kinds, counts = sample_photon_counts(self.source, self.total_slots)
        return counts[kinds == MAIN]

    def slot_range(self, start, stop):
        """Events whose slot index lies in ``[start, stop)``."""
        out = []
        for block in range(start // BLOCK_SLOTS, (max(stop, start + 1) - 1) // BLOCK_SLOTS + 1):
            blk = self._block_events(block)
            sel = (blk.slot_index >= start) & (blk.slot_index < stop)
            out.extend(EventBlock(blk.slot_index[sel], blk.slot_kind[sel], blk.counts[sel],
                                  blk.waveforms[sel], blk.sample_rate, blk.t0[sel]).records())
        return out


def generate_dataset(source: SourceConfig, timing: TimingModel, frontend: FrontendConfig,
                     n_events_target: int, electrothermal: ElectrothermalParams | None = None,
                     max_slots: int = 10**9) -> Dataset:
    """Run slots until ``n_events_target`` of them fire (k >= 1).

    Returns a :class:`Dataset`; iterate it for :class:`EventRecord` objects.
    Raises :class:`SlotCapError` if the target cannot be met within
    ``max_slots`` slots (immediately when no slot can ever fire).
    """
    if n_events_target < 1:
        raise DomainError("n_events_target must be >= 1")
    leak_possible = source.suppressed_slots_per_main > 0 and source.leakage_mean > 0
    if source.mean_photons == 0 and not leak_possible:
        raise SlotCapError("mean photon number is zero and there is no leakage: no slot can fire")
    found = 0
    block = 0
    while True:
        if block * BLOCK_SLOTS >= max_slots:
            raise SlotCapError(f"only {found} events in {max_slots} slots")
        idx, kinds, counts = _block_counts(source, block, _block_rng(source.seed, block))
        fired = np.nonzero(counts > 0)[0]
        if found + fired.size >= n_events_target:
            last = int(idx[fired[n_events_target - found - 1]])
            total = last + 1
            if total > max_slots:
                raise SlotCapError(f"only {found} events in {max_slots} slots")
            break
        found += fired.size
        block += 1
    period = source.suppressed_slots_per_main + 1
    main = (total + period - 1) // period
    return Dataset(source, timing, frontend, n_events_target, total, main, electrothermal)


# --------------------------------------------------------------------------
# binary waveform files

MAGIC = b"PNRW"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHdIQQQ")


def record_dtype(record_length):
    return np.dtype([
        ("slot_index", "<i8"),
        ("slot_kind", "u1"),
        ("true_photon_count", "<u2"),
        ("t0", "<f8"),
        ("samples", "<f4", (record_length,)),
    ])


def write_waveform_file(fh, dataset: Dataset):
    """Stream ``dataset`` into an open binary file handle.

    Header (little-endian): magic ``PNRW``, version u16, sample_rate f64,
    record_length u32, event count u64, total slots u64, main slots u64.
    Then one packed record per event: slot_index i64, slot_kind u8,
    true_photon_count u16, t0 f64 (seconds of sample 0 after the laser
    reference), ``record_length`` f32 samples.
    """
    fe = dataset.frontend
    fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, fe.sample_rate, fe.record_length,
                          dataset.n_events, dataset.total_slots, dataset.main_slots))
    dt = record_dtype(fe.record_length)
    for blk in dataset.blocks():
        rec = np.empty(len(blk), dtype=dt)
        rec["slot_index"] = blk.slot_index
        rec["slot_kind"] = blk.slot_kind
        rec["true_photon_count"] = blk.counts
        rec["t0"] = blk.t0
        rec["samples"] = blk.waveforms
        fh.write(rec.tobytes())


@dataclass
class WaveformFile:
    sample_rate: float
    record_length: int
    n_events: int
    total_slots: int
    main_slots: int
    records: np.ndarray

    def blocks(self, with_waveforms=True, chunk=8192):
        for s in range(0, self.n_events, chunk):
            r = self.records[s:s + chunk]
            yield EventBlock(r["slot_index"].astype(np.int64), r["slot_kind"].astype(np.int8),
                             r["true_photon_count"].astype(np.int16),
                             np.asarray(r["samples"]) if with_waveforms else None, self.sample_rate,
                             r["t0"].astype(np.float64))

    def __iter__(self):
        for blk in self.blocks():
            yield from blk.records()


def read_waveform_file(path) -> WaveformFile:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise DomainError("truncated waveform file header")
    magic, version, fs, length, n, total, main = _HEADER.unpack(head)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise DomainError(f"not a version-{FORMAT_VERSION} waveform file")
    records = np.memmap(path, dtype=record_dtype(length), mode="r", offset=_HEADER.size, shape=(n,))
    return WaveformFile(fs, length, n, total, main, records)


def write_ground_truth_csv(fh, dataset):
    w = csv.writer(fh)
    w.writerow(["slot_index", "slot_kind", "true_photon_count"])
    for blk in dataset.blocks(with_waveforms=False):
        for i, k, c in zip(blk.slot_index, blk.slot_kind, blk.counts):
            w.writerow([int(i), KIND_NAMES[int(k)], int(c)])
