"""Batch command-line interface: ``pnrsim {stats,simulate,sweep,analyze,config}``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical or
fit failure.  Every output file is written to a temporary name and renamed
into place, and nothing time- or host-dependent is written, so reruns with
the same configuration give byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config
from .counting import (DetectorArrayModel, click_probability, collision_probability,
                       resolution_curve)
from .errors import ConfigError, DomainError, PnrError
from .pipeline import (default_bin_width, report_from_fit, score_levels,
                       select_optimal_level)
from .tagger import TagConfig, tag_levels, trigger_sweep
from .waveform import (generate_dataset, read_waveform_file, write_ground_truth_csv,
                       write_waveform_file)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

WAVEFORM_FILE = "waveforms.pnrw"
GROUND_TRUTH_FILE = "ground_truth.csv"


class _IOFailure(Exception):
    pass


def _atomic_write(path: Path, writer, binary=False):
    """Call ``writer(fh)`` on a temp file next to ``path``, then rename."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise _IOFailure(f"cannot write to {path.parent}: {exc}") from exc
    try:
        mode = "wb" if binary else "w"
        kw = {} if binary else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kw) as fh:
            writer(fh)
        os.replace(tmp, path)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise _IOFailure(f"cannot write {path}: {exc}") from exc
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _write_text(path, text):
    _atomic_write(path, lambda fh: fh.write(text))


def _csv_text(header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def _fmt(x):
    return repr(float(x))


# --------------------------------------------------------------------------
# commands


def cmd_stats(cfg: ExperimentConfig, out: Path, args) -> int:
    st = cfg.stats
    rows = []
    for N in st.elements:
        for q in range(1, st.max_photons + 1):
            free = 1.0 - collision_probability(N, q)
            for eta in st.efficiencies:
                allp = click_probability(DetectorArrayModel(N, eta), q, q) if q <= N else 0.0
                rows.append([N, q, _fmt(eta), _fmt(allp), _fmt(free), _fmt(eta ** q)])
    _write_text(out / "click_probability.csv", _csv_text(
        ["elements", "photons", "efficiency", "all_detected_probability",
         "collision_free_probability", "absorption_probability"], rows))

    rows = []
    for ratio in sorted(st.jitter_ratios):
        model = replace(cfg.timing, jitter_ratio=ratio)
        for n, ovl in resolution_curve(model, st.max_photon_number):
            rows.append([_fmt(ratio), int(n), _fmt(ovl), _fmt(1.0 - ovl)])
    _write_text(out / "resolution_curves.csv", _csv_text(
        ["jitter_ratio", "n", "overlap", "discrimination_probability"], rows))
    print(f"wrote {out / 'click_probability.csv'} and {out / 'resolution_curves.csv'}")
    return EXIT_OK


def _simulate(cfg: ExperimentConfig):
    return generate_dataset(cfg.source, cfg.timing, cfg.frontend, cfg.simulation.n_events,
                            cfg.electrothermal, cfg.simulation.max_slots)


def _events(cfg: ExperimentConfig, args):
    """Events from ``--input`` when given, else simulated from the config."""
    if args.input is None:
        return _simulate(cfg)
    try:
        return read_waveform_file(args.input)
    except OSError as exc:
        raise _IOFailure(f"cannot read {args.input}: {exc}") from exc
    except DomainError as exc:
        raise _IOFailure(f"{args.input}: {exc}") from exc


def cmd_simulate(cfg: ExperimentConfig, out: Path, args) -> int:
    ds = _simulate(cfg)
    _atomic_write(out / WAVEFORM_FILE, lambda fh: write_waveform_file(fh, ds), binary=True)
    _atomic_write(out / GROUND_TRUTH_FILE, lambda fh: write_ground_truth_csv(fh, ds))
    print(f"events {ds.n_events}")
    print(f"slots {ds.total_slots}")
    print(f"main_slots {ds.main_slots}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out: Path, args) -> int:
    events = _events(cfg, args)
    wf = trigger_sweep(events, cfg.tagging, cfg.pipeline.bin_width, events.main_slots)
    _atomic_write(out / "waterfall.csv", wf.write_csv)
    rows = [[_fmt(lv), tagged, dropped, total] for lv, tagged, dropped, total in wf.conservation()]
    _write_text(out / "conservation.csv", _csv_text(
        ["level_volts", "events_tagged", "events_dropped", "events_total"], rows))
    for lv, tagged, dropped, total in wf.conservation():
        print(f"{lv:.3f} V  tagged {tagged}  dropped {dropped}  total {total}")
    return EXIT_OK


def cmd_analyze(cfg: ExperimentConfig, out: Path, args) -> int:
    events = _events(cfg, args)
    levels = cfg.tagging.trigger_levels if args.level is None else (args.level,)
    tags = tag_levels(events, levels)
    populated = [t.times for t in tags if t.n_tagged]
    if not populated:
        raise DomainError("no event crossed the trigger level(s)")
    bw = cfg.pipeline.bin_width
    if bw is None:
        bw = min(default_bin_width(t, cfg.timing) for t in populated)
    scores = score_levels(tags, events.main_slots, bw, cfg.pipeline.max_peaks, workers=args.threads)
    best = select_optimal_level(scores)
    if best.fit is None:
        raise DomainError(f"no peaks could be fitted at {best.level} V")
    tag = next(t for t in tags if t.level == best.level)
    report = report_from_fit(best.fit, best.histogram, cfg.timing, best.level, tag.dropped)

    _write_text(out / "report.json", report.to_json())
    _write_text(out / "report.txt", report.to_text())
    _write_text(out / "per_k.csv", report.per_k_csv())
    rows = [[_fmt(s.level), s.n_peaks, _fmt(s.mean_overlap)] for s in scores]
    _write_text(out / "level_scores.csv", _csv_text(["level_volts", "n_peaks", "mean_overlap"], rows))
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_config(cfg: ExperimentConfig, out: Path, args) -> int:
    sys.stdout.write(cfg.to_json())
    return EXIT_OK


COMMANDS = {"stats": cmd_stats, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "analyze": cmd_analyze, "config": cmd_config}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnrsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "stats": "write click-probability surfaces and resolution curves",
        "simulate": "generate a waveform file and its ground-truth sidecar",
        "sweep": "tag at every trigger level and write the waterfall histograms",
        "analyze": "reconstruct photon-number statistics at one or the optimal level",
        "config": "print the effective configuration as JSON",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="experiment JSON (defaults when omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="maximum worker processes")
        if name in ("sweep", "analyze"):
            p.add_argument("--input", type=Path,
                           help="waveform file from 'simulate' (simulate in memory when omitted)")
        if name == "analyze":
            p.add_argument("--level", type=float, help="trigger level in volts (default: optimal)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config is not None else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if getattr(args, "level", None) is not None:
            try:
                TagConfig((args.level,))
            except DomainError as exc:
                raise ConfigError(f"--level: {exc}") from exc
    except ConfigError as exc:
        print(f"pnrsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg.output_dir)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"pnrsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IOFailure as exc:
        print(f"pnrsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"pnrsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PnrError as exc:
        print(f"pnrsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
