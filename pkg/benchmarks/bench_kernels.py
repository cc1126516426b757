"""Compare the compiled kernels with their pure-Python fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  Each kernel is timed on
both backends with identical inputs, and the outputs are checked to agree.
"""
import argparse
import timeit

import numpy as np

from pnrsim import _pykernels
from pnrsim.electrothermal import ElectrothermalParams

try:
    from pnrsim import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def transient_args(n_photons, time_step=0.5e-12, max_time=10e-9):
    p = ElectrothermalParams()
    return (p.kinetic_inductance, p.load_resistance, p.bias_current, p.switching_current,
            p.sheet_resistance / p.wire_width, p.wall_velocity_scale, p.stekly,
            p.wall_response_time, p.seed_domain_length, time_step,
            int(round(max_time / time_step)), [0.0] * n_photons)


def cases(rng):
    waves = np.cumsum(rng.normal(0.01, 0.02, (20_000, 128)), axis=1)
    levels = np.linspace(0.1, 0.8, 8)
    return {
        "rk4_transient (3 photons, 20k steps)": ("rk4_transient", transient_args(3)),
        "single_pole (20k x 128)": ("single_pole", (waves, 0.7)),
        "first_crossings (20k x 128, 8 levels)": ("first_crossings", (waves, levels)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=1e-15, equal_nan=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return
    print(f"{'kernel':40s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}  agree")
    for label, (name, fargs) in cases(np.random.default_rng(0)).items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        t_py = min(timeit.repeat(lambda: py(*fargs), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: cy(*fargs), number=1, repeat=args.repeat))
        agree = _same(py(*fargs), cy(*fargs))
        print(f"{label:40s} {t_py * 1e3:12.2f} {t_cy * 1e3:12.2f} {t_py / t_cy:8.1f}  {agree}")


if __name__ == "__main__":
    main()
