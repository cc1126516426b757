"""The compiled kernels must agree with the pure-Python reference versions."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pnrsim import _pykernels, kernels
from pnrsim.electrothermal import ElectrothermalParams

ck = pytest.importorskip("pnrsim._ckernels")


def test_compiled_backend_is_selected():
    assert kernels.BACKEND == "cython"


def test_environment_forces_fallback():
    env = dict(os.environ, PNRSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from pnrsim import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("births", [[], [0.0], [0.0, 0.0, 0.0], [0.0, 150e-12], [0.0, 3e-9]])
def test_rk4_transient_agrees(births):
    p = ElectrothermalParams()
    args = (p.kinetic_inductance, p.load_resistance, p.bias_current, p.switching_current,
            p.sheet_resistance / p.wire_width, p.wall_velocity_scale, p.stekly,
            p.wall_response_time, p.seed_domain_length, 1e-12, 8000, births)
    a, b = _pykernels.rk4_transient(*args), ck.rk4_transient(*args)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-20)


@given(x=arrays(np.float64, (5, 40), elements=st.floats(-2, 2)), alpha=st.floats(0.01, 1.0))
def test_single_pole_agrees(x, alpha):
    np.testing.assert_allclose(_pykernels.single_pole(x, alpha), ck.single_pole(x, alpha),
                               rtol=1e-12, atol=1e-12)


@given(w=arrays(np.float64, (6, 30), elements=st.floats(-1, 2)),
       levels=st.lists(st.floats(0.01, 1.5), min_size=1, max_size=4))
def test_first_crossings_agree(w, levels):
    lv = np.array(levels)
    a, b = _pykernels.first_crossings(w, lv), ck.first_crossings(w, lv)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_allclose(a[~np.isnan(a)], b[~np.isnan(b)], rtol=1e-12, atol=1e-12)


def test_first_crossing_interpolation():
    w = np.array([[0.0, 0.25, 0.5, 0.75, 1.0]])
    idx = kernels.first_crossings(w, np.array([0.5, 0.6, 1.2]))
    assert idx[0, 0] == pytest.approx(2.0)
    assert idx[0, 1] == pytest.approx(2.4)
    assert np.isnan(idx[0, 2])
