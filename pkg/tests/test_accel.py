"""The compiled core and the pure-Python fallback must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from gpalign import _accel, _fallback

core = pytest.importorskip("gpalign._core")


@pytest.mark.parametrize("family", [0, 1, 2, 3])
def test_radial_terms_agree(family):
    rng = np.random.default_rng(family)
    a, b = rng.uniform(-2, 2, 17), rng.uniform(-2, 2, 13)
    b[3] = a[5]  # include a zero distance
    params = np.array([1.3, 0.45, 0.8])
    for x, y in zip(core.radial_terms_1d(family, params, a, b), _fallback.radial_terms_1d(family, params, a, b)):
        np.testing.assert_allclose(np.asarray(x), y, rtol=1e-12, atol=1e-14)


def test_dtw_agree():
    rng = np.random.default_rng(0)
    for shape in [(1, 1), (1, 5), (6, 1), (9, 7), (30, 40)]:
        cost = rng.random(shape)
        cost[cost < 0.3] = 0.0  # plenty of ties
        acc_c, acc_p = np.asarray(core.dtw_accumulate(cost)), _fallback.dtw_accumulate(cost)
        np.testing.assert_array_equal(acc_c, acc_p)
        np.testing.assert_array_equal(np.asarray(core.dtw_backtrack(acc_c)), _fallback.dtw_backtrack(acc_p))


def test_backend_selection():
    assert _accel.BACKEND == "compiled"
    env = dict(os.environ, GPALIGN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import gpalign; print(gpalign.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
