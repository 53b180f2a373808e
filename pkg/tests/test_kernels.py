import numpy as np
import pytest

from provhunt import _kernels
from provhunt._kernels import dot_scan, meanshift_step


def test_dot_scan_matches_numpy_fallback():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(500, 32))
    q = rng.normal(size=32)
    fast = dot_scan(m, q)
    ref = _kernels._dot_scan_numpy(m, q)
    assert np.allclose(fast, ref, atol=1e-12)


def test_meanshift_step_matches_numpy_fallback():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(300, 10))
    pos = pts[:120].copy()
    fast_pos, fast_shift = meanshift_step(pos, pts, 1.5)
    ref_pos, ref_shift = _kernels._meanshift_step_numpy(pos, pts, 1.5)
    assert np.allclose(fast_pos, ref_pos, atol=1e-10)
    assert np.allclose(fast_shift, ref_shift, atol=1e-10)


def test_meanshift_step_isolated_position_stays_put():
    pts = np.array([[0.0, 0.0], [0.1, 0.0]])
    pos = np.array([[50.0, 50.0]])
    new_pos, shift = meanshift_step(pos, pts, 0.5)
    assert np.allclose(new_pos, pos)
    assert shift[0] == 0.0


def test_meanshift_step_deterministic_across_calls():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(400, 8))
    a = meanshift_step(pts[:100], pts, 2.0)
    b = meanshift_step(pts[:100], pts, 2.0)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_backend_flag_reports():
    assert _kernels.backend_name() in ("numba", "numpy")
