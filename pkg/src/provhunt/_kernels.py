"""Numeric hot loops: flat-kernel mean-shift steps and batched cosine scans.

Two interchangeable backends live here. The numba-jitted kernels are the
default; setting PROVHUNT_NUMBA=0 (or a failed numba import) selects the
pure-numpy fallbacks. Both backends parallelize only over rows so inner
accumulation order is fixed and results are deterministic regardless of
thread count. benchmarks/bench_kernels.py compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("PROVHUNT_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "no", "off")

NUMBA_ENABLED = False
if _WANT_NUMBA:
    try:
        import numba as _nb

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

# rows per block when forming pairwise-distance slabs (keeps peak memory
# under ~40MB for n=10^4, dim 50)
_CHUNK = 512


def _meanshift_step_numpy(positions, points, bandwidth):
    n_pos = positions.shape[0]
    out = np.empty_like(positions)
    shifts = np.empty(n_pos, dtype=np.float64)
    bw2 = bandwidth * bandwidth
    pts_sq = np.einsum("ij,ij->i", points, points)
    for start in range(0, n_pos, _CHUNK):
        block = positions[start : start + _CHUNK]
        d2 = (
            np.einsum("ij,ij->i", block, block)[:, None]
            - 2.0 * (block @ points.T)
            + pts_sq[None, :]
        )
        mask = d2 <= bw2
        counts = mask.sum(axis=1)
        # every position is within distance 0 of itself when positions are a
        # subset of points; guard anyway so isolated query positions stay put
        sums = mask.astype(np.float64) @ points
        safe = np.maximum(counts, 1)[:, None]
        new_block = np.where(counts[:, None] > 0, sums / safe, block)
        out[start : start + _CHUNK] = new_block
        shifts[start : start + _CHUNK] = np.sqrt(
            np.einsum("ij,ij->i", new_block - block, new_block - block)
        )
    return out, shifts


def _dot_scan_numpy(matrix, query):
    return matrix @ query


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @_nb.njit(cache=True, parallel=True, fastmath=False)
    def _meanshift_step_numba(positions, points, bandwidth):
        n_pos, dim = positions.shape
        n_pts = points.shape[0]
        bw2 = bandwidth * bandwidth
        out = np.empty_like(positions)
        shifts = np.empty(n_pos, dtype=np.float64)
        for i in _nb.prange(n_pos):
            acc = np.zeros(dim, dtype=np.float64)
            count = 0
            for j in range(n_pts):
                d2 = 0.0
                for k in range(dim):
                    diff = positions[i, k] - points[j, k]
                    d2 += diff * diff
                if d2 <= bw2:
                    for k in range(dim):
                        acc[k] += points[j, k]
                    count += 1
            s2 = 0.0
            if count > 0:
                for k in range(dim):
                    v = acc[k] / count
                    diff = v - positions[i, k]
                    s2 += diff * diff
                    out[i, k] = v
            else:
                for k in range(dim):
                    out[i, k] = positions[i, k]
            shifts[i] = np.sqrt(s2)
        return out, shifts

    @_nb.njit(cache=True, parallel=True, fastmath=False)
    def _dot_scan_numba(matrix, query):
        n, dim = matrix.shape
        out = np.empty(n, dtype=np.float64)
        for i in _nb.prange(n):
            acc = 0.0
            for k in range(dim):
                acc += matrix[i, k] * query[k]
            out[i] = acc
        return out


def meanshift_step(positions, points, bandwidth):
    """One flat-kernel shift: each position moves to the mean of the points
    within `bandwidth`. Returns (new_positions, per-position shift norms)."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    if NUMBA_ENABLED:
        return _meanshift_step_numba(positions, points, float(bandwidth))
    return _meanshift_step_numpy(positions, points, float(bandwidth))


# below this row count the BLAS matvec wins outright; the jitted kernel's
# thread fan-out only pays off on very large scans with many cores
# (benchmarks/bench_kernels.py shows the crossover per machine)
_DOT_SCAN_MIN_ROWS = 32768


def dot_scan(matrix, query):
    """Row-wise dot products (cosines when both sides are unit vectors)."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    if NUMBA_ENABLED and matrix.shape[0] >= _DOT_SCAN_MIN_ROWS:
        return _dot_scan_numba(matrix, query)
    return _dot_scan_numpy(matrix, query)


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
