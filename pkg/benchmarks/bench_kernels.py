#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallbacks.

Runs each hot kernel (flat-kernel mean-shift step, batched cosine scan) over
a range of sizes and prints a table of median latencies for both backends,
plus an end-to-end index build + search comparison. The backend used by the
package at runtime follows PROVHUNT_NUMBA (default on); this script calls
both implementations directly so one run shows the whole picture.
"""

import statistics
import time

import numpy as np

from provhunt import _kernels
from provhunt.index import ClusterIndex


def timed(fn, repeat=7):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def fmt(seconds):
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:8.2f} ms"
    return f"{seconds:8.2f} s "


def bench_meanshift_step():
    print("\nmean-shift step (positions x points, dim 50)")
    print(f"{'size':>16} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    rng = np.random.default_rng(0)
    for n in (500, 2000, 5000, 10000):
        pts = rng.normal(size=(n, 50))
        bw = 2.0
        if _kernels.NUMBA_ENABLED:
            _kernels._meanshift_step_numba(pts, pts, bw)  # compile outside timing
            t_nb = timed(lambda: _kernels._meanshift_step_numba(pts, pts, bw), 3)
        else:
            t_nb = float("nan")
        t_np = timed(lambda: _kernels._meanshift_step_numpy(pts, pts, bw), 3)
        ratio = t_np / t_nb if t_nb == t_nb else float("nan")
        print(f"{n:>12}x{n:<4} {fmt(t_nb)} {fmt(t_np)} {ratio:8.2f}x")


def bench_dot_scan():
    print("\ncosine scan (rows x dim 50)")
    print(f"{'rows':>16} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    rng = np.random.default_rng(1)
    q = rng.normal(size=50)
    for n in (200, 2000, 20000, 200000):
        m = rng.normal(size=(n, 50))
        if _kernels.NUMBA_ENABLED:
            _kernels._dot_scan_numba(m, q)
            t_nb = timed(lambda: _kernels._dot_scan_numba(m, q))
        else:
            t_nb = float("nan")
        t_np = timed(lambda: _kernels._dot_scan_numpy(m, q))
        ratio = t_np / t_nb if t_nb == t_nb else float("nan")
        print(f"{n:>16} {fmt(t_nb)} {fmt(t_np)} {ratio:8.2f}x")


def bench_end_to_end():
    print("\nindex build + 100 widened searches (10k clustered vectors, dim 50)")
    rng = np.random.default_rng(2)
    centers = rng.normal(size=(100, 50))
    centers /= np.linalg.norm(centers, axis=1)[:, None]
    vecs = np.vstack([c + rng.normal(0, 0.03, (100, 50)) for c in centers])
    queries = [centers[rng.integers(0, 100)] + rng.normal(0, 0.05, 50)
               for _ in range(100)]

    t0 = time.perf_counter()
    idx = ClusterIndex.build(vecs, list(range(len(vecs))), bandwidth=0.4)
    build = time.perf_counter() - t0
    t0 = time.perf_counter()
    for q in queries:
        idx.search(q, 0.8)
    search = time.perf_counter() - t0
    print(f"  backend={_kernels.backend_name()}: build {fmt(build)}, "
          f"100 searches {fmt(search)} ({idx.n_clusters} clusters)")


def main():
    print(f"active backend: {_kernels.backend_name()} "
          f"(set PROVHUNT_NUMBA=0 to force the numpy path)")
    bench_meanshift_step()
    bench_dot_scan()
    bench_end_to_end()


if __name__ == "__main__":
    main()
