"""Two-stage accelerated vector search: mean-shift clusters + a KD-tree.

Indexed vectors are L2-normalized so a cosine floor becomes a Euclidean
radius, which lets the KD-tree over cluster centroids give an exact
candidate-cluster bound: a cluster is scanned whenever its centroid ball
could still contain a vector above the floor. That widening keeps the
two-stage speedup while guaranteeing the result set equals a full linear
scan. The paper-literal nearest-cluster-only behaviour stays available as
search_mode="nearest" for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import dot_scan, meanshift_step

logger = logging.getLogger(__name__)

# float-rounding slack applied to the exclusion bound so a borderline member
# can never be lost to the oracle
_BOUND_EPS = 1e-9


def mean_shift(points, bandwidth: float, max_iter: int = 300, tol: float = 1e-4):
    """Flat-kernel mean-shift. Returns (centroids, assignments).

    Iterates every point's position to its local mode (shift norm < tol or
    max_iter reached), merges modes closer than bandwidth/2, then assigns each
    point to the surviving mode nearest its converged position.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("mean_shift needs a non-empty 2-D point array")
    if bandwidth < 0:
        raise ValueError(f"bandwidth must be >= 0, got {bandwidth}")
    n = points.shape[0]
    positions = points.copy()
    active = np.arange(n)
    for _ in range(max_iter):
        if active.size == 0:
            break
        moved, shifts = meanshift_step(positions[active], points, bandwidth)
        positions[active] = moved
        active = active[shifts >= tol]

    # greedy mode merge in index order: deterministic for identical input
    modes: list[np.ndarray] = []
    merge_r = bandwidth / 2.0
    mode_of = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos = positions[i]
        found = -1
        for ci, m in enumerate(modes):
            if np.linalg.norm(pos - m) <= merge_r:
                found = ci
                break
        if found < 0:
            modes.append(pos.copy())
            found = len(modes) - 1
        mode_of[i] = found
    centroids = np.vstack(modes)

    if len(modes) == 1:
        assignments = np.zeros(n, dtype=np.int64)
    else:
        d2 = (
            np.einsum("ij,ij->i", positions, positions)[:, None]
            - 2.0 * positions @ centroids.T
            + np.einsum("ij,ij->i", centroids, centroids)[None, :]
        )
        assignments = np.argmin(d2, axis=1).astype(np.int64)
    return centroids, assignments


def median_bandwidth(points, sample: int = 1000) -> float:
    """Median pairwise distance over an evenly spaced sample of the points."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        return 1.0
    if n > sample:
        idx = np.linspace(0, n - 1, sample).astype(np.int64)
        points = points[idx]
        n = sample
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ points.T
        + np.einsum("ij,ij->i", points, points)[None, :]
    )
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    return med


def build_tree(centroids) -> cKDTree:
    """Balanced KD-tree over centroids supporting exact nearest queries."""
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim != 2 or centroids.shape[0] == 0:
        raise ValueError("build_tree needs a non-empty 2-D centroid array")
    return cKDTree(centroids)


@dataclass
class ClusterIndex:
    """Immutable search structure over a set of reference-tagged vectors."""

    refs: list
    unit: np.ndarray                 # [n_nonzero, d] unit rows
    nonzero_ids: np.ndarray          # positions of unit rows in refs
    zero_ids: np.ndarray             # refs whose raw vector had zero norm
    centroids: np.ndarray
    assignments: np.ndarray
    bandwidth: float
    tree: cKDTree | None = None
    cluster_members: list[np.ndarray] = field(default_factory=list)
    cluster_matrices: list[np.ndarray] = field(default_factory=list)
    cluster_radius: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_radius: float = 0.0

    @classmethod
    def build(cls, vectors, refs, bandwidth="median", max_iter: int = 300,
              tol: float = 1e-4) -> "ClusterIndex":
        vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        if vectors.shape[0] != len(refs):
            raise ValueError("one ref per vector required")
        norms = np.linalg.norm(vectors, axis=1)
        nonzero = np.where(norms > 0.0)[0]
        zero = np.where(norms == 0.0)[0]
        unit = vectors[nonzero] / norms[nonzero][:, None] if nonzero.size else np.zeros((0, vectors.shape[1]))

        if nonzero.size == 0:
            return cls(
                refs=list(refs), unit=unit, nonzero_ids=nonzero, zero_ids=zero,
                centroids=np.zeros((0, vectors.shape[1])),
                assignments=np.zeros(0, dtype=np.int64), bandwidth=0.0,
            )

        bw = median_bandwidth(unit) if bandwidth == "median" else float(bandwidth)
        centroids, assignments = mean_shift(unit, bw, max_iter=max_iter, tol=tol)
        idx = cls(
            refs=list(refs), unit=unit, nonzero_ids=nonzero, zero_ids=zero,
            centroids=centroids, assignments=assignments, bandwidth=bw,
            tree=build_tree(centroids),
        )
        k = centroids.shape[0]
        radius = np.zeros(k)
        for c in range(k):
            members = np.where(assignments == c)[0]
            idx.cluster_members.append(members)
            mat = np.ascontiguousarray(unit[members])
            idx.cluster_matrices.append(mat)
            if members.size:
                d = np.linalg.norm(mat - centroids[c][None, :], axis=1)
                radius[c] = float(d.max())
        idx.cluster_radius = radius
        idx.max_radius = float(radius.max()) if radius.size else 0.0
        logger.debug("index built: %d vectors, %d clusters, bandwidth %.4f",
                     len(refs), k, bw)
        return idx

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def _candidate_clusters(self, q_unit, radius_needed: float) -> np.ndarray:
        if self.tree is None:
            return np.zeros(0, dtype=np.int64)
        if not np.isfinite(radius_needed):
            return np.arange(self.n_clusters)
        coarse = self.tree.query_ball_point(q_unit, radius_needed + self.max_radius + _BOUND_EPS)
        coarse = np.asarray(sorted(coarse), dtype=np.int64)
        if coarse.size == 0:
            return coarse
        d = np.linalg.norm(self.centroids[coarse] - q_unit[None, :], axis=1)
        keep = d <= radius_needed + self.cluster_radius[coarse] + _BOUND_EPS
        return coarse[keep]

    def search(self, query_vec, theta_hit: float, mode: str = "widened"):
        """All (ref, cosine) with cosine >= theta_hit, ordered by input position.

        mode="widened" (default) is exact versus a linear scan; mode="nearest"
        scans only the single closest cluster.
        """
        q = np.asarray(query_vec, dtype=np.float64)
        qn = np.linalg.norm(q)
        out: list[tuple[object, float]] = []
        if theta_hit > 1.0:
            return out
        if qn == 0.0:
            # cosine against everything is 0 by convention
            if theta_hit <= 0.0:
                return [(self.refs[i], 0.0) for i in range(len(self.refs))]
            return out
        q_unit = q / qn

        id_chunks: list[np.ndarray] = []
        dot_chunks: list[np.ndarray] = []
        if self.n_clusters > 0:
            if mode == "nearest":
                _, nearest = self.tree.query(q_unit)
                clusters = np.asarray([nearest], dtype=np.int64)
            else:
                if theta_hit >= -1.0:
                    radius_needed = float(np.sqrt(max(0.0, 2.0 - 2.0 * theta_hit)))
                else:
                    radius_needed = np.inf
                clusters = self._candidate_clusters(q_unit, radius_needed)
            for c in clusters:
                members = self.cluster_members[c]
                if members.size == 0:
                    continue
                dots = dot_scan(self.cluster_matrices[c], q_unit)
                sel = np.where(dots >= theta_hit)[0]
                if sel.size:
                    id_chunks.append(self.nonzero_ids[members[sel]])
                    dot_chunks.append(dots[sel])
        if theta_hit <= 0.0 and self.zero_ids.size:
            id_chunks.append(self.zero_ids)
            dot_chunks.append(np.zeros(self.zero_ids.size))
        if not id_chunks:
            return out
        # every vector lives in exactly one cluster, so ids never repeat
        ids = np.concatenate(id_chunks)
        dots = np.clip(np.concatenate(dot_chunks), -1.0, 1.0)
        order = np.argsort(ids, kind="stable")
        refs = self.refs
        return [(refs[i], d) for i, d in zip(ids[order].tolist(),
                                             dots[order].tolist())]
