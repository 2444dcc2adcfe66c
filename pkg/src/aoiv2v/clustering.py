"""Spectral grouping of pairs by midpoint geography.

Pipeline: Gaussian similarity with a hard distance cutoff -> symmetric
normalized Laplacian -> smallest eigenvectors via cyclic Jacobi rotations ->
row-normalized spectral embedding -> Lloyd's k-means.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ExperimentConfig


def similarity_matrix(midpoints: np.ndarray, cutoff_m: float, scale_m: float) -> np.ndarray:
    """exp(-d^2 / scale^2) where d <= cutoff, zero beyond, unit diagonal."""
    pts = np.asarray(midpoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("midpoints must be (K, 2)")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    sim = np.exp(-(dist ** 2) / scale_m ** 2)
    sim[dist > cutoff_m] = 0.0
    np.fill_diagonal(sim, 1.0)
    return sim


def normalized_laplacian(sim: np.ndarray) -> np.ndarray:
    """I - Omega^(-1/2) D Omega^(-1/2) with Omega the row-sum degree matrix."""
    sim = np.asarray(sim, dtype=float)
    if sim.shape[0] != sim.shape[1]:
        raise ValueError("similarity matrix must be square")
    if not np.allclose(sim, sim.T, atol=1e-12):
        raise ValueError("similarity matrix must be symmetric")
    deg = sim.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("degree must be positive (unit diagonal guarantees it)")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = -sim * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap[np.diag_indices_from(lap)] += 1.0
    # enforce exact symmetry against rounding
    return (lap + lap.T) / 2.0


def jacobi_eigh(
    a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Returns eigenvalues ascending and the matching orthonormal eigenvector
    columns.  Raises if the off-diagonal Frobenius norm has not dropped below
    tol after max_sweeps sweeps.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    def off_norm(m):
        # summed directly, never by subtracting the diagonal's Frobenius mass:
        # the cancellation noise of that shortcut floors near sqrt(eps)*||m||
        off = m - np.diag(m.diagonal())
        return math.sqrt((off ** 2).sum())

    for _ in range(max_sweeps):
        if off_norm(a) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if abs(h) + 100.0 * abs(apq) == abs(h):
                    # negligible against the diagonal gap; tiny exact tangent
                    # avoids overflow in the quadratic formula below
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                a[p, :], a[q, :] = c * a[p, :] - s * a[q, :], s * a[p, :] + c * a[q, :]
                a[p, q] = a[q, p] = 0.0
                vp = c * v[:, p] - s * v[:, q]
                vq = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
    else:
        if off_norm(a) >= tol:
            raise RuntimeError(
                f"Jacobi sweeps failed to converge within {max_sweeps} sweeps"
            )
    evals = a.diagonal().copy()
    order = np.argsort(evals, kind="stable")
    return evals[order], v[:, order]


def smallest_eigenvectors(
    lap: np.ndarray, count: int, tol: float = 1e-10, max_sweeps: int = 50
) -> np.ndarray:
    if not 1 <= count <= lap.shape[0]:
        raise ValueError("eigenvector count out of range")
    _, vecs = jacobi_eigh(lap, tol=tol, max_sweeps=max_sweeps)
    return vecs[:, :count]


def _row_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    out = x.copy()
    nz = norms[:, 0] > 0
    out[nz] = x[nz] / norms[nz]
    return out


def kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
) -> np.ndarray:
    """Lloyd's algorithm with distance-squared seeding and empty-cluster repair."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError("cluster count out of range")
    # seeding: first centroid uniform, the rest proportional to squared
    # distance from the nearest chosen centroid
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    d2 = ((pts - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = pts[rng.integers(n)]
        else:
            centroids[j] = pts[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((pts - centroids[j]) ** 2).sum(axis=1))

    labels = np.full(n, -1, dtype=int)
    for _ in range(max_iter):
        dist2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist2.argmin(axis=1)  # argmin ties go to the lower id
        # working copy so two empty clusters cannot both claim one point
        assigned_d = dist2[np.arange(n), new_labels].copy()
        for j in range(k):
            mask = new_labels == j
            if mask.any():
                centroids[j] = pts[mask].mean(axis=0)
            else:
                # reseed an empty cluster at the worst-assigned point
                far = int(assigned_d.argmax())
                centroids[j] = pts[far]
                new_labels[far] = j
                assigned_d[far] = -1.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def cluster_groups(
    midpoints: np.ndarray, cfg: ExperimentConfig, rng: np.random.Generator
) -> np.ndarray:
    """Group ids in [0, g_groups) for each pair, recomputed from scratch."""
    sim = similarity_matrix(midpoints, cfg.similarity_cutoff_m, cfg.similarity_scale_m)
    lap = normalized_laplacian(sim)
    emb = smallest_eigenvectors(
        lap, cfg.g_groups, tol=cfg.jacobi_tol, max_sweeps=cfg.jacobi_max_sweeps
    )
    return kmeans(_row_normalize(emb), cfg.g_groups, rng, max_iter=cfg.kmeans_max_iter)
