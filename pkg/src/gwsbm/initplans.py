"""Starting plans for the solvers: spectral embedding plus k-means.

The embedding uses the top-k left singular vectors of the adjacency
matrix.  Because the matrix is symmetric these are its eigenvectors
ordered by absolute eigenvalue; for large graphs they are approximated by
a seeded randomized subspace iteration so no full decomposition is ever
formed.
"""

from __future__ import annotations

import numpy as np

from .losses import TransportPlan
from .sbm import AdjacencyMatrix, Labels

#: Graphs at least this large use the randomized eigensolver.
RANDOMIZED_CUTOFF = 1000

#: Oversampling columns and power steps for the randomized solver.
OVERSAMPLE = 8
POWER_STEPS = 30

#: Uniform mass blended into hard starting plans to keep them interior.
BLEND_EPS = 1e-3


def labels_to_plan(labels: Labels, k: int | None = None) -> TransportPlan:
    """Hard assignment plan: row i puts its full 1/n mass on labels[i]."""
    if k is None:
        k = labels.k
    if k < labels.k:
        raise ValueError("target k smaller than the label range")
    n = labels.n
    t = np.zeros((n, k))
    t[np.arange(n), labels.values] = 1.0 / n
    return TransportPlan(t)


def uniform_plan(n: int, k: int) -> TransportPlan:
    """Plan spreading every row's mass evenly over all clusters."""
    return TransportPlan(np.full((n, k), 1.0 / (n * k)))


def blend_plan(plan: TransportPlan, eps: float = BLEND_EPS) -> TransportPlan:
    """Mix a plan with the uniform plan; keeps rows feasible exactly."""
    n, k = plan.n, plan.k
    return TransportPlan((1.0 - eps) * plan.matrix + eps / (n * k))


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iters: int):
    """Lloyd iterations from given centers.

    Returns (labels, centers, inertia_history).  A cluster that empties
    out steals the point currently farthest from its assigned center and
    relocates there, so the recorded inertia never increases.
    """
    n, _ = points.shape
    k = centers.shape[0]
    history: list[float] = []
    labels = None
    sq = np.einsum("ij,ij->i", points, points)
    for _ in range(max_iters):
        d2 = sq[:, None] - 2.0 * points @ centers.T + np.einsum("ij,ij->i", centers, centers)[None, :]
        np.maximum(d2, 0.0, out=d2)
        new_labels = np.argmin(d2, axis=1)
        best = d2[np.arange(n), new_labels]
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(np.argmax(best))
                new_labels[far] = c
                centers[c] = points[far]
                best[far] = 0.0
        history.append(float(best.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    return labels, centers, history


def _plusplus_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centers by squared distance."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining points coincide with a center; pick uniformly
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    n_restarts: int = 10,
    max_iters: int = 100,
) -> Labels:
    """Best-of-``n_restarts`` k-means clustering of the rows of ``points``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError("points must be a nonempty 2-d array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError("k must satisfy 1 <= k <= n")
    root = np.random.SeedSequence(seed)
    best_labels = None
    best_inertia = np.inf
    for child in root.spawn(n_restarts):
        rng = np.random.default_rng(child)
        centers = _plusplus_centers(points, k, rng)
        labels, _, history = _lloyd(points, centers, max_iters)
        if history[-1] < best_inertia:
            best_inertia = history[-1]
            best_labels = labels
    return Labels(best_labels, k)


def _top_abs_eigvecs(a: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Top-k eigenvectors of a symmetric matrix ordered by |eigenvalue|."""
    n = a.shape[0]
    if n < RANDOMIZED_CUTOFF:
        w, v = np.linalg.eigh(a)
        order = np.argsort(-np.abs(w))
        return v[:, order[:k]]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5BEC]))
    sketch = min(n, k + OVERSAMPLE)
    q, _ = np.linalg.qr(rng.standard_normal((n, sketch)))
    for _ in range(POWER_STEPS):
        q, _ = np.linalg.qr(a @ q)
    small = q.T @ a @ q
    w, v = np.linalg.eigh(0.5 * (small + small.T))
    order = np.argsort(-np.abs(w))
    return q @ v[:, order[:k]]


def spectral_init(adj: AdjacencyMatrix, k: int, seed: int) -> TransportPlan:
    """Spectral starting plan: embed, cluster, then soften.

    Nodes are embedded with the top-k singular vectors of the adjacency
    matrix (unscaled), clustered by k-means, and the resulting hard plan
    is blended with a small uniform component so every cluster keeps a
    strictly positive starting mass.
    """
    n = adj.n
    if not 1 <= k <= n:
        raise ValueError("k must satisfy 1 <= k <= n")
    vecs = _top_abs_eigvecs(adj.entries, k, seed)
    labels = kmeans(vecs, k, seed)
    return blend_plan(labels_to_plan(labels, k))
