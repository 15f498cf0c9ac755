"""Evaluation metrics: adjusted Rand index, cluster counts, alignment errors."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .losses import TransportPlan, _plan_matrix
from .sbm import ConnectivityMatrix, Labels

#: Clusters with mass above this threshold count as selected.
MASS_TOL = 1e-6

#: Exhaustive permutation alignment is used up to this many clusters.
EXHAUSTIVE_K = 8

#: Value used to pad connectivity matrices of unequal size before alignment.
PAD_VALUE = 0.5


@dataclass(frozen=True)
class EvalReport:
    """Per-fit evaluation summary against planted ground truth."""

    ari: float
    k_hat: int
    theta_error: float
    label_accuracy: float
    notes: str = ""


def _label_values(labels) -> np.ndarray:
    if isinstance(labels, Labels):
        return labels.values
    arr = np.asarray(labels)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("labels must be a vector of integers")
    return arr.astype(np.int64)


def _comb2(x: int) -> int:
    return x * (x - 1) // 2


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index between two partitions of the same nodes.

    Pair counts are accumulated in exact integer arithmetic.  The score is
    1 for identical partitions, has expectation 0 under independent random
    partitions, and can go negative for partitions that disagree more than
    chance would.
    """
    a = _label_values(labels_a)
    b = _label_values(labels_b)
    if a.shape != b.shape:
        raise ValueError("partitions must label the same nodes")
    n = int(a.size)
    if n == 0:
        raise ValueError("partitions must be nonempty")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka = int(ai.max()) + 1
    kb = int(bi.max()) + 1
    contingency = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(contingency, (ai, bi), 1)
    sum_cells = int(sum(_comb2(int(x)) for x in contingency.ravel()))
    sum_rows = int(sum(_comb2(int(x)) for x in contingency.sum(axis=1)))
    sum_cols = int(sum(_comb2(int(x)) for x in contingency.sum(axis=0)))
    total = _comb2(n)
    # exact integers: ari = (cells - rows*cols/total) / ((rows+cols)/2 - rows*cols/total)
    numerator = sum_cells * total - sum_rows * sum_cols
    denominator = (sum_rows + sum_cols) * total - 2 * sum_rows * sum_cols
    if denominator == 0:
        return 1.0
    return 2.0 * numerator / denominator


def hard_labels(plan) -> Labels:
    """Row-wise argmax labels of a plan; ties go to the lowest index."""
    t = _plan_matrix(plan)
    return Labels(np.argmax(t, axis=1), t.shape[1])


def selected_k(plan, mass_tol: float = MASS_TOL) -> int:
    """Number of clusters whose total mass exceeds ``mass_tol``."""
    t = _plan_matrix(plan)
    k = t.shape[1]
    if not 0.0 < mass_tol < 1.0 / k:
        raise ValueError("mass_tol must lie in (0, 1/k)")
    return int(np.count_nonzero(t.sum(axis=0) > mass_tol))


def label_accuracy(labels_hat, labels_star) -> float:
    """Fraction of nodes labeled correctly under the best cluster matching."""
    a = _label_values(labels_hat)
    b = _label_values(labels_star)
    if a.shape != b.shape:
        raise ValueError("partitions must label the same nodes")
    k = int(max(a.max(), b.max())) + 1
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (a, b), 1)
    rows, cols = linear_sum_assignment(-confusion)
    return float(confusion[rows, cols].sum()) / a.size


def _connectivity_values(conn) -> np.ndarray:
    if isinstance(conn, ConnectivityMatrix):
        return np.asarray(conn.raw, dtype=np.float64)
    return np.asarray(conn, dtype=np.float64)


def _pad(theta: np.ndarray, k: int) -> np.ndarray:
    if theta.shape[0] == k:
        return theta
    out = np.full((k, k), PAD_VALUE)
    m = theta.shape[0]
    out[:m, :m] = theta
    return out


def connectivity_error(conn_hat, conn_star, labels_hat, labels_star) -> float:
    """Frobenius error between connectivities after aligning cluster labels.

    Clusters that the fitted labels never use are dropped first, so a fit
    that selected fewer clusters than it searched is compared at its
    effective size.  The smaller matrix is padded to the larger with a
    neutral 0.5.  Up to 8 clusters the aligning permutation is found
    exhaustively; beyond that it comes from a maximum-agreement matching
    of the two label vectors.
    """
    theta_hat = _connectivity_values(conn_hat)
    theta_star = _connectivity_values(conn_star)
    z_hat = _label_values(labels_hat)
    z_star = _label_values(labels_star)
    if z_hat.shape != z_star.shape:
        raise ValueError("partitions must label the same nodes")
    active = np.unique(z_hat)
    theta_hat = theta_hat[np.ix_(active, active)]
    remap = {int(c): i for i, c in enumerate(active)}
    z_hat = np.array([remap[int(c)] for c in z_hat], dtype=np.int64)
    k = max(theta_hat.shape[0], theta_star.shape[0])
    theta_hat = _pad(theta_hat, k)
    theta_star = _pad(theta_star, k)
    if k <= EXHAUSTIVE_K:
        best = np.inf
        for perm in itertools.permutations(range(k)):
            p = np.array(perm)
            err = float(np.linalg.norm(theta_hat[np.ix_(p, p)] - theta_star))
            best = min(best, err)
        return best
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (z_hat, z_star), 1)
    rows, cols = linear_sum_assignment(-confusion)
    sigma = np.empty(k, dtype=np.int64)
    sigma[cols] = rows
    aligned = theta_hat[np.ix_(sigma, sigma)]
    return float(np.linalg.norm(aligned - theta_star))


def aligned_plan_error(plan, labels_star) -> float:
    """L1 distance from a plan to the planted hard plan, up to relabeling.

    Compares against the plan that puts each node's 1/n mass on its
    planted cluster, minimized over cluster permutations (exhaustively up
    to 8 clusters, otherwise via maximum-agreement matching).
    """
    t = _plan_matrix(plan)
    z = _label_values(labels_star)
    n, k = t.shape
    if z.size != n:
        raise ValueError("labels and plan disagree on n")
    if int(z.max()) >= k:
        raise ValueError("plan has fewer clusters than the labels use")
    target = np.zeros((n, k))
    target[np.arange(n), z] = 1.0 / n
    if k <= EXHAUSTIVE_K:
        best = np.inf
        for perm in itertools.permutations(range(k)):
            err = float(np.abs(t[:, perm] - target).sum())
            best = min(best, err)
        return best
    z_hat = np.argmax(t, axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (z_hat, z), 1)
    rows, cols = linear_sum_assignment(-confusion)
    perm = np.arange(k)
    perm[rows] = cols
    inv = np.empty(k, dtype=np.int64)
    inv[perm] = np.arange(k)
    return float(np.abs(t[:, inv] - target).sum())
