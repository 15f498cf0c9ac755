"""Composite inner losses and the factored quadratic assignment cost.

Every supported loss decomposes as

    loss(a, b) = f1(a) + f2(b) - h1(a) * h2(b)

which lets the cost application

    M[i, k] = sum_{j != i} sum_l loss(A[i, j], theta[k, l]) * T[j, l]

be assembled from three matrix products instead of a four-index tensor:
``f1(A) @ rowsum``, ``f2(theta) @ colsum`` and ``h1(A) @ T @ h2(theta).T``,
followed by an exact correction that removes the diagonal (i == j) terms.
The total cost is O(n^2 k + n k^2) time and O(n^2) memory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .sbm import AdjacencyMatrix, ConnectivityMatrix

LOSS_KINDS = ("squared", "bernoulli_nll", "poisson_nll", "exponential_nll")

#: Row sums of a transport plan must match 1/n this tightly.
ROW_SUM_TOL = 1e-10

#: Pair-mass floor below which a closed-form connectivity cell is inactive.
DENOMINATOR_FLOOR = 1e-12

_MARGIN = 1e-6


@dataclass(frozen=True)
class CompositeLoss:
    """A decomposable inner loss together with its parameter domain.

    ``b_lo``/``b_hi`` bound the open domain of the second argument;
    ``theta_clamp`` is the closed interval closed-form connectivity updates
    are clipped into; ``theta_inverse_map`` turns a weighted mean of
    ``h1(a)`` values into the optimal second argument.
    """

    kind: str
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    h1: Callable[[np.ndarray], np.ndarray]
    h2: Callable[[np.ndarray], np.ndarray]
    b_lo: float
    b_hi: float
    theta_inverse_map: Callable[[np.ndarray], np.ndarray]
    theta_clamp: tuple[float, float]

    def __call__(self, a, b):
        """Evaluate loss(a, b) elementwise."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return self.f1(a) + self.f2(b) - self.h1(a) * self.h2(b)

    def contains(self, values) -> bool:
        """True when all values lie strictly inside the parameter domain."""
        v = np.asarray(values, dtype=np.float64)
        return bool(np.all(v > self.b_lo) and np.all(v < self.b_hi))

    def prepare_theta(self, conn) -> np.ndarray:
        """Extract loss-appropriate connectivity values.

        ``ConnectivityMatrix`` inputs are clamped into the loss domain
        (raw values pass through for the squared loss, whose domain is all
        of R).  Plain arrays are taken as-is and must already be valid,
        which signals the need for clamping upstream.
        """
        if isinstance(conn, ConnectivityMatrix):
            if self.kind == "squared":
                vals = conn.raw
            elif self.kind == "bernoulli_nll":
                vals = conn.entries
            else:
                vals = np.maximum(conn.raw, conn.prob_margin)
        else:
            vals = np.asarray(conn, dtype=np.float64)
            if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
                raise ValueError("connectivity values must form a square matrix")
            if not self.contains(vals):
                raise ValueError(
                    f"connectivity entries escape the {self.kind} domain; "
                    "clamp them upstream"
                )
        return np.asarray(vals, dtype=np.float64)


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def _zeros_like(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def make_loss(kind: str) -> CompositeLoss:
    """Return the named composite loss.

    Kinds: ``squared`` (a - b)^2, ``bernoulli_nll``, ``poisson_nll`` and
    ``exponential_nll`` (rate parameterization, ``loss(a, b) = ab - log b``).
    """
    if kind == "squared":
        return CompositeLoss(
            kind=kind,
            f1=lambda a: a**2,
            f2=lambda b: b**2,
            h1=_identity,
            h2=lambda b: 2.0 * b,
            b_lo=-np.inf,
            b_hi=np.inf,
            theta_inverse_map=_identity,
            theta_clamp=(-np.inf, np.inf),
        )
    if kind == "bernoulli_nll":
        return CompositeLoss(
            kind=kind,
            f1=_zeros_like,
            f2=lambda b: -np.log1p(-b),
            h1=_identity,
            h2=lambda b: np.log(b) - np.log1p(-b),
            b_lo=0.0,
            b_hi=1.0,
            theta_inverse_map=_identity,
            theta_clamp=(_MARGIN, 1.0 - _MARGIN),
        )
    if kind == "poisson_nll":
        return CompositeLoss(
            kind=kind,
            f1=lambda a: gammaln(np.asarray(a, dtype=np.float64) + 1.0),
            f2=_identity,
            h1=_identity,
            h2=np.log,
            b_lo=0.0,
            b_hi=np.inf,
            theta_inverse_map=_identity,
            theta_clamp=(_MARGIN, np.inf),
        )
    if kind == "exponential_nll":
        return CompositeLoss(
            kind=kind,
            f1=_zeros_like,
            f2=lambda b: -np.log(b),
            h1=_identity,
            h2=lambda b: -b,
            b_lo=0.0,
            b_hi=np.inf,
            theta_inverse_map=lambda x: 1.0 / np.maximum(x, _MARGIN),
            theta_clamp=(_MARGIN, 1.0 / _MARGIN),
        )
    raise ValueError(f"unknown loss kind: {kind!r}")


@dataclass(frozen=True)
class TransportPlan:
    """A soft assignment of n nodes to k clusters.

    Rows are nonnegative and each sums to 1/n, so column sums form a
    probability vector over clusters (the cluster masses).
    """

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.matrix, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("plan must be a nonempty 2-d array")
        if not np.isfinite(arr).all():
            raise ValueError("plan entries must be finite")
        if np.any(arr < 0.0):
            raise ValueError("plan entries must be nonnegative")
        n = arr.shape[0]
        rows = arr.sum(axis=1)
        if np.max(np.abs(rows - 1.0 / n)) > ROW_SUM_TOL:
            raise ValueError("plan rows must each sum to 1/n within 1e-10")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise ValueError("plan total mass must be 1 within 1e-9")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    def column_masses(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


def _plan_matrix(plan) -> np.ndarray:
    if isinstance(plan, TransportPlan):
        return plan.matrix
    return np.asarray(plan, dtype=np.float64)


def _adjacency_matrix(adj) -> np.ndarray:
    if isinstance(adj, AdjacencyMatrix):
        return adj.entries
    return np.asarray(adj, dtype=np.float64)


class CostKernel:
    """Caches the per-graph arrays needed to apply the pairwise cost.

    Building the kernel evaluates ``f1`` and ``h1`` on the full adjacency
    matrix once; afterwards each :meth:`cost` call only pays the matrix
    products that depend on the current plan and connectivity.
    """

    def __init__(self, adj, loss: CompositeLoss):
        a = _adjacency_matrix(adj)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        self.loss = loss
        self.n = a.shape[0]
        self.a = a
        self.fa = np.asarray(loss.f1(a), dtype=np.float64)
        self.ha = np.asarray(loss.h1(a), dtype=np.float64)
        self.fa_diag = np.diagonal(self.fa).copy()
        self.ha_diag = np.diagonal(self.ha).copy()

    def cost(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Apply the cost tensor to a plan, excluding i == j terms exactly."""
        f2t = np.asarray(self.loss.f2(theta), dtype=np.float64)
        h2t = np.asarray(self.loss.h2(theta), dtype=np.float64)
        rows = t.sum(axis=1)
        cols = t.sum(axis=0)
        m = (self.fa @ rows)[:, None] + (f2t @ cols)[None, :] - (self.ha @ t) @ h2t.T
        # remove the j == i contribution that the products above include
        m -= self.fa_diag[:, None] * rows[:, None]
        m -= t @ f2t.T
        m += self.ha_diag[:, None] * (t @ h2t.T)
        return m

    def objective(self, t: np.ndarray, theta: np.ndarray) -> float:
        """Quadratic assignment objective <cost(t), t>."""
        return float(np.vdot(self.cost(t, theta), t))


def cost_application(adj, plan, conn, loss: CompositeLoss) -> np.ndarray:
    """Matrix M with M[i, k] = sum_{j != i, l} loss(A[i, j], theta[k, l]) T[j, l]."""
    t = _plan_matrix(plan)
    theta = loss.prepare_theta(conn)
    kernel = CostKernel(adj, loss)
    if t.shape[0] != kernel.n:
        raise ValueError("plan and adjacency disagree on n")
    if theta.shape[0] != t.shape[1]:
        raise ValueError("plan and connectivity disagree on k")
    m = kernel.cost(t, theta)
    if not np.isfinite(m).all():
        raise FloatingPointError("non-finite cost: connectivity outside loss domain?")
    return m


def srgw_objective(adj, plan, conn, loss: CompositeLoss) -> float:
    """Semi-relaxed Gromov-Wasserstein objective of a plan at fixed connectivity.

    Equals ``sum_{i != j, k, l} loss(A[i, j], theta[k, l]) T[i, k] T[j, l]``;
    diagonal (i == j) terms are excluded exactly.
    """
    t = _plan_matrix(plan)
    return float(np.vdot(cost_application(adj, t, conn, loss), t))


def closed_form_connectivity(
    adj,
    plan,
    loss: CompositeLoss,
    exclude_diagonal: bool = True,
    denominator_floor: float = DENOMINATOR_FLOOR,
) -> ConnectivityMatrix:
    """Connectivity matrix minimizing the objective at a fixed plan.

    Each cell is ``theta_inverse_map`` of the plan-weighted mean of
    ``h1(A)`` over node pairs, clipped into the loss clamp interval.  With
    ``exclude_diagonal`` (the default) both the weighted sum and the pair
    mass drop i == j terms, matching :func:`srgw_objective` exactly; the
    variant that keeps them uses the plain outer product of cluster masses
    as denominator.  Cells whose pair mass falls below ``denominator_floor``
    carry no information: they are set to 0.5 and flagged in ``inactive``.
    """
    t = _plan_matrix(plan)
    a = _adjacency_matrix(adj)
    if t.shape[0] != a.shape[0]:
        raise ValueError("plan and adjacency disagree on n")
    ha = np.asarray(loss.h1(a), dtype=np.float64)
    q = t.sum(axis=0)
    s = t.T @ ha @ t
    d = np.outer(q, q)
    if exclude_diagonal:
        s -= t.T @ (np.diagonal(ha)[:, None] * t)
        d -= t.T @ t
    s = 0.5 * (s + s.T)
    d = 0.5 * (d + d.T)
    inactive = d <= denominator_floor
    ratio = np.where(inactive, 1.0, s / np.where(inactive, 1.0, d))
    if loss.kind != "squared":
        # h1 is nonnegative on binary data; clip floating-point dust
        ratio = np.maximum(ratio, 0.0)
    theta = np.asarray(loss.theta_inverse_map(ratio), dtype=np.float64)
    lo, hi = loss.theta_clamp
    theta = np.clip(theta, lo, hi)
    theta = np.where(inactive, 0.5, theta)
    theta = 0.5 * (theta + theta.T)
    return ConnectivityMatrix(theta, inactive=inactive)
