"""Sparse semi-relaxed Gromov-Wasserstein solvers for block models.

Three nested loops:

* :func:`fw_solve` runs Frank-Wolfe on the quadratic assignment objective
  plus an optional linear cost over plans whose rows each carry 1/n mass.
  The linear minimization oracle is row-wise (mass goes to the cheapest
  cluster), and the step size comes from an exact quadratic fit through
  the objective at step sizes {0, 1/2, 1}.
* :func:`mm_solve` adds ``sparsity * sum_k sqrt(q_k)`` on the cluster
  masses.  Each round linearizes the concave penalty at the current plan
  and hands the resulting linear cost to Frank-Wolfe (warm-started), which
  makes the true penalized objective non-increasing.
* :func:`bcd_fit` alternates closed-form connectivity updates with
  :func:`mm_solve` until the penalized objective stalls.  When the
  sparsity penalty is active it also proposes whole-cluster merges after
  every plan solve, accepting one only when it strictly lowers the
  penalized objective under a refit connectivity.  The row-wise oracle
  cannot see such moves (the square-root penalty gain is second order in
  any single row), so without them the solver parks in plans that split
  one true cluster across several columns.

ELBO helpers for the Bernoulli block model live here too, because the
penalized objective and the variational bound are two views of the same
quantity (see :func:`entropic_objective`).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .losses import (
    DENOMINATOR_FLOOR,
    CompositeLoss,
    CostKernel,
    TransportPlan,
    _plan_matrix,
    closed_form_connectivity,
    make_loss,
)
from .metrics import hard_labels, selected_k
from .sbm import AdjacencyMatrix, ConnectivityMatrix, Labels, Proportions


class SolverError(RuntimeError):
    """Raised when an objective turns non-finite mid-solve."""


@dataclass(frozen=True)
class SolverOptions:
    """Iteration caps and tolerances for the three solver loops.

    ``sparsity`` is the strength of the square-root cluster-mass penalty
    (0 disables it); ``mass_floor`` guards the penalty linearization
    against division by zero on empty clusters.
    """

    fw_max_iters: int = 500
    fw_rel_tol: float = 1e-9
    mm_max_iters: int = 50
    mm_rel_tol: float = 1e-7
    bcd_max_iters: int = 50
    bcd_rel_tol: float = 1e-8
    sparsity: float = 0.0
    mass_floor: float = 1e-16

    def __post_init__(self):
        if min(self.fw_max_iters, self.mm_max_iters, self.bcd_max_iters) < 1:
            raise ValueError("iteration caps must be positive")
        if min(self.fw_rel_tol, self.mm_rel_tol, self.bcd_rel_tol) <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.sparsity < 0.0:
            raise ValueError("sparsity must be nonnegative")
        if self.mass_floor <= 0.0:
            raise ValueError("mass_floor must be positive")


@dataclass
class FitResult:
    """Outcome of :func:`bcd_fit`.

    ``loss_history`` records the penalized objective once per outer
    iteration and is non-increasing.  ``k_hat`` counts clusters whose mass
    exceeds 1e-6.  ``degenerate`` is set when the fitted connectivity has
    indistinguishable clusters (e.g. on an empty graph).
    """

    plan: TransportPlan
    connectivity: ConnectivityMatrix
    loss_history: list[float]
    k_hat: int
    labels: Labels
    runtime_ms: float
    degenerate: bool = False


def column_mass_penalty(plan) -> float:
    """Square-root cluster-mass penalty ``sum_k sqrt(q_k)``.

    Concave in the masses: between 1 (single surviving cluster) and
    ``sqrt(k)`` (all clusters equally loaded), so smaller means sparser.
    """
    q = _plan_matrix(plan).sum(axis=0)
    return float(np.sum(np.sqrt(np.maximum(q, 0.0))))


def penalty_linearization(plan, sparsity: float, mass_floor: float = 1e-16) -> np.ndarray:
    """Row-constant tangent cost of the penalty at the current plan.

    Column k of the result equals ``sparsity / (2 sqrt(max(q_k, mass_floor)))``,
    the exact gradient of the penalty wherever masses exceed the floor.
    Nearly dead clusters therefore price any returning mass prohibitively.
    """
    t = _plan_matrix(plan)
    if sparsity < 0.0:
        raise ValueError("sparsity must be nonnegative")
    q = np.maximum(t.sum(axis=0), mass_floor)
    row = sparsity / (2.0 * np.sqrt(q))
    return np.broadcast_to(row, t.shape).copy()


def _pair_summaries(kernel: CostKernel, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Self-pair-free summaries behind the closed-form connectivity.

    Returns ``(s, d, q)`` where ``s[k, l]`` is the plan-weighted sum of
    ``h1(A)`` over pairs i != j, ``d[k, l]`` the matching pair mass, and
    ``q`` the cluster masses.  Both matrices are additive under cluster
    merges: adding row and column j into i yields the summaries of the
    plan with cluster j poured into cluster i.
    """
    q = t.sum(axis=0)
    s = t.T @ kernel.ha @ t - t.T @ (kernel.ha_diag[:, None] * t)
    d = np.outer(q, q) - t.T @ t
    return 0.5 * (s + s.T), 0.5 * (d + d.T), q


def _summary_score(
    s: np.ndarray,
    d: np.ndarray,
    q: np.ndarray,
    loss: CompositeLoss,
    sparsity: float,
    f1_term: float,
) -> float:
    """Penalized objective at the closed-form connectivity of the summaries.

    Mirrors :func:`gwsbm.losses.closed_form_connectivity` cell by cell
    (denominator floor, dead-cell placeholder, clamping), then evaluates
    ``f1_term + sum(f2(theta) d - h2(theta) s)`` which equals the
    quadratic objective because rows of the plan all carry mass 1/n.
    """
    inactive = d <= DENOMINATOR_FLOOR
    ratio = np.where(inactive, 1.0, s / np.where(inactive, 1.0, d))
    if loss.kind != "squared":
        ratio = np.maximum(ratio, 0.0)
    theta = np.asarray(loss.theta_inverse_map(ratio), dtype=np.float64)
    lo, hi = loss.theta_clamp
    theta = np.clip(theta, lo, hi)
    theta = np.where(inactive, 0.5, theta)
    f2t = np.asarray(loss.f2(theta), dtype=np.float64)
    h2t = np.asarray(loss.h2(theta), dtype=np.float64)
    quad = f1_term + float(np.sum(f2t * d - h2t * s))
    return quad + sparsity * float(np.sum(np.sqrt(np.maximum(q, 0.0))))


def _merge_rowcol(mat: np.ndarray, i: int, j: int) -> np.ndarray:
    out = mat.copy()
    out[i, :] += out[j, :]
    out[:, i] += out[:, j]
    return np.delete(np.delete(out, j, axis=0), j, axis=1)


def _merge_step(
    kernel: CostKernel,
    adj,
    loss: CompositeLoss,
    t: np.ndarray,
    opts: SolverOptions,
    on_iterate=None,
) -> np.ndarray:
    """Pour one cluster into another while that strictly lowers the score.

    The score is the penalized objective with the connectivity refit to
    the candidate plan, so an accepted merge is a guaranteed descent step
    of the full alternating scheme.  Candidates are ranked with the cheap
    summary formula above; the best one is re-scored through the exact
    objective before being accepted, which keeps the loss history
    provably non-increasing regardless of floating-point dust.
    """
    lam = opts.sparsity
    conn = closed_form_connectivity(adj, t, loss)
    pen = kernel.objective(t, loss.prepare_theta(conn)) + lam * column_mass_penalty(t)
    f1_term = float(kernel.fa.sum() - kernel.fa_diag.sum()) / float(kernel.n) ** 2
    while True:
        s, d, q = _pair_summaries(kernel, t)
        live = np.flatnonzero(q > 1e-12)
        if live.size < 2:
            return t
        current = _summary_score(s, d, q, loss, lam, f1_term)
        best_gain, best_pair = 0.0, None
        for a in range(live.size):
            i = int(live[a])
            for b in range(a + 1, live.size):
                j = int(live[b])
                cand = _summary_score(
                    _merge_rowcol(s, i, j),
                    _merge_rowcol(d, i, j),
                    np.delete(q + (np.arange(q.size) == i) * q[j], j),
                    loss,
                    lam,
                    f1_term,
                )
                gain = current - cand
                if gain > best_gain:
                    best_gain, best_pair = gain, (i, j)
        if best_pair is None:
            return t
        i, j = best_pair
        merged = t.copy()
        merged[:, i] += merged[:, j]
        merged[:, j] = 0.0
        merged_conn = closed_form_connectivity(adj, merged, loss)
        merged_pen = kernel.objective(merged, loss.prepare_theta(merged_conn))
        merged_pen += lam * column_mass_penalty(merged)
        if not merged_pen < pen:
            return t
        t, pen = merged, merged_pen
        if on_iterate is not None:
            on_iterate(t, pen)


def _check_finite(value: float, where: str) -> float:
    if not np.isfinite(value):
        raise SolverError(f"non-finite objective in {where}; "
                          "check connectivity values against the loss domain")
    return value


def _fw_core(
    kernel: CostKernel,
    theta: np.ndarray,
    t0: np.ndarray,
    linear: np.ndarray | None,
    opts: SolverOptions,
    on_iterate=None,
) -> tuple[np.ndarray, float]:
    """Frank-Wolfe on <cost(t), t> + <linear, t> over row-constrained plans."""
    n, k = t0.shape
    t = np.array(t0, dtype=np.float64)
    m = kernel.cost(t, theta)
    obj = float(np.vdot(m, t))
    if linear is not None:
        obj += float(np.vdot(linear, t))
    _check_finite(obj, "fw_solve")
    if on_iterate is not None:
        on_iterate(t, obj)
    rows = np.arange(n)
    unit = 1.0 / n
    for _ in range(opts.fw_max_iters):
        grad = 2.0 * m if linear is None else 2.0 * m + linear
        cols = np.argmin(grad, axis=1)
        x = np.zeros_like(t)
        x[rows, cols] = unit
        mx = kernel.cost(x, theta)
        f0 = obj
        f1 = float(np.vdot(mx, x))
        tm = 0.5 * (t + x)
        f_half = kernel.objective(tm, theta)
        if linear is not None:
            f1 += float(np.vdot(linear, x))
            f_half += float(np.vdot(linear, tm))
        # exact quadratic through (0, f0), (1/2, f_half), (1, f1)
        a = 2.0 * (f1 + f0 - 2.0 * f_half)
        b = f1 - f0 - a
        if a > 0.0:
            gamma = min(1.0, max(0.0, -b / (2.0 * a)))
        else:
            gamma = 1.0 if f1 <= f0 else 0.0
        if gamma == 0.0:
            break
        t = (1.0 - gamma) * t + gamma * x
        # the cost application is linear in the plan, so blend it too
        m = (1.0 - gamma) * m + gamma * mx
        obj = _check_finite((a * gamma + b) * gamma + f0, "fw_solve")
        if on_iterate is not None:
            on_iterate(t, obj)
        if abs(f0 - obj) <= opts.fw_rel_tol * max(abs(f0), 1e-15):
            break
    return t, obj


def _prepared(adj, loss: CompositeLoss, conn) -> tuple[CostKernel, np.ndarray]:
    kernel = CostKernel(adj, loss)
    theta = loss.prepare_theta(conn)
    return kernel, theta


def fw_solve(
    adj,
    loss: CompositeLoss,
    conn,
    plan0: TransportPlan,
    linear_cost: np.ndarray | None = None,
    opts: SolverOptions | None = None,
    on_iterate=None,
) -> TransportPlan:
    """Minimize the objective at fixed connectivity from a feasible start.

    ``linear_cost`` (n x k) is added linearly; it carries the penalty
    linearization during MM rounds.  Ties in the row-wise oracle resolve
    to the lowest cluster index, so runs are deterministic.
    """
    opts = opts or SolverOptions()
    kernel, theta = _prepared(adj, loss, conn)
    t0 = _plan_matrix(plan0)
    if t0.shape[0] != kernel.n or theta.shape[0] != t0.shape[1]:
        raise ValueError("plan, adjacency and connectivity shapes disagree")
    if linear_cost is not None:
        linear_cost = np.asarray(linear_cost, dtype=np.float64)
        if linear_cost.shape != t0.shape:
            raise ValueError("linear cost must match the plan shape")
    t, _ = _fw_core(kernel, theta, t0, linear_cost, opts, on_iterate)
    return TransportPlan(t)


def _mm_core(
    kernel: CostKernel,
    theta: np.ndarray,
    t0: np.ndarray,
    opts: SolverOptions,
    on_iterate=None,
) -> np.ndarray:
    if opts.sparsity == 0.0:
        t, _ = _fw_core(kernel, theta, t0, None, opts, on_iterate)
        return t
    t = np.array(t0, dtype=np.float64)
    pen = kernel.objective(t, theta) + opts.sparsity * column_mass_penalty(t)
    _check_finite(pen, "mm_solve")
    for _ in range(opts.mm_max_iters):
        linear = penalty_linearization(t, opts.sparsity, opts.mass_floor)
        t, _ = _fw_core(kernel, theta, t, linear, opts, on_iterate)
        new_pen = kernel.objective(t, theta) + opts.sparsity * column_mass_penalty(t)
        _check_finite(new_pen, "mm_solve")
        done = abs(pen - new_pen) <= opts.mm_rel_tol * max(abs(pen), 1e-15)
        pen = new_pen
        if done:
            break
    return t


def mm_solve(
    adj,
    loss: CompositeLoss,
    conn,
    plan0: TransportPlan,
    opts: SolverOptions | None = None,
    on_iterate=None,
) -> TransportPlan:
    """Minimize objective plus sparsity penalty by majorize-minimize rounds.

    Each round replaces the concave penalty with its tangent at the
    current plan and calls :func:`fw_solve` warm-started, stopping when the
    true penalized objective stalls.  With ``sparsity == 0`` this is a
    single plain Frank-Wolfe solve.
    """
    opts = opts or SolverOptions()
    kernel, theta = _prepared(adj, loss, conn)
    t0 = _plan_matrix(plan0)
    if t0.shape[0] != kernel.n or theta.shape[0] != t0.shape[1]:
        raise ValueError("plan, adjacency and connectivity shapes disagree")
    return TransportPlan(_mm_core(kernel, theta, t0, opts, on_iterate))


def bcd_fit(
    adj,
    loss: CompositeLoss,
    plan0: TransportPlan,
    opts: SolverOptions | None = None,
    on_iterate=None,
) -> FitResult:
    """Alternate closed-form connectivity updates with plan solves.

    Every step — the connectivity refit, the majorize-minimize plan
    solve, and the descent-only cluster merges that follow it whenever
    the sparsity penalty is active — can only lower the penalized
    objective, so ``loss_history`` (recorded against the freshly refit
    connectivity once per round) is non-increasing.  Stops when its
    relative change drops below ``bcd_rel_tol`` or after
    ``bcd_max_iters`` rounds.
    """
    opts = opts or SolverOptions()
    start = time.perf_counter()
    kernel = CostKernel(adj, loss)
    t = _plan_matrix(plan0).copy()
    if t.shape[0] != kernel.n:
        raise ValueError("plan and adjacency disagree on n")
    history: list[float] = []
    conn = closed_form_connectivity(adj, t, loss)
    prev = None
    for _ in range(opts.bcd_max_iters):
        theta = loss.prepare_theta(conn)
        t = _mm_core(kernel, theta, t, opts, on_iterate)
        if opts.sparsity > 0.0:
            t = _merge_step(kernel, adj, loss, t, opts, on_iterate)
        conn = closed_form_connectivity(adj, t, loss)
        pen = kernel.objective(t, loss.prepare_theta(conn))
        pen += opts.sparsity * column_mass_penalty(t)
        _check_finite(pen, "bcd_fit")
        history.append(pen)
        if prev is not None and abs(prev - pen) <= opts.bcd_rel_tol * max(abs(prev), 1e-15):
            break
        prev = pen
    plan = TransportPlan(t)
    runtime_ms = (time.perf_counter() - start) * 1e3
    return FitResult(
        plan=plan,
        connectivity=conn,
        loss_history=history,
        k_hat=selected_k(plan),
        labels=hard_labels(plan),
        runtime_ms=runtime_ms,
        degenerate=not conn.has_distinct_profiles(),
    )


def elbo_value(resp, adj, conn: ConnectivityMatrix, props: Proportions) -> float:
    """Evidence lower bound of the Bernoulli block model.

    ``resp`` holds row-stochastic assignment responsibilities.  The bound
    is the expected edge log-likelihood (each unordered pair counted once,
    no self pairs) plus the assignment entropy plus the expected log prior
    under ``props``.  The convention 0 log 0 = 0 applies throughout.
    """
    resp = np.asarray(resp, dtype=np.float64)
    if resp.ndim != 2:
        raise ValueError("responsibilities must be 2-d")
    if np.any(resp < 0.0) or np.max(np.abs(resp.sum(axis=1) - 1.0)) > 1e-8:
        raise ValueError("responsibility rows must be probability vectors")
    if resp.shape[1] != props.k or resp.shape[1] != conn.k:
        raise ValueError("responsibilities, proportions and connectivity disagree on k")
    loss = make_loss("bernoulli_nll")
    kernel = CostKernel(adj, loss)
    if resp.shape[0] != kernel.n:
        raise ValueError("responsibilities and adjacency disagree on n")
    theta = loss.prepare_theta(conn)
    col = resp.sum(axis=0)
    w = props.weights
    if np.any((w == 0.0) & (col > 0.0)):
        raise ValueError("a cluster with zero prior mass carries responsibility")
    quad = float(np.vdot(kernel.cost(resp, theta), resp))
    entropy = -float(xlogy(resp, resp).sum())
    prior = float(xlogy(col, w).sum())
    return -0.5 * quad + entropy + prior


def entropic_objective(plan, adj, conn: ConnectivityMatrix) -> float:
    """Entropy-corrected Bernoulli objective of a plan.

    Equals the plain objective minus ``(2/n) * (H(plan) - H(masses))``.
    Maximizing the block-model ELBO over hard-prior proportions is the
    same problem as minimizing this quantity over feasible plans.
    """
    t = _plan_matrix(plan)
    n = t.shape[0]
    loss = make_loss("bernoulli_nll")
    kernel = CostKernel(adj, loss)
    theta = loss.prepare_theta(conn)
    lp = float(np.vdot(kernel.cost(t, theta), t))
    h_plan = -float(xlogy(t, t).sum())
    q = t.sum(axis=0)
    h_mass = -float(xlogy(q, q).sum())
    return lp - (2.0 / n) * (h_plan - h_mass)
