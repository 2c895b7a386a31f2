"""Independent oracles: brute-force search and vertex enumeration.

These deliberately avoid the library's solve paths so tests compare two
routes to the same answer.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _grid_values(weight, rho, demand, center, cap, axes):
    """Objective on the cartesian grid spanned by per-node rate axes."""
    m = demand.shape[0]
    per_node = [0.5 * rho * ((axes[j][:, None] * demand[j] - center[j]) ** 2).sum(-1)
                for j in range(m)]
    if m == 1:
        total = axes[0]
        values = per_node[0].copy()
    else:
        total = axes[0][:, None] + axes[1][None, :]
        values = per_node[0][:, None] + per_node[1][None, :]
    with np.errstate(divide="ignore"):
        log_term = np.where(total > 0, np.log(np.maximum(total, 1e-300)), -np.inf)
    values = values - weight * log_term
    values = np.where((total > 0) & (total <= cap + 1e-12), values, math.inf)
    flat = int(np.argmin(values))
    idx = np.unravel_index(flat, values.shape)
    best = np.array([axes[j][idx[j]] for j in range(m)])
    return float(values[idx]), best


def grid_search_subproblem(weight, rho, demand, center, cap, resolution=1e-3):
    """Brute-force the proximal subproblem objective on a grid.

    Coarse pass over the whole box, fine pass at ``resolution`` around the
    coarse winner; the objective is convex, so the refinement cannot lose
    the optimum basin. Returns (best objective, best rates); one or two
    nodes only.
    """
    demand = np.asarray(demand, dtype=float)
    center = np.asarray(center, dtype=float)
    m = demand.shape[0]
    if m > 2:
        raise ValueError("grid oracle supports at most two nodes")
    alpha = (demand ** 2).sum(-1)
    beta = (demand * center).sum(-1)
    span = (np.maximum(beta, 0.0) / alpha).sum() \
        + math.sqrt(weight / rho * (1.0 / alpha).sum()) + 0.5
    if math.isfinite(cap):
        span = min(span, cap)
    coarse_step = max(span / 600.0, resolution)
    axes = [np.arange(0.0, span + coarse_step, coarse_step)] * m
    _, coarse_best = _grid_values(weight, rho, demand, center, cap, axes)
    axes = []
    for j in range(m):
        lo = max(0.0, coarse_best[j] - 3 * coarse_step)
        hi = min(span, coarse_best[j] + 3 * coarse_step)
        axes.append(np.arange(lo, hi + resolution, resolution))
    return _grid_values(weight, rho, demand, center, cap, axes)


def enumerate_lp_max(c, a_ub, b_ub, bounds, tol=1e-9):
    """Maximize over the polytope by enumerating basic feasible points.

    Every vertex lies on n active constraints drawn from the inequality rows
    and the finite variable bounds; solve each square system, keep feasible
    points, return the best. Exponential, so only for tiny LPs.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    rows = [(a_ub[k], b_ub[k]) for k in range(b_ub.size)]
    for i, (lo, hi) in enumerate(bounds):
        unit = np.zeros(n)
        unit[i] = 1.0
        if lo is not None and math.isfinite(lo):
            rows.append((unit.copy(), float(lo)))
        if hi is not None and math.isfinite(hi):
            rows.append((unit.copy(), float(hi)))
    best_val, best_x = -math.inf, None
    for combo in itertools.combinations(range(len(rows)), n):
        a = np.array([rows[k][0] for k in combo])
        b = np.array([rows[k][1] for k in combo])
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        x = np.linalg.solve(a, b)
        if (a_ub @ x > b_ub + tol).any():
            continue
        ok = True
        for i, (lo, hi) in enumerate(bounds):
            if lo is not None and x[i] < lo - tol:
                ok = False
                break
            if hi is not None and x[i] > hi + tol:
                ok = False
                break
        if not ok:
            continue
        val = float(c @ x)
        if val > best_val:
            best_val, best_x = val, x
    return best_val, best_x
