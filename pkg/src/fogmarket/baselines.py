"""Comparison allocation schemes: proportional split, welfare max, max-min.

These ignore prices: PROP divides every resource by budget shares, SWM
maximizes total utility, MM maximizes the worst utility. SWM and MM are
epigraph LPs over per-node request rates; allocations expand proportionally
to base demands, so every output is capacity-feasible by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .lp import DenseLP, solve_lp
from .market import MarketInstance, check_solvable, utilities
from .solution import EquilibriumSolution


class Scheme(str, Enum):
    GEG = "geg"
    EG = "eg"
    PROP = "prop"
    SWM = "swm"
    MM = "mm"

    @property
    def is_equilibrium(self) -> bool:
        return self in (Scheme.GEG, Scheme.EG)


def solve_prop(instance: MarketInstance) -> np.ndarray:
    """Budget-proportional split of every resource."""
    shares = instance.budgets / instance.budgets.sum()
    grid = np.broadcast_to(
        instance.capacities,
        (instance.num_services, instance.num_nodes, instance.num_resources))
    return shares[:, None, None] * grid


def _epigraph_lp(instance: MarketInstance, maxmin: bool):
    n, m, r = (instance.num_services, instance.num_nodes,
               instance.num_resources)
    active = instance.active_nodes
    demand = instance.demand_tensor
    limits = instance.utility_limits
    pairs = [(i, j) for i in range(n) for j in range(m) if active[i, j]]
    col = {pair: idx for idx, pair in enumerate(pairs)}
    nv = len(pairs)
    num = nv + n + (1 if maxmin else 0)
    c = np.zeros(num)
    if maxmin:
        c[-1] = 1.0
    else:
        c[nv:nv + n] = 1.0
    rows, rhs = [], []
    for i in range(n):
        row = np.zeros(num)
        row[nv + i] = 1.0
        for j in range(m):
            if active[i, j]:
                row[col[i, j]] = -1.0
        rows.append(row)
        rhs.append(0.0)                  # t_i <= sum_j v_ij
    for j in range(m):
        for rr in range(r):
            row = np.zeros(num)
            for i in range(n):
                if active[i, j]:
                    row[col[i, j]] = demand[i, j, rr]
            rows.append(row)
            rhs.append(1.0)              # capacity per item
    if maxmin:
        for i in range(n):
            row = np.zeros(num)
            row[-1] = 1.0
            row[nv + i] = -1.0
            rows.append(row)
            rhs.append(0.0)              # worst <= t_i
    bounds = [(0, None)] * nv
    bounds += [(0, None if math.isinf(limits[i]) else float(limits[i]))
               for i in range(n)]
    if maxmin:
        bounds.append((0, None))
    return DenseLP(c, a_ub=np.array(rows), b_ub=np.array(rhs),
                   bounds=bounds), col


def _expand(instance: MarketInstance, col: dict, x_lp: np.ndarray) -> np.ndarray:
    allocation = np.zeros((instance.num_services, instance.num_nodes,
                           instance.num_resources))
    demand = instance.demand_tensor
    for (i, j), idx in col.items():
        allocation[i, j] = x_lp[idx] * demand[i, j]
    return allocation


def solve_swm(instance: MarketInstance) -> np.ndarray:
    """Maximize the sum of (limit-capped) utilities, budgets ignored."""
    check_solvable(instance)
    lp, col = _epigraph_lp(instance, maxmin=False)
    res = solve_lp(lp)
    return _expand(instance, col, res.x)


def solve_mm(instance: MarketInstance) -> np.ndarray:
    """Maximize the lowest utility, budgets ignored (single-level max-min)."""
    check_solvable(instance)
    lp, col = _epigraph_lp(instance, maxmin=True)
    res = solve_lp(lp)
    return _expand(instance, col, res.x)


@dataclass(frozen=True, eq=False)
class SchemeRun:
    scheme: Scheme
    allocation: np.ndarray
    utilities: np.ndarray   # truncated at the utility limits
    equilibrium: EquilibriumSolution | None = None


def run_scheme(instance: MarketInstance, scheme: Scheme | str,
               **solver_kwargs) -> SchemeRun:
    """Produce an allocation under one of the five schemes.

    Solver keyword arguments are forwarded to the equilibrium solvers and
    ignored by the price-free baselines.
    """
    from .equilibrium import solve_eg, solve_geg  # late: avoids module cycle

    scheme = Scheme(scheme)
    if scheme is Scheme.GEG:
        sol = solve_geg(instance, **solver_kwargs)
        return SchemeRun(scheme, sol.allocation, sol.utilities, sol)
    if scheme is Scheme.EG:
        sol = solve_eg(instance, **solver_kwargs)
        return SchemeRun(scheme, sol.allocation, sol.utilities, sol)
    if scheme is Scheme.PROP:
        allocation = solve_prop(instance)
    elif scheme is Scheme.SWM:
        allocation = solve_swm(instance)
    else:
        allocation = solve_mm(instance)
    return SchemeRun(scheme, allocation, utilities(instance, allocation))
