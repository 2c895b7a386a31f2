"""Centralized equilibrium computation, verification, and the Pareto check.

Two programs are exposed. ``solve_geg`` finds the budget-weighted log-utility
optimum subject to per-service utility limits; its optima are exactly the
non-wasteful and frugal market equilibria, with capacity duals as prices.
``solve_eg`` drops the utility limits inside the program (the classical
variant) and truncates reported utilities afterwards; with binding limits its
allocation can be wasteful, which the verifier and the Pareto check expose.

Both run the consensus engine in single-process mode to tight tolerances and
finish with the solution polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import admm
from .lp import DenseLP, LPUnboundedError, solve_lp
from .market import (DegenerateInstanceError, MarketInstance, ServiceSpec,
                     bundle_prices, check_solvable, spends, utilities)
from .market import request_rates as rates_from_allocation
from .solution import EquilibriumSolution, SolveMeta, solution_from_point

# Internal solver tolerance; well below the verifier tolerance so that the
# best-response check and cross-solve utility agreement clear 1e-5 with
# margin.
SOLVER_TOL = 1e-8
_SOLVER_MAX_ITER = 100_000

DEFAULT_VERIFY_TOL = 1e-5


def _solve(instance: MarketInstance, scheme: str, rho: float, tol: float,
           max_iter: int, init: str, seed: int | None) -> EquilibriumSolution:
    check_solvable(instance)
    state = admm.initial_state(instance, rho=rho, gamma_primal=tol,
                               gamma_dual=tol, max_iter=max_iter, init=init,
                               seed=seed)
    solution = admm.run_admm(instance, initial=state, scheme=scheme)
    return solution


def solve_geg(instance: MarketInstance, *, rho: float = 1.0,
              tol: float = SOLVER_TOL, max_iter: int = _SOLVER_MAX_ITER,
              init: str = "proportional",
              seed: int | None = None) -> EquilibriumSolution:
    """Compute a non-wasteful, frugal market equilibrium.

    The utility vector of the result is unique across runs; allocations may
    differ between equally cheap nodes.
    """
    return _solve(instance, "geg", rho, tol, max_iter, init, seed)


def solve_eg(instance: MarketInstance, *, rho: float = 1.0,
             tol: float = SOLVER_TOL, max_iter: int = _SOLVER_MAX_ITER,
             init: str = "proportional",
             seed: int | None = None) -> EquilibriumSolution:
    """Compute the no-limit equilibrium; report utilities truncated at limits.

    The allocation itself is kept untruncated: services that saturate may
    hold resources beyond their needs, which is the wasteful regime.
    """
    unlimited = MarketInstance(
        tuple(replace(s, utility_limit=math.inf) for s in instance.services),
        instance.capacities)
    solution = _solve(unlimited, "eg", rho, tol, max_iter, init, seed)
    raw = solution.request_rates.sum(axis=1)
    return replace(solution,
                   utilities=np.minimum(raw, instance.utility_limits))


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True, eq=False)
class CheckResult:
    name: str
    passed: bool
    worst_violation: float
    details: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "worst_violation", float(self.worst_violation))

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "worst_violation": self.worst_violation, "details": self.details}


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    """Verdicts with realized slacks so failures are diagnosable.

    Violations are measured relative to ``max(1, scale)`` of the quantity
    they constrain.
    """

    budget: CheckResult
    clearing: CheckResult
    frugality: CheckResult
    non_wastefulness: CheckResult
    exhaustion: CheckResult
    satisfaction: CheckResult
    tol: float

    @property
    def checks(self) -> tuple[CheckResult, ...]:
        return (self.budget, self.clearing, self.frugality,
                self.non_wastefulness, self.exhaustion, self.satisfaction)

    @property
    def market_equilibrium(self) -> bool:
        """Budget-feasible, market-clearing, every service best-responding."""
        return (self.budget.passed and self.clearing.passed
                and self.satisfaction.passed)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "ok": self.ok,
            "market_equilibrium": self.market_equilibrium,
            "checks": {c.name: c.to_dict() for c in self.checks},
        }


def _rel(value: float, scale: float) -> float:
    return value / max(1.0, scale)


def _best_response_value(service: ServiceSpec, prices: np.ndarray) -> float:
    """Optimum of the service's budget-constrained problem at given prices.

    Solved as a small LP over per-node request rates (an independent route
    from the bang-per-buck reasoning used by the frugality check). A node
    with a zero bundle price makes utility free, so the optimum is the
    utility limit, or unbounded without one.
    """
    q = bundle_prices(service, prices)
    allowed = np.isfinite(q)
    q_allowed = q[allowed]
    if q_allowed.size == 0:
        return 0.0
    if q_allowed.min() <= 1e-15:
        return service.utility_limit  # inf when no limit: unbounded
    n_nodes = q_allowed.size
    # variables: per-node rates v, then total t; maximize t
    c = np.zeros(n_nodes + 1)
    c[-1] = 1.0
    a_ub = np.zeros((2, n_nodes + 1))
    a_ub[0, :n_nodes] = -1.0
    a_ub[0, -1] = 1.0               # t <= sum v
    a_ub[1, :n_nodes] = q_allowed   # budget
    b_ub = np.array([0.0, service.budget])
    t_upper = None if math.isinf(service.utility_limit) else service.utility_limit
    bounds = [(0, None)] * n_nodes + [(0, t_upper)]
    try:
        res = solve_lp(DenseLP(c, a_ub=a_ub, b_ub=b_ub, bounds=bounds))
    except LPUnboundedError:
        return math.inf
    return res.value


def verify_equilibrium(instance: MarketInstance,
                       solution: EquilibriumSolution | np.ndarray,
                       prices: np.ndarray | None = None,
                       tol: float = DEFAULT_VERIFY_TOL) -> EquilibriumReport:
    """Check a (prices, allocation) point against the equilibrium conditions.

    Accepts a solution object, or a raw allocation together with ``prices``.
    All derived quantities are recomputed from the point itself.
    """
    if not isinstance(solution, EquilibriumSolution):
        if prices is None:
            raise ValueError("raw allocations need an explicit price vector")
        solution = solution_from_point(instance, solution, prices)
    x = solution.allocation
    p = solution.prices
    n = instance.num_services
    budgets = instance.budgets
    limits = instance.utility_limits
    demand = instance.demand_tensor

    rates = rates_from_allocation(instance, x)
    raw = rates.sum(axis=1)
    sat = np.minimum(raw, limits)
    paid = spends(x, p)

    # (a) budget feasibility
    budget_viol = max(0.0, max(_rel(paid[i] - budgets[i], budgets[i])
                               for i in range(n)))
    budget_check = CheckResult(
        "budget", budget_viol <= tol, budget_viol,
        {"spend": paid.tolist(), "budgets": budgets.tolist()})

    # (b) market clearing: full allocation or zero price, and no overuse
    load = x.sum(axis=0)
    over = float(np.max(load - 1.0))
    comp = np.abs((load - 1.0) * p) / np.maximum(1.0, p)
    clearing_viol = max(max(0.0, over), float(comp.max()))
    worst_item = np.unravel_index(int(np.argmax(comp)), comp.shape)
    clearing_check = CheckResult(
        "clearing", clearing_viol <= tol, clearing_viol,
        {"worst_item": [int(worst_item[0]), int(worst_item[1])],
         "load": load.tolist()})

    # (c) frugality: purchases only at cheapest-bundle nodes
    frugal_viol = 0.0
    per_service = []
    for i, svc in enumerate(instance.services):
        q = bundle_prices(svc, p)
        q_min = float(np.min(q)) if np.isfinite(q).any() else math.inf
        bought = rates[i] > tol * max(1.0, raw[i])
        offending = []
        for j in np.flatnonzero(bought):
            gap = _rel(q[j] - q_min, q_min)
            if gap > frugal_viol:
                frugal_viol = gap
            if gap > tol:
                offending.append(int(j))
        frugal_spend = sat[i] * q_min if math.isfinite(q_min) else 0.0
        per_service.append({"spend": float(paid[i]),
                            "frugal_spend": float(frugal_spend),
                            "min_bundle_price": q_min,
                            "offending_nodes": offending})
    frugality_check = CheckResult(
        "frugality", frugal_viol <= tol, frugal_viol,
        {"services": per_service})

    # (d) non-wastefulness: within limits and proportional to base demands
    limit_viol = 0.0
    for i in range(n):
        if math.isfinite(limits[i]):
            limit_viol = max(limit_viol, _rel(raw[i] - limits[i], limits[i]))
    expected = rates[:, :, None] * demand
    prop_dev = np.abs(x - expected) / np.maximum(1.0, np.abs(x))
    nw_viol = max(max(0.0, limit_viol), float(prop_dev.max()))
    nw_check = CheckResult(
        "non_wastefulness", nw_viol <= tol, nw_viol,
        {"rate_sums": raw.tolist(), "limits": [repr(v) for v in limits],
         "limit_excess": limit_viol,
         "proportionality_deviation": float(prop_dev.max())})

    # (e) every service exhausts its budget or reaches its limit
    exh_viol = 0.0
    shortfalls = []
    for i in range(n):
        budget_short = max(0.0, _rel(budgets[i] - paid[i], budgets[i]))
        limit_short = (max(0.0, _rel(limits[i] - raw[i], limits[i]))
                       if math.isfinite(limits[i]) else math.inf)
        short = min(budget_short, limit_short)
        shortfalls.append(short)
        exh_viol = max(exh_viol, short)
    exhaustion_check = CheckResult(
        "exhaustion", exh_viol <= tol, exh_viol, {"shortfalls": shortfalls})

    # (f) satisfaction: realized utility matches an independent best response
    sat_viol = 0.0
    optima = []
    for i, svc in enumerate(instance.services):
        best = _best_response_value(svc, p)
        optima.append(best)
        if math.isinf(best):
            sat_viol = math.inf
        else:
            sat_viol = max(sat_viol, _rel(abs(best - sat[i]), best))
    satisfaction_check = CheckResult(
        "satisfaction", sat_viol <= tol, sat_viol,
        {"best_response": [repr(v) for v in optima],
         "realized": sat.tolist()})

    return EquilibriumReport(
        budget=budget_check,
        clearing=clearing_check,
        frugality=frugality_check,
        non_wastefulness=nw_check,
        exhaustion=exhaustion_check,
        satisfaction=satisfaction_check,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# Pareto optimality


@dataclass(frozen=True, eq=False)
class ParetoResult:
    is_pareto_optimal: bool
    improvement: float
    certificate: np.ndarray | None  # a dominating allocation when not optimal


def pareto_check(instance: MarketInstance, allocation: np.ndarray,
                 tol: float = DEFAULT_VERIFY_TOL) -> ParetoResult:
    """Search for an allocation that dominates the given one.

    Maximizes the total strict utility gain subject to every service keeping
    at least its current utility; a positive optimum certifies that the
    allocation is not Pareto-optimal and the improving allocation is
    returned.
    """
    base = utilities(instance, allocation)
    n, m = instance.num_services, instance.num_nodes
    active = instance.active_nodes
    demand = instance.demand_tensor
    limits = instance.utility_limits

    pairs = [(i, j) for i in range(n) for j in range(m) if active[i, j]]
    col = {pair: idx for idx, pair in enumerate(pairs)}
    nv = len(pairs)
    # variables: rates v (nv), totals t (n), gains d (n); maximize sum d
    num = nv + 2 * n
    c = np.zeros(num)
    c[nv + n:] = 1.0
    rows, rhs = [], []
    for i in range(n):
        row = np.zeros(num)
        row[nv + i] = 1.0
        for j in range(m):
            if active[i, j]:
                row[col[i, j]] = -1.0
        rows.append(row)
        rhs.append(0.0)                      # t_i <= sum_j v_ij
        row = np.zeros(num)
        row[nv + n + i] = 1.0
        row[nv + i] = -1.0
        rows.append(row)
        rhs.append(-float(base[i]))          # d_i <= t_i - u_i
    for j in range(m):
        for r in range(instance.num_resources):
            row = np.zeros(num)
            for i in range(n):
                if active[i, j]:
                    row[col[i, j]] = demand[i, j, r]
            rows.append(row)
            rhs.append(1.0)                  # capacity
    bounds = [(0, None)] * nv
    bounds += [(0, None if math.isinf(limits[i]) else float(limits[i]))
               for i in range(n)]
    bounds += [(0, None)] * n
    res = solve_lp(DenseLP(c, a_ub=np.array(rows), b_ub=np.array(rhs),
                           bounds=bounds))
    if res.value <= tol:
        return ParetoResult(True, float(res.value), None)
    better = np.zeros((n, m, instance.num_resources))
    for (i, j), idx in col.items():
        better[i, j] = res.x[idx] * demand[i, j]
    return ParetoResult(False, float(res.value), better)
