"""Jacobi-parallel consensus engine for the market program.

Every iteration, all services solve their proximal subproblems against a
read-only snapshot of the consensus state (the x-update is data-parallel by
construction), the per-service purchase vectors are averaged through a
pluggable transport, and the platform applies the capacity projection and the
dual price step. The dual vector doubles as the resource price vector at
convergence.

State vectors are flattened item-wise: item ``k = j * R + r`` is resource
``r`` at node ``j``.
"""

from __future__ import annotations

import abc
import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import MarketInstance, check_solvable
from .numerics import clamp_projection, tree_mean
from .solution import EquilibriumSolution, SolveMeta, polish_solution
from .subproblem import LOG_FLOOR, SubproblemError, stationarity_residual, x_update_batch

DEFAULT_RHO = 1.0
DEFAULT_GAMMA = 1e-4
DEFAULT_MAX_ITER = 5000

# The engine re-checks subproblem stationarity at this iteration stride (and
# always on the final iterate).
_CHECK_STRIDE = 50


class AveragingTransport(abc.ABC):
    """Computes the arithmetic mean of the services' submitted vectors.

    Implementations must reproduce the exact mean to within 1e-9 per
    component regardless of how the vectors travel; the consensus engine
    depends on that contract, not on any particular wire protocol.
    """

    @abc.abstractmethod
    def average(self, vectors: np.ndarray) -> np.ndarray:
        """Mean of the rows of an (N, K) array."""


class PlainTransport(AveragingTransport):
    """Services submit their vectors in the clear; a tree fold averages them."""

    def average(self, vectors: np.ndarray) -> np.ndarray:
        return tree_mean(vectors)


@dataclass(frozen=True, eq=False)
class AdmmState:
    """One iterate of the consensus loop.

    The dual vector is shared by all services, so a single ``prices`` array
    represents it. ``request_rates`` and ``cap_multipliers`` echo the latest
    x-update in rate space.
    """

    iteration: int
    x: np.ndarray                # (N, K)
    request_rates: np.ndarray    # (N, M)
    cap_multipliers: np.ndarray  # (N,)
    xbar: np.ndarray             # (K,)
    zbar: np.ndarray             # (K,)
    prices: np.ndarray           # (K,)
    rho: float
    gamma_primal: float
    gamma_dual: float
    max_iter: int
    primal_history: tuple[float, ...] = ()
    dual_history: tuple[float, ...] = ()

    @property
    def primal_residual(self) -> float:
        return self.primal_history[-1] if self.primal_history else math.nan

    @property
    def dual_residual(self) -> float:
        return self.dual_history[-1] if self.dual_history else math.nan

    @property
    def converged(self) -> bool:
        return (bool(self.primal_history)
                and self.primal_residual <= self.gamma_primal
                and self.dual_residual <= self.gamma_dual)


def _instance_arrays(instance: MarketInstance):
    demand = instance.demand_tensor
    alpha = np.einsum("nmr,nmr->nm", demand, demand)
    return demand, alpha


def initial_state(instance: MarketInstance, rho: float = DEFAULT_RHO,
                  gamma_primal: float = DEFAULT_GAMMA,
                  gamma_dual: float = DEFAULT_GAMMA,
                  max_iter: int = DEFAULT_MAX_ITER,
                  init: str = "proportional",
                  seed: int | None = None) -> AdmmState:
    """Fresh state: proportional-sharing start or a seeded random start."""
    n, k = instance.num_services, instance.num_items
    m = instance.num_nodes
    if init == "proportional":
        x = np.full((n, k), 1.0 / n)
        zbar = np.full(k, 1.0 / n)
        prices = np.ones(k)
    elif init == "random":
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.0, 2.0 / n, size=(n, k))
        zbar = clamp_projection(tree_mean(x), 1.0 / n)
        prices = rng.uniform(0.5, 1.5, size=k)
    else:
        raise ValueError(f"unknown init {init!r}")
    return AdmmState(
        iteration=0,
        x=x,
        request_rates=np.zeros((n, m)),
        cap_multipliers=np.zeros(n),
        xbar=tree_mean(x),
        zbar=zbar,
        prices=prices,
        rho=float(rho),
        gamma_primal=float(gamma_primal),
        gamma_dual=float(gamma_dual),
        max_iter=int(max_iter),
    )


def _check_batch(weights, rho, alpha, beta, caps, rates, multipliers) -> None:
    for i in range(weights.size):
        resid = stationarity_residual(weights[i], rho, alpha[i], beta[i],
                                      caps[i], rates[i], float(multipliers[i]))
        if resid > 1e-8:
            raise SubproblemError(
                f"service {i} x-update stationarity residual {resid:.3e}",
                rates[i], resid)


def _advance(demand, alpha, weights, caps, rho, n_services, x, xbar, zbar,
             prices, transport, check: bool):
    n, m, r = demand.shape
    center = x - xbar + zbar - prices / rho
    beta = np.einsum("nmr,nmr->nm", demand, center.reshape(n, m, r))
    rates, multipliers = x_update_batch(weights, rho, alpha, beta, caps)
    if check:
        _check_batch(weights, rho, alpha, beta, caps, rates, multipliers)
    x_new = (rates[:, :, None] * demand).reshape(n, m * r)
    xbar_new = transport.average(x_new)
    zbar_new = clamp_projection(xbar_new + prices / rho, 1.0 / n_services)
    r_primal = math.sqrt(n_services) * float(np.linalg.norm(zbar_new - xbar_new))
    r_dual = rho * float(np.linalg.norm(zbar_new - zbar))
    prices_new = prices + rho * (xbar_new - zbar_new)
    return (x_new, rates, multipliers, xbar_new, zbar_new, prices_new,
            r_primal, r_dual, beta)


def admm_step(state: AdmmState, instance: MarketInstance,
              transport: AveragingTransport | None = None) -> AdmmState:
    """Advance one iteration: parallel x-update, averaging, projection, dual step."""
    transport = transport or PlainTransport()
    demand, alpha = _instance_arrays(instance)
    (x, rates, multipliers, xbar, zbar, prices, r_primal, r_dual, _) = _advance(
        demand, alpha, instance.budgets, instance.utility_limits, state.rho,
        instance.num_services, state.x, state.xbar, state.zbar, state.prices,
        transport, check=True)
    return AdmmState(
        iteration=state.iteration + 1,
        x=x,
        request_rates=rates,
        cap_multipliers=multipliers,
        xbar=xbar,
        zbar=zbar,
        prices=prices,
        rho=state.rho,
        gamma_primal=state.gamma_primal,
        gamma_dual=state.gamma_dual,
        max_iter=state.max_iter,
        primal_history=state.primal_history + (r_primal,),
        dual_history=state.dual_history + (r_dual,),
    )


class _TraceWriter:
    """Iteration trace CSV: residuals, objective, per-service utilities."""

    def __init__(self, path: str | Path, instance: MarketInstance):
        self._file = Path(path).open("w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(
            ["t", "r_primal", "r_dual", "objective"]
            + [f"utility_{i}" for i in range(instance.num_services)])
        self._weights = instance.budgets
        self._limits = instance.utility_limits

    def record(self, t: int, r_primal: float, r_dual: float,
               rates: np.ndarray) -> None:
        raw = rates.sum(axis=1)
        objective = float(self._weights @ np.log(np.maximum(raw, LOG_FLOOR)))
        utilities = np.minimum(raw, self._limits)
        self._writer.writerow(
            [t, repr(r_primal), repr(r_dual), repr(objective)]
            + [repr(float(u)) for u in utilities])

    def close(self) -> None:
        self._file.close()


def run_admm(instance: MarketInstance,
             rho: float = DEFAULT_RHO,
             gamma_primal: float = DEFAULT_GAMMA,
             gamma_dual: float = DEFAULT_GAMMA,
             max_iter: int = DEFAULT_MAX_ITER,
             transport: AveragingTransport | None = None,
             initial: AdmmState | None = None,
             trace_path: str | Path | None = None,
             scheme: str = "admm") -> EquilibriumSolution:
    """Iterate until both residuals clear their thresholds or the cap hits.

    Returns a polished solution either way; a run that hits ``max_iter`` is
    flagged ``converged=False`` in the metadata with its final residuals.
    """
    if not instance.is_normalized:
        raise ValueError("instance must be normalized (unit capacities); "
                         "use MarketInstance.normalize() or the loader")
    check_solvable(instance)
    if not rho > 0:
        raise ValueError("rho must be positive")
    transport = transport or PlainTransport()
    state = initial if initial is not None else initial_state(
        instance, rho, gamma_primal, gamma_dual, max_iter)
    rho, gamma_primal, gamma_dual = state.rho, state.gamma_primal, state.gamma_dual
    max_iter = state.max_iter
    demand, alpha = _instance_arrays(instance)
    weights, caps = instance.budgets, instance.utility_limits
    n = instance.num_services

    x, xbar, zbar, prices = state.x, state.xbar, state.zbar, state.prices
    rates, multipliers = state.request_rates, state.cap_multipliers
    last_beta = None
    primal_hist: list[float] = list(state.primal_history)
    dual_hist: list[float] = list(state.dual_history)
    tracer = _TraceWriter(trace_path, instance) if trace_path else None

    started = time.perf_counter()
    iteration = state.iteration
    converged = False
    try:
        for step in range(1, max_iter + 1):
            iteration = state.iteration + step
            (x, rates, multipliers, xbar, zbar, prices,
             r_primal, r_dual, last_beta) = _advance(
                demand, alpha, weights, caps, rho, n, x, xbar, zbar, prices,
                transport, check=(step % _CHECK_STRIDE == 0))
            primal_hist.append(r_primal)
            dual_hist.append(r_dual)
            if tracer:
                tracer.record(iteration, r_primal, r_dual, rates)
            if r_primal <= gamma_primal and r_dual <= gamma_dual:
                converged = True
                break
    finally:
        if tracer:
            tracer.close()
    if last_beta is not None:
        # The returned iterate always passes through the stationarity check.
        _check_batch(weights, rho, alpha, last_beta, caps, rates, multipliers)
    wall = time.perf_counter() - started

    meta = SolveMeta(
        scheme=scheme,
        iterations=iteration,
        primal_residual=primal_hist[-1] if primal_hist else math.nan,
        dual_residual=dual_hist[-1] if dual_hist else math.nan,
        converged=converged,
        wall_time=wall,
        rho=rho,
        gamma_primal=gamma_primal,
        gamma_dual=gamma_dual,
    )
    prices_grid = prices.reshape(instance.num_nodes, instance.num_resources)
    return polish_solution(instance, rates, prices_grid, meta)
