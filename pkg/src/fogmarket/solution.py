"""Equilibrium solution container, the KKT polish, and its JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .market import MarketInstance, request_rates as rates_from_allocation, spends


@dataclass(frozen=True, eq=False)
class SolveMeta:
    scheme: str = ""
    iterations: int = 0
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    converged: bool = True
    wall_time: float = 0.0
    rho: float | None = None
    gamma_primal: float | None = None
    gamma_dual: float | None = None

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "rho": self.rho,
            "gamma_primal": self.gamma_primal,
            "gamma_dual": self.gamma_dual,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SolveMeta":
        known = {f: doc[f] for f in cls.__dataclass_fields__ if f in doc}
        return cls(**known)


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    """Prices plus a full allocation and its per-service accounting.

    ``request_rates[i, j]`` is the number of requests service ``i`` places at
    node ``j``; the allocation is exactly proportional to base demands,
    ``allocation[i, j, r] = request_rates[i, j] * a[i, j, r]``. ``mu`` are the
    utility-limit multipliers tied to budget surpluses by
    ``mu[i] * rate_sum[i] == budget[i] - spend[i]``.
    """

    allocation: np.ndarray     # (N, M, R)
    prices: np.ndarray         # (M, R)
    utilities: np.ndarray      # (N,), saturated at the utility limits
    request_rates: np.ndarray  # (N, M)
    mu: np.ndarray             # (N,)
    spend: np.ndarray          # (N,)
    surplus: np.ndarray        # (N,)
    meta: SolveMeta

    def to_dict(self) -> dict:
        return {
            "prices": self.prices.tolist(),
            "allocation": self.allocation.tolist(),
            "utilities": self.utilities.tolist(),
            "request_rates": self.request_rates.tolist(),
            "spend": self.spend.tolist(),
            "surplus": self.surplus.tolist(),
            "mu": self.mu.tolist(),
            "meta": self.meta.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EquilibriumSolution":
        return cls(
            allocation=np.asarray(doc["allocation"], dtype=float),
            prices=np.asarray(doc["prices"], dtype=float),
            utilities=np.asarray(doc["utilities"], dtype=float),
            request_rates=np.asarray(doc["request_rates"], dtype=float),
            mu=np.asarray(doc["mu"], dtype=float),
            spend=np.asarray(doc["spend"], dtype=float),
            surplus=np.asarray(doc["surplus"], dtype=float),
            meta=SolveMeta.from_dict(doc.get("meta", {})),
        )


def _derive_accounts(instance: MarketInstance, rates: np.ndarray,
                     prices: np.ndarray, allocation: np.ndarray,
                     limits: np.ndarray) -> EquilibriumSolution:
    raw = rates.sum(axis=1)
    paid = spends(allocation, prices)
    budgets = instance.budgets
    surplus = budgets - paid
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(raw > 1e-300, surplus / raw, 0.0)
    mu = np.maximum(mu, 0.0)
    return EquilibriumSolution(
        allocation=allocation,
        prices=prices,
        utilities=np.minimum(raw, limits),
        request_rates=rates,
        mu=mu,
        spend=paid,
        surplus=surplus,
        meta=SolveMeta(),
    )


def polish_solution(instance: MarketInstance, rates: np.ndarray,
                    prices: np.ndarray, meta: SolveMeta,
                    limits: np.ndarray | None = None) -> EquilibriumSolution:
    """Turn converged request rates and prices into a clean solution.

    Restores exact capacity feasibility by scaling each node's rates down by
    its worst oversubscription (a relative adjustment on the order of the
    consensus residual), expands the proportional allocation, and rederives
    the limit multipliers from the budget-surplus identity.
    """
    rates = np.array(rates, dtype=float)
    demand = instance.demand_tensor
    load = np.einsum("nm,nmr->mr", rates, demand)
    worst = load.max(axis=1)
    scale = np.where(worst > 1.0, 1.0 / np.maximum(worst, 1e-300), 1.0)
    rates *= scale[None, :]
    allocation = rates[:, :, None] * demand
    if limits is None:
        limits = instance.utility_limits
    solution = _derive_accounts(instance, rates, prices, allocation, limits)
    return replace(solution, meta=meta)


def solution_from_point(instance: MarketInstance, allocation: np.ndarray,
                        prices: np.ndarray,
                        meta: SolveMeta | None = None) -> EquilibriumSolution:
    """Wrap an arbitrary allocation/price point for verification.

    The point is taken as-is (no feasibility polish); request rates are the
    realized per-node Leontief rates.
    """
    allocation = np.asarray(allocation, dtype=float)
    prices = np.asarray(prices, dtype=float)
    rates = rates_from_allocation(instance, allocation)
    solution = _derive_accounts(instance, rates, prices, allocation,
                                instance.utility_limits)
    return replace(solution, meta=meta or SolveMeta(scheme="point"))


def save_solution(solution: EquilibriumSolution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(solution.to_dict(), indent=2) + "\n")


def load_solution(path: str | Path) -> EquilibriumSolution:
    return EquilibriumSolution.from_dict(json.loads(Path(path).read_text()))
