"""Fairness auditors: envy, sharing incentive, proportionality, utilization."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import MarketInstance, utilities, utility

_RATIO_FLOOR = 1e-12


def budget_shares(instance: MarketInstance) -> np.ndarray:
    return instance.budgets / instance.budgets.sum()


def envy_free_index(instance: MarketInstance, allocation: np.ndarray) -> float:
    """Worst-case ratio of own utility to budget-scaled envy of another bundle.

    An index of 1 (or more) means no service would swap its bundle for any
    other service's bundle scaled by the budget ratio. Pairs whose scaled
    bundle yields zero utility cannot be envied and are skipped; with no
    comparable pair at all the index is 1.
    """
    allocation = np.asarray(allocation, dtype=float)
    own = utilities(instance, allocation)
    budgets = instance.budgets
    ratios = []
    for i, svc in enumerate(instance.services):
        for i2 in range(instance.num_services):
            if i2 == i:
                continue
            scaled = (budgets[i] / budgets[i2]) * allocation[i2]
            envied = utility(svc, scaled)
            if envied == 0.0:
                continue
            ratios.append(own[i] / max(envied, _RATIO_FLOOR))
    return float(min(ratios)) if ratios else 1.0


def proportional_allocation(instance: MarketInstance) -> np.ndarray:
    shares = budget_shares(instance)
    grid = np.broadcast_to(
        instance.capacities,
        (instance.num_services, instance.num_nodes, instance.num_resources))
    return shares[:, None, None] * grid


def sharing_incentive_check(instance: MarketInstance,
                            allocation: np.ndarray) -> np.ndarray:
    """(N,) margins of realized utility over the budget-proportional split."""
    fallback = utilities(instance, proportional_allocation(instance))
    return utilities(instance, allocation) - fallback


def proportionality_check(instance: MarketInstance,
                          allocation: np.ndarray) -> np.ndarray:
    """(N,) ratios of realized utility to the everything-bundle utility.

    The check passes when each ratio is at least the service's budget share.
    A service that gets zero utility even from the full capacity grid is
    degenerate and reported as NaN.
    """
    own = utilities(instance, allocation)
    everything = utilities(
        instance, np.broadcast_to(instance.capacities, (instance.num_services,
                                                        instance.num_nodes,
                                                        instance.num_resources)))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(everything > 0.0, own / everything, np.nan)


def utilization(instance: MarketInstance, allocation: np.ndarray) -> np.ndarray:
    """(M, R) fractions of each capacity consumed by the allocation."""
    return np.asarray(allocation, dtype=float).sum(axis=0) / instance.capacities


@dataclass(frozen=True, eq=False)
class FairnessReport:
    scheme: str
    seed: int | None
    ef_index: float
    sharing_margins: np.ndarray
    proportionality_ratios: np.ndarray
    budget_shares: np.ndarray
    utilization: np.ndarray

    @property
    def min_sharing_margin(self) -> float:
        return float(self.sharing_margins.min())

    @property
    def min_proportionality_gap(self) -> float:
        """Most negative slack of PR_i over the budget share (>= 0 passes)."""
        return float(np.nanmin(self.proportionality_ratios - self.budget_shares))

    @property
    def mean_utilization(self) -> float:
        return float(self.utilization.mean())

    def row(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": "" if self.seed is None else self.seed,
            "ef_index": self.ef_index,
            "min_sharing_margin": self.min_sharing_margin,
            "min_proportionality_gap": self.min_proportionality_gap,
            "mean_utilization": self.mean_utilization,
        }


AUDIT_COLUMNS = ["scheme", "seed", "ef_index", "min_sharing_margin",
                 "min_proportionality_gap", "mean_utilization"]


def audit(instance: MarketInstance, allocation: np.ndarray, scheme: str = "",
          seed: int | None = None) -> FairnessReport:
    """Run every fairness auditor against one allocation."""
    return FairnessReport(
        scheme=scheme,
        seed=seed,
        ef_index=envy_free_index(instance, allocation),
        sharing_margins=sharing_incentive_check(instance, allocation),
        proportionality_ratios=proportionality_check(instance, allocation),
        budget_shares=budget_shares(instance),
        utilization=utilization(instance, allocation),
    )


def write_audit_csv(reports: list[FairnessReport], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AUDIT_COLUMNS)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.row())
