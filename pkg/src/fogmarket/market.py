"""Domain types and utility arithmetic for the fog resource market.

Services act as budget-constrained buyers of divisible fog-node capacity.
A service's utility at a node is Leontief: the number of requests a resource
vector supports is the minimum ratio against the service's base demand.
Per-node utilities add up across nodes and saturate at the service's utility
limit. All solver-facing instances are normalized so that every resource type
at every node has capacity one; prices and base demands carry the scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

# Absolute slack allowed on capacity feasibility checks (solver outputs are
# floating point).
EPS_FEAS = 1e-7


class InstanceError(ValueError):
    """Malformed or inconsistent market instance data."""


class DegenerateInstanceError(ValueError):
    """A service can achieve no utility at any node, or gets utility for free."""


def _as_frozen_array(value, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InstanceError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InstanceError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ServiceSpec:
    """One buyer: budget, per-node base demands, and a saturation limit.

    ``base_demand[j, r]`` is the amount of resource ``r`` at node ``j`` needed
    to process one request. A zero entry means the resource is not required at
    that node and never constrains the request rate. ``allowed_nodes``
    restricts purchases to a subset of nodes; ``None`` means every node.

    Instances are immutable after construction and safe to share across
    threads.
    """

    budget: float
    base_demand: np.ndarray
    utility_limit: float = math.inf
    allowed_nodes: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        demand = _as_frozen_array(self.base_demand, "base_demand", ndim=2)
        if (demand < 0).any():
            raise InstanceError("base_demand entries must be nonnegative")
        object.__setattr__(self, "base_demand", demand)
        object.__setattr__(self, "budget", float(self.budget))
        object.__setattr__(self, "utility_limit", float(self.utility_limit))
        if not (self.budget > 0 and math.isfinite(self.budget)):
            raise InstanceError("budget must be strictly positive and finite")
        if not self.utility_limit > 0:
            raise InstanceError("utility_limit must be strictly positive")
        if self.allowed_nodes is not None:
            nodes = tuple(sorted({int(j) for j in self.allowed_nodes}))
            if nodes and (nodes[0] < 0 or nodes[-1] >= demand.shape[0]):
                raise InstanceError("allowed_nodes indices out of range")
            object.__setattr__(self, "allowed_nodes", nodes)
        for j in range(demand.shape[0]):
            if self.node_allowed(j) and not (demand[j] > 0).any():
                raise InstanceError(
                    f"allowed node {j} has an all-zero base demand row; "
                    "it would grant unlimited free utility"
                )

    @property
    def num_nodes(self) -> int:
        return self.base_demand.shape[0]

    def node_allowed(self, node: int) -> bool:
        return self.allowed_nodes is None or node in self.allowed_nodes

    @cached_property
    def allowed_mask(self) -> np.ndarray:
        """Boolean (M,) mask of nodes this service may buy from."""
        if self.allowed_nodes is None:
            mask = np.ones(self.num_nodes, dtype=bool)
        else:
            mask = np.zeros(self.num_nodes, dtype=bool)
            mask[list(self.allowed_nodes)] = True
        mask.setflags(write=False)
        return mask


@dataclass(frozen=True, eq=False)
class MarketInstance:
    """N services competing for an (M, R) grid of node capacities."""

    services: tuple[ServiceSpec, ...]
    capacities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "services", tuple(self.services))
        caps = _as_frozen_array(self.capacities, "capacities", ndim=2)
        if caps.size == 0:
            raise InstanceError("capacity grid must be non-empty")
        if (caps <= 0).any():
            raise InstanceError("capacities must be strictly positive")
        object.__setattr__(self, "capacities", caps)
        if not self.services:
            raise InstanceError("instance needs at least one service")
        for i, svc in enumerate(self.services):
            if svc.base_demand.shape != caps.shape:
                raise InstanceError(
                    f"service {i} base_demand shape {svc.base_demand.shape} "
                    f"does not match capacity grid {caps.shape}"
                )

    @property
    def num_services(self) -> int:
        return len(self.services)

    @property
    def num_nodes(self) -> int:
        return self.capacities.shape[0]

    @property
    def num_resources(self) -> int:
        return self.capacities.shape[1]

    @property
    def num_items(self) -> int:
        """Count of distinct goods: one per (node, resource) pair."""
        return self.capacities.size

    @cached_property
    def budgets(self) -> np.ndarray:
        arr = np.array([s.budget for s in self.services])
        arr.setflags(write=False)
        return arr

    @cached_property
    def utility_limits(self) -> np.ndarray:
        arr = np.array([s.utility_limit for s in self.services])
        arr.setflags(write=False)
        return arr

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.capacities == 1.0))

    def normalize(self) -> "MarketInstance":
        """Rescale so every capacity is one unit; base demands absorb the scale."""
        if self.is_normalized:
            return self
        services = tuple(
            ServiceSpec(
                budget=s.budget,
                base_demand=s.base_demand / self.capacities,
                utility_limit=s.utility_limit,
                allowed_nodes=s.allowed_nodes,
            )
            for s in self.services
        )
        return MarketInstance(services, np.ones_like(self.capacities))

    @cached_property
    def demand_tensor(self) -> np.ndarray:
        """(N, M, R) base demands with disallowed nodes zeroed out."""
        tensor = np.stack([s.base_demand * s.allowed_mask[:, None] for s in self.services])
        tensor.setflags(write=False)
        return tensor

    @cached_property
    def active_nodes(self) -> np.ndarray:
        """(N, M) mask: allowed nodes where the service has positive demand."""
        mask = (self.demand_tensor > 0).any(axis=2)
        mask.setflags(write=False)
        return mask


# ---------------------------------------------------------------------------
# utility and price arithmetic


def per_node_utility(service: ServiceSpec, node: int, resources: np.ndarray) -> float:
    """Requests node ``node`` can process for ``service`` from ``resources``.

    Ratios at zero-demand coordinates are excluded from the Leontief min; a
    node outside the service's allowed set contributes nothing.
    """
    if not service.node_allowed(node):
        return 0.0
    demand = service.base_demand[node]
    needed = demand > 0
    x = np.asarray(resources, dtype=float)
    return float(np.min(x[needed] / demand[needed]))


def utility(service: ServiceSpec, bundle: np.ndarray) -> float:
    """Total utility of an (M, R) resource bundle, saturated at the limit."""
    bundle = np.asarray(bundle, dtype=float)
    total = 0.0
    for j in range(service.num_nodes):
        total += per_node_utility(service, j, bundle[j])
    return min(total, service.utility_limit)


def bundle_price(service: ServiceSpec, node: int, prices: np.ndarray) -> float:
    """Cost of one base-demand unit of ``service`` at ``node``."""
    prices = np.asarray(prices, dtype=float)
    return float(prices[node] @ service.base_demand[node])


def bundle_prices(service: ServiceSpec, prices: np.ndarray) -> np.ndarray:
    """(M,) per-request costs; disallowed nodes are priced at infinity."""
    prices = np.asarray(prices, dtype=float)
    q = np.einsum("mr,mr->m", prices, service.base_demand)
    return np.where(service.allowed_mask, q, np.inf)


def min_bundle_price(service: ServiceSpec, prices: np.ndarray) -> float:
    """Cheapest per-request cost over the service's allowed nodes."""
    return float(np.min(bundle_prices(service, prices)))


def max_bang_per_buck(service: ServiceSpec, prices: np.ndarray) -> float:
    """Best utility-per-money rate: 1 / min positive per-request cost.

    Returns ``inf`` when some allowed node offers utility for free (a
    degenerate price vector for this service).
    """
    q = min_bundle_price(service, prices)
    return math.inf if q <= 0.0 else 1.0 / q


def spend(service_index: int, allocation: np.ndarray, prices: np.ndarray) -> float:
    """Money service ``service_index`` pays for its slice of ``allocation``."""
    return float(np.sum(np.asarray(allocation)[service_index] * np.asarray(prices)))


def spends(allocation: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """(N,) per-service payments for an (N, M, R) allocation."""
    return np.einsum("nmr,mr->n", np.asarray(allocation, dtype=float),
                     np.asarray(prices, dtype=float))


def request_rates(instance: MarketInstance, allocation: np.ndarray) -> np.ndarray:
    """(N, M) per-node request rates realized by an allocation."""
    allocation = np.asarray(allocation, dtype=float)
    rates = np.zeros((instance.num_services, instance.num_nodes))
    for i, svc in enumerate(instance.services):
        for j in range(instance.num_nodes):
            rates[i, j] = per_node_utility(svc, j, allocation[i, j])
    return rates


def utilities(instance: MarketInstance, allocation: np.ndarray) -> np.ndarray:
    """(N,) saturated utilities realized by an allocation."""
    rates = request_rates(instance, allocation)
    return np.minimum(rates.sum(axis=1), instance.utility_limits)


def is_feasible(instance: MarketInstance, allocation: np.ndarray,
                tol: float = EPS_FEAS) -> bool:
    """True when the allocation is nonnegative and within capacities."""
    allocation = np.asarray(allocation, dtype=float)
    if allocation.shape != (instance.num_services, instance.num_nodes,
                            instance.num_resources):
        return False
    if (allocation < -tol).any():
        return False
    return bool(np.all(allocation.sum(axis=0) <= instance.capacities + tol))


def check_solvable(instance: MarketInstance) -> None:
    """Reject instances where some service can never obtain utility."""
    for i, svc in enumerate(instance.services):
        if not instance.active_nodes[i].any():
            raise DegenerateInstanceError(
                f"service {i} has zero achievable utility at every node"
            )


# ---------------------------------------------------------------------------
# instance file format
#
# A single JSON document:
#   {
#     "nodes": M, "resource_types": R,
#     "capacities": [[...], ...],                      # M x R
#     "services": [
#       {"budget": b, "utility_limit": u | "inf",
#        "base_demand": [[...], ...],                  # M x R
#        "allowed_nodes": [j, ...]}                    # optional
#     ],
#     "meta": {...}                                    # optional, ignored
#   }
# The loader normalizes capacities to one unit and rescales base demands.


def _parse_limit(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise InstanceError(f"utility_limit string must be \"inf\", got {value!r}")
    return float(value)


def loads_instance(text: str) -> MarketInstance:
    """Parse an instance JSON document and return it normalized."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    for key in ("nodes", "resource_types", "capacities", "services"):
        if key not in doc:
            raise InstanceError(f"missing required field {key!r}")
    m, r = int(doc["nodes"]), int(doc["resource_types"])
    if m < 1 or r < 1:
        raise InstanceError("nodes and resource_types must be at least 1")
    caps = _as_frozen_array(doc["capacities"], "capacities", ndim=2)
    if caps.shape != (m, r):
        raise InstanceError(f"capacities shape {caps.shape} != ({m}, {r})")
    services = []
    for idx, svc in enumerate(doc["services"]):
        if not isinstance(svc, dict):
            raise InstanceError(f"service {idx} must be a JSON object")
        for key in ("budget", "utility_limit", "base_demand"):
            if key not in svc:
                raise InstanceError(f"service {idx} missing field {key!r}")
        allowed = svc.get("allowed_nodes")
        try:
            services.append(ServiceSpec(
                budget=float(svc["budget"]),
                base_demand=np.asarray(svc["base_demand"], dtype=float),
                utility_limit=_parse_limit(svc["utility_limit"]),
                allowed_nodes=None if allowed is None else tuple(allowed),
            ))
        except InstanceError as exc:
            raise InstanceError(f"service {idx}: {exc}") from exc
    return MarketInstance(tuple(services), caps).normalize()


def load_instance(path: str | Path) -> MarketInstance:
    return loads_instance(Path(path).read_text())


def _limit_json(limit: float):
    return "inf" if math.isinf(limit) else limit


def dumps_instance(instance: MarketInstance, meta: dict | None = None) -> str:
    doc = {
        "nodes": instance.num_nodes,
        "resource_types": instance.num_resources,
        "capacities": instance.capacities.tolist(),
        "services": [
            {
                "budget": s.budget,
                "utility_limit": _limit_json(s.utility_limit),
                "base_demand": s.base_demand.tolist(),
                **({} if s.allowed_nodes is None
                   else {"allowed_nodes": list(s.allowed_nodes)}),
            }
            for s in instance.services
        ],
    }
    if meta is not None:
        doc["meta"] = meta
    return json.dumps(doc, indent=2)


def dump_instance(instance: MarketInstance, path: str | Path,
                  meta: dict | None = None) -> None:
    Path(path).write_text(dumps_instance(instance, meta) + "\n")
