"""Seeded instance generation over an EC2-style node catalog.

Nodes are drawn from a catalog of machine profiles (three resource types:
vCPU, memory, bandwidth); per-service base demands are drawn uniformly from
configurable ranges, by default identical at every node. The generator then
normalizes: every capacity becomes one unit and base demands are expressed as
fractions of each node's raw capacity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import InstanceError, MarketInstance, ServiceSpec

DEFAULT_CATALOG_PATH = Path(__file__).parent / "data" / "ec2_catalog.json"

# Uniform draw ranges for (vCPU, memory GiB, bandwidth Mbps) per request.
DEFAULT_DEMAND_RANGES = ((0.1, 0.5), (0.4, 2.0), (10.0, 50.0))
DEFAULT_UTILITY_LIMIT = 600.0

NUM_RESOURCES = 3


@dataclass(frozen=True)
class NodeProfile:
    name: str
    vcpu: float
    memory_gib: float
    bandwidth_mbps: float

    @property
    def capacity(self) -> tuple[float, float, float]:
        return (self.vcpu, self.memory_gib, self.bandwidth_mbps)


def load_catalog(path: str | Path | None = None) -> tuple[NodeProfile, ...]:
    """Read node profiles from a catalog JSON file (the bundled one by default)."""
    doc = json.loads(Path(path or DEFAULT_CATALOG_PATH).read_text())
    profiles = tuple(
        NodeProfile(name=str(p["name"]), vcpu=float(p["vcpu"]),
                    memory_gib=float(p["memory_gib"]),
                    bandwidth_mbps=float(p["bandwidth_mbps"]))
        for p in doc["profiles"])
    if not profiles:
        raise InstanceError("node catalog is empty")
    for p in profiles:
        if min(p.capacity) <= 0:
            raise InstanceError(f"profile {p.name} has a non-positive capacity")
    return profiles


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for one synthetic instance.

    ``budgets`` is either the string ``"equal"`` (everyone pays 1) or an
    explicit per-service tuple. With ``per_node_demands`` each service draws
    a separate demand vector for every node instead of reusing one.
    """

    num_nodes: int
    num_services: int
    demand_ranges: tuple = DEFAULT_DEMAND_RANGES
    utility_limit: float = DEFAULT_UTILITY_LIMIT
    budgets: str | tuple = "equal"
    seed: int | tuple = 0
    per_node_demands: bool = False
    catalog: tuple[NodeProfile, ...] | None = None

    def __post_init__(self) -> None:
        if self.num_nodes < 1 or self.num_services < 1:
            raise InstanceError("need at least one node and one service")
        if len(self.demand_ranges) != NUM_RESOURCES:
            raise InstanceError(f"demand_ranges must cover {NUM_RESOURCES} resources")
        for lo, hi in self.demand_ranges:
            if not 0 < lo <= hi:
                raise InstanceError("demand ranges must be positive and ordered")
        if not self.utility_limit > 0:
            raise InstanceError("utility_limit must be positive")
        if self.budgets != "equal":
            budgets = tuple(float(b) for b in self.budgets)
            if len(budgets) != self.num_services:
                raise InstanceError("budgets length must match num_services")
            if any(b <= 0 for b in budgets):
                raise InstanceError("budgets must be positive")
            object.__setattr__(self, "budgets", budgets)


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    """A normalized instance plus the raw quantities it came from."""

    instance: MarketInstance
    node_names: tuple[str, ...]
    raw_capacities: np.ndarray   # (M, 3)
    raw_demands: np.ndarray      # (N, 3) or (N, M, 3) with per-node draws

    def denormalized_demands(self) -> np.ndarray:
        """(N, M, 3) raw per-request demands recovered from the instance."""
        scaled = np.stack([s.base_demand for s in self.instance.services])
        return scaled * self.raw_capacities[None, :, :]

    def meta(self) -> dict:
        return {
            "node_names": list(self.node_names),
            "raw_capacities": self.raw_capacities.tolist(),
            "raw_demands": self.raw_demands.tolist(),
        }


def generate(config: GeneratorConfig) -> GeneratedInstance:
    """Draw one instance; identical configs (and seeds) give identical output."""
    catalog = config.catalog or load_catalog()
    rng = np.random.default_rng(config.seed)
    picks = rng.integers(0, len(catalog), size=config.num_nodes)
    profiles = [catalog[int(i)] for i in picks]
    caps = np.array([p.capacity for p in profiles])

    n, m = config.num_services, config.num_nodes
    shape = (n, m) if config.per_node_demands else (n,)
    draws = [rng.uniform(lo, hi, size=shape) for lo, hi in config.demand_ranges]
    raw_demands = np.stack(draws, axis=-1)

    if config.per_node_demands:
        per_node = raw_demands
    else:
        per_node = np.broadcast_to(raw_demands[:, None, :], (n, m, NUM_RESOURCES))
    normalized = per_node / caps[None, :, :]

    if config.budgets == "equal":
        budgets = [1.0] * n
    else:
        budgets = list(config.budgets)
    limit = float(config.utility_limit)
    services = tuple(
        ServiceSpec(budget=budgets[i], base_demand=normalized[i],
                    utility_limit=limit if math.isfinite(limit) else math.inf)
        for i in range(n))
    instance = MarketInstance(services, np.ones((m, NUM_RESOURCES)))
    return GeneratedInstance(
        instance=instance,
        node_names=tuple(p.name for p in profiles),
        raw_capacities=caps,
        raw_demands=raw_demands,
    )
