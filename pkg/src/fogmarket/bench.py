"""Multi-seed scheme comparison producing plot-ready CSV data."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import Scheme, run_scheme
from .fairness import audit, utilization
from .scenario import (DEFAULT_DEMAND_RANGES, DEFAULT_UTILITY_LIMIT,
                       GeneratorConfig, generate)

RUN_COLUMNS = ["scheme", "seed", "total_utility", "min_utility", "ef_index",
               "min_sharing_margin", "min_proportionality_gap",
               "mean_utilization", "min_node_max_utilization", "iterations",
               "converged"]
UTILITY_COLUMNS = ["scheme", "seed", "service", "utility"]
SUMMARY_COLUMNS = ["scheme", "metric", "mean", "min", "q1", "median", "q3", "max"]
_SUMMARY_METRICS = ["total_utility", "min_utility", "ef_index",
                    "min_sharing_margin", "min_proportionality_gap",
                    "mean_utilization", "min_node_max_utilization"]


@dataclass(frozen=True)
class BenchConfig:
    num_nodes: int = 40
    num_services: int = 8
    seeds: int = 50
    master_seed: int = 0
    schemes: tuple[Scheme, ...] = tuple(Scheme)
    utility_limit: float = DEFAULT_UTILITY_LIMIT
    demand_ranges: tuple = DEFAULT_DEMAND_RANGES
    solver_kwargs: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class BenchResult:
    runs: list[dict]
    utilities: list[dict]
    summary: list[dict]
    wall_time: float


def _run_rows(config: BenchConfig, seed: int) -> tuple[list[dict], list[dict]]:
    gen = generate(GeneratorConfig(
        num_nodes=config.num_nodes,
        num_services=config.num_services,
        demand_ranges=config.demand_ranges,
        utility_limit=config.utility_limit,
        seed=(config.master_seed, seed),
    ))
    instance = gen.instance
    runs, utils = [], []
    for scheme in config.schemes:
        result = run_scheme(instance, scheme, **config.solver_kwargs)
        report = audit(instance, result.allocation, scheme=scheme.value,
                       seed=seed)
        use = utilization(instance, result.allocation)
        row = {
            "scheme": scheme.value,
            "seed": seed,
            "total_utility": float(result.utilities.sum()),
            "min_utility": float(result.utilities.min()),
            "ef_index": report.ef_index,
            "min_sharing_margin": report.min_sharing_margin,
            "min_proportionality_gap": report.min_proportionality_gap,
            "mean_utilization": report.mean_utilization,
            "min_node_max_utilization": float(use.max(axis=1).min()),
            "iterations": (result.equilibrium.meta.iterations
                           if result.equilibrium else 0),
            "converged": (result.equilibrium.meta.converged
                          if result.equilibrium else True),
        }
        runs.append(row)
        for i, u in enumerate(result.utilities):
            utils.append({"scheme": scheme.value, "seed": seed,
                          "service": i, "utility": float(u)})
    return runs, utils


def _summarize(runs: list[dict]) -> list[dict]:
    summary = []
    schemes = sorted({row["scheme"] for row in runs})
    for scheme in schemes:
        rows = [r for r in runs if r["scheme"] == scheme]
        for metric in _SUMMARY_METRICS:
            values = np.array([r[metric] for r in rows], dtype=float)
            q1, med, q3 = np.percentile(values, [25, 50, 75])
            summary.append({
                "scheme": scheme, "metric": metric,
                "mean": float(values.mean()), "min": float(values.min()),
                "q1": float(q1), "median": float(med), "q3": float(q3),
                "max": float(values.max()),
            })
    return summary


def run_benchmark(config: BenchConfig) -> BenchResult:
    """Run every scheme over seeded instances; deterministic per master seed."""
    started = time.perf_counter()
    runs, utils = [], []
    for seed in range(config.seeds):
        seed_runs, seed_utils = _run_rows(config, seed)
        runs.extend(seed_runs)
        utils.extend(seed_utils)
    summary = _summarize(runs)
    return BenchResult(runs=runs, utilities=utils, summary=summary,
                       wall_time=time.perf_counter() - started)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in columns})
    tmp.replace(path)


def _fmt(value):
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return value


def write_benchmark(result: BenchResult, out_dir: str | Path) -> list[Path]:
    """Write runs.csv, utilities.csv, and summary.csv under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "runs.csv", out / "utilities.csv", out / "summary.csv"]
    _write_csv(paths[0], RUN_COLUMNS, result.runs)
    _write_csv(paths[1], UTILITY_COLUMNS, result.utilities)
    _write_csv(paths[2], SUMMARY_COLUMNS, result.summary)
    return paths
