"""Command-line surface: generate, solve, run the distributed protocol,
verify, audit, benchmark, and evaluate breach probabilities.

Every command that writes artifacts also writes a ``*.manifest.json`` next to
its primary output listing the command, a digest of its configuration, the
seed, package versions, wall time, and every artifact path. Relative output
paths resolve against ``$FOGMARKET_OUT`` when it is set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .admm import run_admm
from .baselines import Scheme, run_scheme
from .bench import BenchConfig, run_benchmark, write_benchmark
from .equilibrium import verify_equilibrium
from .fairness import audit, write_audit_csv
from .market import (DegenerateInstanceError, InstanceError, dumps_instance,
                     load_instance)
from .privacy import (PLATFORM, MaskedTransport, ThreatModel,
                      breach_probability, estimate_inbound_distribution,
                      messages_per_round, write_transcript)
from .scenario import GeneratorConfig, generate, load_catalog
from .solution import EquilibriumSolution
from .subproblem import SubproblemError


def _out_path(raw: str) -> Path:
    path = Path(raw)
    base = os.environ.get("FOGMARKET_OUT")
    if base and not path.is_absolute():
        path = Path(base) / path
    path = path.resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _digest(params: dict) -> str:
    return hashlib.sha256(
        json.dumps(params, sort_keys=True, default=str).encode()).hexdigest()


def _write_manifest(command: str, params: dict, seed, outputs: list[Path],
                    wall_time: float) -> None:
    if not outputs:
        return
    manifest = {
        "command": command,
        "params": params,
        "config_digest": _digest(params),
        "seed": seed,
        "versions": {
            "fogmarket": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": wall_time,
        "outputs": [str(p) for p in outputs],
    }
    path = outputs[0].with_name(outputs[0].name + ".manifest.json")
    _atomic_write(path, json.dumps(manifest, indent=2) + "\n")


def _solution_doc(run) -> dict:
    if run.equilibrium is not None:
        doc = run.equilibrium.to_dict()
        doc["scheme"] = run.scheme.value
        return doc
    return {
        "scheme": run.scheme.value,
        "prices": None,
        "allocation": run.allocation.tolist(),
        "utilities": run.utilities.tolist(),
        "spend": None,
        "surplus": None,
        "mu": None,
        "meta": {"scheme": run.scheme.value},
    }


def cmd_generate(args) -> int:
    catalog = load_catalog(args.catalog) if args.catalog else None
    budgets = "equal" if args.budgets is None else tuple(args.budgets)
    config = GeneratorConfig(
        num_nodes=args.m, num_services=args.n,
        utility_limit=math.inf if args.limit == "inf" else float(args.limit),
        budgets=budgets, seed=args.seed,
        per_node_demands=args.per_node_demands, catalog=catalog)
    started = time.perf_counter()
    gen = generate(config)
    out = _out_path(args.out)
    meta = gen.meta() | {"seed": args.seed}
    _atomic_write(out, dumps_instance(gen.instance, meta=meta) + "\n")
    params = {"m": args.m, "n": args.n, "limit": args.limit,
              "budgets": args.budgets, "per_node_demands": args.per_node_demands}
    _write_manifest("generate", params, args.seed, [out],
                    time.perf_counter() - started)
    return 0


def cmd_solve(args) -> int:
    instance = load_instance(args.infile)
    started = time.perf_counter()
    run = run_scheme(instance, args.scheme, rho=args.rho)
    out = _out_path(args.out)
    _atomic_write(out, json.dumps(_solution_doc(run), indent=2) + "\n")
    params = {"scheme": args.scheme, "in": str(args.infile), "rho": args.rho}
    _write_manifest("solve", params, None, [out], time.perf_counter() - started)
    return 0


def cmd_admm(args) -> int:
    instance = load_instance(args.infile)
    aggregator = PLATFORM if args.agents == "platform" else 0
    if args.transport == "masked":
        transport = MaskedTransport(neighbor_count=args.neighbors,
                                    seed=args.seed, aggregator=aggregator,
                                    record=args.transcript is not None)
    else:
        transport = None
    started = time.perf_counter()
    outputs = []
    out = _out_path(args.out)
    trace = _out_path(args.trace) if args.trace else None
    solution = run_admm(instance, rho=args.rho, gamma_primal=args.gamma1,
                        gamma_dual=args.gamma2, max_iter=args.max_iter,
                        transport=transport, trace_path=trace)
    _atomic_write(out, json.dumps(solution.to_dict(), indent=2) + "\n")
    outputs.append(out)
    if trace:
        outputs.append(trace)
    if args.transcript and args.transport == "masked":
        tpath = _out_path(args.transcript)
        write_transcript(transport.transcripts, tpath)
        outputs.append(tpath)
    params = {"in": str(args.infile), "rho": args.rho, "gamma1": args.gamma1,
              "gamma2": args.gamma2, "max_iter": args.max_iter,
              "transport": args.transport, "agents": args.agents,
              "neighbors": args.neighbors}
    _write_manifest("admm", params, args.seed, outputs,
                    time.perf_counter() - started)
    if not solution.meta.converged:
        print(f"warning: hit max_iter={args.max_iter} with residuals "
              f"primal={solution.meta.primal_residual:.3e} "
              f"dual={solution.meta.dual_residual:.3e}", file=sys.stderr)
    return 0


def _load_point(path) -> EquilibriumSolution | tuple:
    doc = json.loads(Path(path).read_text())
    if doc.get("prices") is None:
        raise InstanceError(
            "solution file has no prices; only equilibrium-scheme solutions "
            "can be verified")
    return EquilibriumSolution.from_dict(doc)


def cmd_verify(args) -> int:
    instance = load_instance(args.infile)
    solution = _load_point(args.sol)
    started = time.perf_counter()
    report = verify_equilibrium(instance, solution, tol=args.tol)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        out = _out_path(args.out)
        _atomic_write(out, text + "\n")
        _write_manifest("verify", {"in": str(args.infile), "sol": str(args.sol),
                                   "tol": args.tol}, None, [out],
                        time.perf_counter() - started)
    else:
        print(text)
    return 0 if report.ok else 1


def cmd_audit(args) -> int:
    instance = load_instance(args.infile)
    doc = json.loads(Path(args.sol).read_text())
    allocation = np.asarray(doc["allocation"], dtype=float)
    scheme = doc.get("scheme") or doc.get("meta", {}).get("scheme", "")
    report = audit(instance, allocation, scheme=scheme, seed=args.seed)
    out = _out_path(args.out)
    started = time.perf_counter()
    write_audit_csv([report], out)
    _write_manifest("audit", {"in": str(args.infile), "sol": str(args.sol)},
                    args.seed, [out], time.perf_counter() - started)
    return 0


def cmd_bench(args) -> int:
    schemes = (tuple(Scheme) if args.schemes == "all"
               else tuple(Scheme(s) for s in args.schemes.split(",")))
    config = BenchConfig(
        num_nodes=args.m, num_services=args.n, seeds=args.seeds,
        master_seed=args.master_seed, schemes=schemes,
        utility_limit=math.inf if args.limit == "inf" else float(args.limit))
    result = run_benchmark(config)
    out_dir = _out_path(args.out_dir)
    paths = write_benchmark(result, out_dir)
    params = {"m": args.m, "n": args.n, "seeds": args.seeds,
              "schemes": [s.value for s in schemes], "limit": args.limit}
    _write_manifest("bench", params, args.master_seed, paths, result.wall_time)
    print(f"wrote {len(result.runs)} runs over {args.seeds} seeds to {out_dir}")
    return 0


def cmd_breach(args) -> int:
    if args.q is not None:
        q = np.array([float(v) for v in args.q.split(",")])
    elif args.estimate_q:
        q = estimate_inbound_distribution(args.n, args.b, seed=args.seed)
    else:
        q = np.zeros(args.n + 1)
        q[0] = 1.0
    states = ([False, True] if args.platform == "both"
              else [args.platform == "corrupt"])
    rows = []
    b_values = range(1, args.b + 1) if args.sweep else [args.b]
    for b in b_values:
        row = {"b": b, "messages_per_round": messages_per_round(args.n, b)}
        for corrupt in states:
            model = ThreatModel(channel_compromise_prob=args.p,
                                inbound_contact_dist=q,
                                platform_corrupt=corrupt)
            key = "corrupt_platform" if corrupt else "honest_platform"
            row[key] = breach_probability(model, b)
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    cols = list(rows[0])
    print(f"channel compromise probability p = {args.p}, N = {args.n}")
    print("  ".join(f"{c:>20}" for c in cols))
    for row in rows:
        print("  ".join(
            f"{row[c]:>20.6e}" if isinstance(row[c], float) else f"{row[c]:>20}"
            for c in cols))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogmarket",
        description="Market-equilibrium fog resource allocation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic instance")
    p.add_argument("--m", type=int, required=True, help="number of fog nodes")
    p.add_argument("--n", type=int, required=True, help="number of services")
    p.add_argument("--limit", default="600",
                   help="utility limit per service (number or 'inf')")
    p.add_argument("--budgets", type=float, nargs="+", default=None,
                   help="explicit per-service budgets (default: all 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-node-demands", action="store_true")
    p.add_argument("--catalog", default=None, help="node catalog JSON path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run one allocation scheme")
    p.add_argument("--scheme", required=True,
                   choices=[s.value for s in Scheme])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("admm", help="run the distributed protocol explicitly")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--gamma1", type=float, default=1e-4)
    p.add_argument("--gamma2", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--transport", choices=["plain", "masked"], default="plain")
    p.add_argument("--agents", choices=["platform", "peer"], default="platform",
                   help="who aggregates: the platform or a designated service")
    p.add_argument("--neighbors", type=int, default=2,
                   help="mask recipients per service (masked transport)")
    p.add_argument("--seed", type=int, default=0, help="mask RNG seed")
    p.add_argument("--trace", default=None, help="iteration trace CSV path")
    p.add_argument("--transcript", default=None,
                   help="masking transcript JSONL path")
    p.set_defaults(func=cmd_admm)

    p = sub.add_parser("verify", help="check a solution against the "
                                      "equilibrium conditions")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--sol", required=True)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("audit", help="fairness audit of a solution")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--sol", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="multi-seed scheme comparison")
    p.add_argument("--m", type=int, default=40)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--schemes", default="all",
                   help="'all' or comma list like geg,eg,prop")
    p.add_argument("--limit", default="600")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("breach", help="disclosure probability table")
    p.add_argument("--p", type=float, required=True,
                   help="per-channel compromise probability")
    p.add_argument("--b", type=int, required=True, help="neighbors per service")
    p.add_argument("--n", type=int, default=8, help="number of services")
    p.add_argument("--platform", choices=["honest", "corrupt", "both"],
                   default="both")
    p.add_argument("--q", default=None,
                   help="comma list for the inbound-contact distribution")
    p.add_argument("--estimate-q", action="store_true",
                   help="estimate the inbound distribution by simulation")
    p.add_argument("--sweep", action="store_true", help="sweep b from 1 to --b")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_breach)
    return parser


_KNOWN_ERRORS = (InstanceError, DegenerateInstanceError, SubproblemError,
                 ValueError, OSError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _KNOWN_ERRORS as exc:
        print(json.dumps({"error": {"type": type(exc).__name__,
                                    "message": str(exc)}}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
