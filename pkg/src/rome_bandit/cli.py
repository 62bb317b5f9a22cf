"""Command-line entry points for simulation, evaluation, and validation.

Subcommands:
  simulate    run a configured experiment and emit traces plus CSVs
  ope         bootstrap off-policy value estimates from a decision log
  validate    run the built-in invariant checks (exit 0 iff all pass)
  emit-truth  dump the simulator's ground truth as CSV grids
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .envs import ENV_KINDS, EnvConfig, SimEnvironment
from .ope import bootstrap_eval, filter_records, load_log
from .policy import PolicyConfig
from .runner import (
    POLICY_TAGS,
    ExperimentConfig,
    build_policy,
    load_trace,
    run_experiment,
    trace_to_log,
)
from .validate import run_checks


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rome-exp",
        description="Mixed-effects bandit experiments: simulate, evaluate, validate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation experiment")
    sim.add_argument("config", nargs="?", help="JSON experiment config file")
    sim.add_argument("--setting", choices=ENV_KINDS)
    sim.add_argument("--stages", type=int, help="triangular recruitment horizon K")
    sim.add_argument("--users", type=int, help="rectangular grid: number of users")
    sim.add_argument("--times", type=int, help="rectangular grid: decisions per user")
    sim.add_argument("--reps", type=int, help="number of replications")
    sim.add_argument("--policies", help="comma-separated policy tags")
    sim.add_argument("--seed", type=int, help="base seed; replication r uses seed+r")
    sim.add_argument("--arms", type=int, help="number of treatment arms")
    sim.add_argument("--threads", type=int, help="replications run in parallel")
    sim.add_argument("--out", help="output directory")

    ope = sub.add_parser("ope", help="off-policy evaluation of policies on a log")
    ope.add_argument("log", help="decision log: trace JSONL or logged-record JSONL")
    ope.add_argument("--policies", required=True, help="comma-separated policy tags")
    ope.add_argument("--bootstrap", type=int, default=100, metavar="B")
    ope.add_argument("--setting", choices=ENV_KINDS, default="homogeneous")
    ope.add_argument("--stages", type=int, help="world size; inferred from log if omitted")
    ope.add_argument("--seed", type=int, default=0)
    ope.add_argument(
        "--absolute",
        action="store_true",
        help="report absolute values instead of improvement over the logged policy",
    )
    ope.add_argument("--out", default=".", help="output directory")

    sub.add_parser("validate", help="run invariant checks")

    truth = sub.add_parser("emit-truth", help="dump ground-truth grids as CSV")
    truth.add_argument("--setting", choices=ENV_KINDS, default="homogeneous")
    truth.add_argument("--stages", type=int, required=True)
    truth.add_argument("--seed", type=int, default=0)
    truth.add_argument("--grid", type=int, default=51, help="baseline grid resolution")
    truth.add_argument("--out", default=".", help="output directory")
    return parser


def _simulate(args) -> int:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    overrides = {
        "setting": args.setting,
        "num_stages": args.stages,
        "num_users": args.users,
        "num_times": args.times,
        "replications": args.reps,
        "base_seed": args.seed,
        "num_arms": args.arms,
        "threads": args.threads,
        "out_dir": args.out,
    }
    if args.policies:
        overrides["policies"] = args.policies.split(",")
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if data.get("num_users") is not None and "num_stages" not in data:
        data.setdefault("num_stages", None)
    config = ExperimentConfig.from_dict(data)
    paths = run_experiment(config)
    print(f"wrote {paths['regret']}")
    print(f"wrote {paths['summary']}")
    print(f"wrote {paths['pairwise']}")
    print(f"wrote {len(paths['traces'])} trace files to {config.out_dir}")
    return 0


def _load_records(path: str):
    with open(path) as fh:
        first = json.loads(fh.readline())
    if "propensity" in first:
        return load_log(path)
    return trace_to_log(load_trace(path))


def _ope(args) -> int:
    records = filter_records(_load_records(args.log))
    if not records:
        print("no usable records after propensity filtering", file=sys.stderr)
        return 2
    tags = args.policies.split(",")
    size = args.stages or max(max(r.user, r.time) for r in records)
    env = SimEnvironment(
        EnvConfig(
            kind=args.setting,
            num_stages=size,
            num_arms=records[0].arm_features.shape[0],
            seed=args.seed,
        )
    )
    cells = []
    seen = set()
    for rec in records:
        if (rec.user, rec.time) not in seen:
            seen.add((rec.user, rec.time))
            cells.append((rec.user + rec.time - 1, rec.user, rec.time))
    config = PolicyConfig()
    columns = []
    for index, tag in enumerate(tags):
        if tag not in POLICY_TAGS:
            print(f"unknown policy tag {tag!r}", file=sys.stderr)
            return 2
        factory = lambda rng, tag=tag: build_policy(tag, env, config, size, cells, rng)
        estimates = bootstrap_eval(
            records,
            factory,
            args.bootstrap,
            np.random.default_rng(np.random.SeedSequence([args.seed, index])),
            relative=not args.absolute,
        )
        columns.append(estimates)
        se = estimates.std(ddof=1) / np.sqrt(len(estimates)) if len(estimates) > 1 else 0.0
        print(f"{tag}: mean {estimates.mean():.6f}, se {se:.6f}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "ope_estimates.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(tags)
        writer.writerows(zip(*columns))
    print(f"wrote {path}")
    return 0


def _validate() -> int:
    results = run_checks()
    failed = False
    for name, ok, detail in results:
        if ok:
            print(f"ok {name}: {detail}")
        else:
            failed = True
            print(f"FAIL {name}: {detail}")
    return 1 if failed else 0


def _emit_truth(args) -> int:
    env = SimEnvironment(
        EnvConfig(kind=args.setting, num_stages=args.stages, seed=args.seed)
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    effects_path = out_dir / "truth_effects.csv"
    with open(effects_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["i", "t"] + [f"effect_{j}" for j in range(1, env.effect_dim + 1)]
        )
        for i in range(1, args.stages + 1):
            for t in range(1, args.stages + 1):
                writer.writerow([i, t, *env.true_effect(i, t).tolist()])

    baseline_path = out_dir / "truth_baseline.csv"
    grid = np.linspace(-1.0, 1.0, args.grid)
    with open(baseline_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s1", "s2", "baseline"])
        for s1 in grid:
            for s2 in grid:
                s = np.array([s1, s2])
                writer.writerow([float(s1), float(s2), env.baseline_value(s)])
    print(f"wrote {effects_path}")
    print(f"wrote {baseline_path}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "ope":
            return _ope(args)
        if args.command == "validate":
            return _validate()
        if args.command == "emit-truth":
            return _emit_truth(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
