"""Command-line front end.

Subcommands: ``run`` (single episode, trace CSV), ``experiment``
(declarative sweep from a JSON config, aggregate CSV), ``minimax``
(worst-case stress over the hardest instance family) and ``init-stats``
(halving-probe statistics). Human-readable summaries go to stdout,
machine artifacts only to files, errors to stderr with a nonzero exit.
The ALLOC_BANDIT_THREADS environment variable caps worker parallelism
(0 = auto).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .allocator import PolicyOptions, atomic_write_text, run_episode
from .harness import (
    ExperimentConfig,
    emit_csv,
    minimax_stress,
    run_experiment,
)
from .initialization import halving_init, run_modified, sample_eta
from .model import ProblemInstance, split_rng


def _parse_float_list(raw: str) -> tuple:
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if part.lower() in ("null", "none", "inf"):
            out.append(None)
        else:
            out.append(float(part))
    if not out:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alloc-bandit",
        description="Sequential resource allocation with optimistic confidence intervals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one episode and write its trace CSV")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--nus", type=_parse_float_list, help="difficulties, e.g. 0.4,0.6 (null = unbounded)")
    src.add_argument("--config", help="instance JSON file {nus, horizon, seed}")
    run_p.add_argument("--horizon", type=int, help="number of steps")
    run_p.add_argument("--seed", type=int, help="environment seed (default 0 or the config's)")
    run_p.add_argument("--mode", choices=("weighted", "unweighted"), default="weighted")
    run_p.add_argument(
        "--lower-bounds",
        type=_parse_float_list,
        help="known initial lower bounds; omit to self-initialize",
    )
    run_p.add_argument("--snapshot-intervals", action="store_true", help="record per-step intervals")
    run_p.add_argument("--out", help="trace CSV path")

    exp_p = sub.add_parser("experiment", help="run a sweep described by a JSON config")
    exp_p.add_argument("--config", required=True, help="experiment JSON config")
    exp_p.add_argument("--out", help="aggregate CSV path (overrides config output_path)")
    exp_p.add_argument("--reps", type=int, help="override replication count")

    mm_p = sub.add_parser("minimax", help="stress test on the hardest instance family")
    mm_p.add_argument("--horizon", type=int, required=True)
    mm_p.add_argument("--k", type=int, required=True, help="number of jobs")
    mm_p.add_argument("--reps", type=int, default=100)
    mm_p.add_argument("--seed", type=int, default=0)

    init_p = sub.add_parser("init-stats", help="halving-probe Monte-Carlo statistics")
    init_p.add_argument("--nu", type=str, required=True, help="difficulty (or 'inf' for unbounded)")
    init_p.add_argument("--reps", type=int, default=100_000)
    init_p.add_argument("--seed", type=int, default=0)
    init_p.add_argument("--out", help="optional per-replication CSV path")
    return parser


def _cmd_run(args) -> int:
    if args.config is not None:
        with open(args.config) as handle:
            instance = ProblemInstance.from_json(handle.read())
        horizon = args.horizon if args.horizon is not None else instance.horizon
        seed = args.seed if args.seed is not None else instance.base_seed
        instance = ProblemInstance(instance.nus, horizon, seed)
    else:
        if args.horizon is None:
            raise SystemExit("error: --horizon is required with --nus")
        instance = ProblemInstance(args.nus, args.horizon, args.seed if args.seed is not None else 0)
    options = PolicyOptions(
        mode=args.mode,
        record_intervals=args.snapshot_intervals,
    )
    if args.lower_bounds is None:
        trace = run_modified(instance, options)
    else:
        bounds = [float(v) for v in args.lower_bounds]
        trace = run_episode(instance, bounds, options)
    if args.out:
        trace.to_csv(args.out)
    print(
        f"run: n={instance.horizon} K={instance.num_jobs} mode={args.mode} "
        f"final_regret={trace.final_regret:.6g}"
        + (f" wrote={args.out}" if args.out else "")
    )
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config) as handle:
        config = ExperimentConfig.from_json(handle.read())
    if args.reps is not None:
        config = ExperimentConfig(
            experiment_id=config.experiment_id,
            nus=config.nus,
            horizon=config.horizon,
            sweep=config.sweep,
            grid=config.grid,
            replications=args.reps,
            arms=config.arms,
            base_seed=config.base_seed,
            output_path=config.output_path,
        )
    result = run_experiment(config)
    out = args.out or config.output_path
    if out:
        emit_csv(result, out)
    overall = sum(r.mean_regret for r in result.rows) / len(result.rows)
    print(
        f"experiment {config.experiment_id}: {len(config.grid)} points x "
        f"{len(config.arms)} arms x {config.replications} reps, "
        f"mean final regret {overall:.6g}" + (f" wrote={out}" if out else "")
    )
    return 0


def _cmd_minimax(args) -> int:
    result = minimax_stress(args.horizon, args.k, args.reps, args.seed)
    print(
        f"minimax: n={result.n} K={result.num_jobs} reps={result.reps} "
        f"sup_regret={result.sup_regret:.6g} sqrt_nK={result.sqrt_nk:.6g} "
        f"ratio={result.ratio:.6g}"
    )
    return 0


def _cmd_init_stats(args) -> int:
    nu = None if args.nu.lower() in ("inf", "null", "none") else float(args.nu)
    if nu is not None and not nu > 0:
        raise SystemExit(f"error: --nu must be positive, got {args.nu}")
    rng = split_rng(args.seed)
    etas = np.empty(args.reps)
    steps = np.empty(args.reps, dtype=np.int64)
    rows = []
    for rep in range(args.reps):
        record = halving_init(nu, rng)
        etas[rep] = sample_eta(nu, record.nu_lower0)
        steps[rep] = record.steps_used
        if args.out:
            rows.append(f"{rep},{record.steps_used},{record.nu_lower0!r},{etas[rep]!r}")
    mean_eta = float(etas.mean())
    se_eta = float(etas.std(ddof=1) / math.sqrt(args.reps)) if args.reps > 1 else 0.0
    if args.out:
        atomic_write_text(args.out, "\n".join(["rep,steps,nu_lower0,eta"] + rows) + "\n")
    print(
        f"init-stats: nu={args.nu} reps={args.reps} mean_eta={mean_eta:.6g} "
        f"se_eta={se_eta:.6g} mean_steps={float(steps.mean()):.6g}"
        + (f" wrote={args.out}" if args.out else "")
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "run": _cmd_run,
        "experiment": _cmd_experiment,
        "minimax": _cmd_minimax,
        "init-stats": _cmd_init_stats,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 2
        return int(exc.code or 0)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())
