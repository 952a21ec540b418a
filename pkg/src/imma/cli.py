"""Command line entry point: ``imma run``, ``imma check`` and ``imma bench``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .experiment import (
    ConfigError,
    ExperimentConfig,
    config_to_text,
    rows_to_csv,
    run_experiment,
    summarize,
    summary_to_csv,
)
from .graph import GraphParseError


def _load_config(args) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = ExperimentConfig.from_text(text)
    else:
        cfg = ExperimentConfig()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if args.directed is not None:
        cfg.directed = args.directed
    if args.default_prob is not None:
        cfg.default_prob = args.default_prob
    if getattr(args, "parallel", None):
        cfg.workers = args.parallel
    cfg.validate()
    return cfg


def _summary_path(out: Path) -> Path:
    return out.with_name(out.stem + "_summary" + (out.suffix or ".csv"))


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    summary = Path(args.summary) if args.summary else _summary_path(out)
    rows = run_experiment(cfg, trace_dir=args.trace_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rows_to_csv(rows))
    summary.write_text(summary_to_csv(summarize(rows)))
    print(f"wrote {len(rows)} rows to {out} and summary to {summary}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    cfg.timing = True
    start = time.perf_counter()
    rows = run_experiment(cfg)
    total = time.perf_counter() - start
    print(f"{'policy':<26} {'k':>6} {'wall_ms_mean':>14}")
    for row in summarize(rows):
        print(f"{row['policy']:<26} {row['k']:>6g} {row['wall_ms_mean']:>14.2f}")
    print(f"total {total:.2f} s")
    return 0


def cmd_check(args) -> int:
    from .oracle import (
        check_adaptive_dr_submodular,
        check_adaptive_monotone,
        exact_marginal_gain,
        random_tiny_instance,
        reachable_states,
        report_text,
    )

    rng = np.random.default_rng(args.seed)
    failures = 0
    for i in range(args.instances):
        inst = random_tiny_instance(rng)
        # exact_marginal_gain cross-checks the enumeration against the residual route
        for psi in reachable_states(inst):
            x = psi.x()
            for u in range(inst.n):
                if x[u] < inst.b[u]:
                    exact_marginal_gain(inst, x, psi, u)
        report = check_adaptive_monotone(inst) + check_adaptive_dr_submodular(inst)
        status = "ok" if not report else "FAIL"
        print(f"instance {i}: n={inst.n} m={inst.graph.m} b={inst.b.tolist()} {status}")
        if report:
            failures += 1
            sys.stdout.write(report_text(report))
    print(f"{args.instances - failures}/{args.instances} instances without violations")
    return 1 if failures else 0


def _add_config_args(p: argparse.ArgumentParser, config_required: bool) -> None:
    if config_required:
        p.add_argument("config", help="flat key = value config file")
    else:
        p.add_argument("config", nargs="?", help="flat key = value config file (defaults if omitted)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--directed", dest="directed", action="store_true", default=None)
    g.add_argument("--undirected", dest="directed", action="store_false")
    p.add_argument("--default-prob", help="indegree or constant:<p> for edges without a probability")
    p.add_argument("--parallel", type=int, metavar="N", help="run replications on N worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imma", description="Adaptive influence maximization with multiple activations")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV")
    _add_config_args(run, config_required=True)
    run.add_argument("--out", default="results.csv")
    run.add_argument("--summary", help="summary CSV path (default: <out>_summary.csv)")
    run.add_argument("--trace-dir", help="write one trace log per run into this directory")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="run the oracle property suites on random tiny instances")
    check.add_argument("--instances", type=int, default=20)
    check.add_argument("--seed", type=int, default=0)
    check.set_defaults(func=cmd_check)

    bench = sub.add_parser("bench", help="time an experiment without writing CSV")
    _add_config_args(bench, config_required=False)
    bench.set_defaults(func=cmd_bench)

    show = sub.add_parser("config", help="print the effective config")
    _add_config_args(show, config_required=False)
    show.set_defaults(func=lambda a: print(config_to_text(_load_config(a)), end="") or 0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
