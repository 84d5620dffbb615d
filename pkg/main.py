"""
EvoSeed – Online influence maximization on growing networks
Command-line entry point: generate, run, oracle, bench.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from config import ConfigError, ExperimentConfig, load_config, load_default_config
from diffusion import InstanceTooLargeError
from evolution import GrowthError
from graph_core import GraphError, export_temporal_csv
from harness import build_timeline, run_bench, run_experiment, run_oracle_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _config_from(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else load_default_config()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "budget", None):
        config.budgets = list(args.budget)
    if getattr(args, "workers", None):
        config.workers = args.workers
    config.validate()
    return config


def cmd_generate(args) -> int:
    config = _config_from(args)
    if config.generator == "file":
        raise ConfigError("generate needs a synthetic generator, not 'file'")
    timeline = build_timeline(config)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        export_temporal_csv(timeline.graph, f)
    print(f"{timeline.graph.node_count} nodes, {timeline.graph.tie_count} ties over "
          f"{timeline.trials} trials -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config_from(args)
    result = run_experiment(config, Path(args.output) if args.output else None)
    for path in result.files:
        print(path)
    return EXIT_OK


def cmd_oracle(args) -> int:
    report = run_oracle_check(
        instances=args.instances, nodes=args.nodes, edges=args.edges, k=args.k,
        epsilon=args.epsilon, seed=args.seed or 0,
    )
    worst = min(report.ratios) if report.ratios else float("nan")
    print(f"{report.passed}/{report.total} instances reach {report.threshold:.4f} of OPT "
          f"(worst ratio {worst:.4f})")
    return EXIT_OK if report.passed == report.total else EXIT_FAILED


def cmd_bench(args) -> int:
    report = run_bench(args.sizes, k=args.k, epsilon=args.epsilon, seed=args.seed or 0)
    print("nodes,edges,seconds,err_sets")
    for row in report.rows:
        print(f"{row.nodes},{row.edges},{row.seconds:.3f},{row.sets}")
    print(f"log-log slope: {report.slope:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoseed", description="Online influence maximization on growing networks")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="emit a synthetic temporal edge list")
    gen.add_argument("--config", help="JSON config file (evoseed.json or defaults otherwise)")
    gen.add_argument("--seed", type=int)
    gen.add_argument("-o", "--output", default="world.csv")
    gen.set_defaults(func=cmd_generate)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="JSON config file (evoseed.json or defaults otherwise)")
    run.add_argument("--seed", type=int)
    run.add_argument("-k", "--budget", type=int, action="append", help="seed budget; repeat for a sweep")
    run.add_argument("--workers", type=int)
    run.add_argument("-o", "--output", help="output directory (config output_dir otherwise)")
    run.set_defaults(func=cmd_run)

    oracle = sub.add_parser("oracle", help="compare Evo-IMM with brute force on tiny instances")
    oracle.add_argument("--instances", type=int, default=100)
    oracle.add_argument("--nodes", type=int, default=8)
    oracle.add_argument("--edges", type=int, default=12)
    oracle.add_argument("-k", type=int, default=2)
    oracle.add_argument("--epsilon", type=float, default=0.1)
    oracle.add_argument("--seed", type=int)
    oracle.set_defaults(func=cmd_oracle)

    bench = sub.add_parser("bench", help="Evo-IMM wall time against graph size")
    bench.add_argument("--sizes", type=int, nargs="+", default=[10_000, 30_000, 100_000])
    bench.add_argument("-k", type=int, default=10)
    bench.add_argument("--epsilon", type=float, default=0.5)
    bench.add_argument("--seed", type=int)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, GraphError, InstanceTooLargeError, GrowthError, UnicodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
