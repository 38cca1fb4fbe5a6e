import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from .config.settings import Settings, dump_settings, load_settings, output_root
from .errors import ArenaError
from .harness.benchmark import bench_throughput, write_bench_csv
from .harness.controllers import parse_agent_spec
from .harness.evaluator import evaluate, write_report_csv
from .harness.export import export_histograms, load_reports, write_results_csv
from .harness.match import trace_match, verify_trace
from .policy.serialization import load_params
from .ppo.trainer import train_skill
from .skills.curriculum import run_curriculum

logger = logging.getLogger(__name__)


def _out_dir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else output_root() / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(settings: Settings, out: Path, args) -> None:
    dump_settings(settings, out / "resolved_config.toml")
    logger.debug("resolved config written to %s (seed %d)", out, args.seed)


def cmd_train_skill(args, settings: Settings) -> int:
    settings.skill(args.skill)
    out = _out_dir(args, f"{args.skill}-seed{args.seed}")
    _snapshot(settings, out, args)
    params, metrics_path = train_skill(args.skill, settings, args.seed, out, args.steps)

    print("\nSummary:")
    print("-" * 50)
    print(f"Skill: {args.skill}")
    print(f"Parameters: {params.vector.size}")
    print(f"Weights: {out / (args.skill + '.sbrl')}")
    print(f"Metrics: {metrics_path}")
    return 0


def cmd_train_curriculum(args, settings: Settings) -> int:
    out = _out_dir(args, f"curriculum-seed{args.seed}")
    _snapshot(settings, out, args)
    phases = [int(p) for p in args.phases.split(",")] if args.phases else None
    params = run_curriculum(settings, args.seed, out, phases, args.steps)

    print("\nSummary:")
    print("-" * 50)
    print(f"Phases: {args.phases or 'all'}")
    print(f"Parameters: {params.vector.size}")
    print(f"Weights: {out / 'curriculum.sbrl'}")
    return 0


def cmd_eval(args, settings: Settings) -> int:
    spec_a, spec_b = parse_agent_spec(args.a), parse_agent_spec(args.b)
    episodes = args.episodes if args.episodes is not None else settings.harness.episodes
    out = _out_dir(args, f"eval-seed{args.seed}")
    _snapshot(settings, out, args)
    report = evaluate(spec_a, spec_b, episodes, args.seed, settings=settings, workers=args.workers)
    write_report_csv([report], out / "report.csv")
    write_results_csv([report], out / "results.csv")

    print("\nSummary:")
    print("-" * 50)
    print(f"{report.agent} vs {report.opponent}")
    print(f"Episodes: {report.episodes}")
    print(f"Win rate: {report.win_rate:.3f}")
    print(f"Mean steps: {report.mean_steps:.1f}")
    print(f"Mean damage: {report.mean_damage:.1f}")
    print(f"Restart fraction: {report.restart_fraction:.3f}")
    print(f"Report: {out / 'report.csv'}")
    return 0


def cmd_bench(args, settings: Settings) -> int:
    spec = None if args.agent in ("no-model", "idle") else parse_agent_spec(args.agent)
    counts = [int(n) for n in str(args.agents).split(",")]
    steps = args.steps if args.steps is not None else settings.harness.bench_steps
    repeats = args.repeats if args.repeats is not None else settings.harness.bench_repeats
    out = _out_dir(args, f"bench-seed{args.seed}")
    _snapshot(settings, out, args)
    results = [bench_throughput(spec, n, steps, repeats, settings, args.seed) for n in counts]
    write_bench_csv(results, out / "bench.csv")

    print("\nSummary:")
    print("-" * 50)
    for r in results:
        print(f"{r.agent} x{r.n_agents}: {r.mean:.1f} +/- {r.std:.1f} steps/s")
    return 0


def cmd_export(args, settings: Settings) -> int:
    reports = load_reports(Path(args.input))
    out = _out_dir(args, "export")
    written = export_histograms(reports, out, bins=args.bins or settings.harness.histogram_bins)

    print("\nSummary:")
    print("-" * 50)
    for path in written:
        print(path)
    return 0


def cmd_trace(args, settings: Settings) -> int:
    if args.verify:
        digest = verify_trace(Path(args.verify), settings)
        print(f"Trace verified: {args.verify} ({digest})")
        return 0
    spec_a, spec_b = parse_agent_spec(args.a), parse_agent_spec(args.b)
    out = _out_dir(args, f"trace-seed{args.seed}")
    _snapshot(settings, out, args)
    result, digest = trace_match(spec_a, spec_b, settings.arena, args.seed, out / "trace.jsonl", settings, args.steps)

    print("\nSummary:")
    print("-" * 50)
    print(f"Winner: {result.winner if result.winner is not None else 'none'}")
    print(f"Steps: {result.steps}")
    print(f"Trace: {out / 'trace.jsonl'} ({digest})")
    return 0


def cmd_inspect(args, settings: Settings) -> int:
    params = load_params(Path(args.weights))
    print(params.spec.model_dump_json(indent=2))
    print(f"Parameters: {params.vector.size}")
    return 0


COMMANDS = {
    "train-skill": cmd_train_skill,
    "train-curriculum": cmd_train_curriculum,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "export": cmd_export,
    "trace": cmd_trace,
    "inspect": cmd_inspect,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file layered over the defaults")
    common.add_argument("--seed", type=int, default=0, help="Seed threaded through every stochastic component")
    common.add_argument("--out", help="Output directory (default: $SBRL_OUTPUT_ROOT/<run>)")
    common.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE", help="Config override, e.g. ppo.epochs=5"
    )

    parser = argparse.ArgumentParser(description="Arena skill simulator: BT, hybrid and PPO agents")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-skill", parents=[common], help="Train one skill policy with PPO")
    p.add_argument("skill", help="flee, advance, combat, hide or collect")
    p.add_argument("--steps", type=int, help="Total environment steps (default from config)")

    p = sub.add_parser("train-curriculum", parents=[common], help="Train the curriculum baseline")
    p.add_argument("--steps", type=int, help="Steps per phase (default from config)")
    p.add_argument("--phases", help="Comma-separated phase ids, e.g. 1,2")

    p = sub.add_parser("eval", parents=[common], help="Evaluate agent A against agent B")
    p.add_argument("--a", required=True, help="Agent spec, e.g. bt, configs/trees/default.tree, hybrid:DIR")
    p.add_argument("--b", required=True, help="Opponent spec, e.g. static or aggressive")
    p.add_argument("--episodes", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("bench", parents=[common], help="Measure simulation steps per second")
    p.add_argument("--agent", default="no-model", help="Controller kind for every agent")
    p.add_argument("--agents", default="1,10", help="Agent counts, e.g. 1,10")
    p.add_argument("--steps", type=int)
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("export", parents=[common], help="Episode-length CSV and SVG histograms")
    p.add_argument("--input", required=True, help="results.csv written by eval")
    p.add_argument("--bins", type=int)

    p = sub.add_parser("trace", parents=[common], help="Record or verify a replay trace")
    p.add_argument("--a", default="bt")
    p.add_argument("--b", default="static")
    p.add_argument("--steps", type=int, help="Step limit for the traced match")
    p.add_argument("--verify", help="Trace file to re-simulate and check")

    p = sub.add_parser("inspect", parents=[common], help="Print the network spec of a weight file")
    p.add_argument("weights")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("SBRL_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    try:
        settings = load_settings(args.config, args.override)
        return COMMANDS[args.command](args, settings)
    except ArenaError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
