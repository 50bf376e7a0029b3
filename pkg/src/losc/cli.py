"""Command-line entry point: ``losc {train,bench,trace,check}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import Config, ConfigError, apply_overrides, benchmark_config, load

log = logging.getLogger("losc")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file (defaults built in)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. --set guidance.n=4 (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="losc", description="PN / APN / PN-LOSC engagement simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the curvature policy with PPO")
    _common(p)
    p.add_argument("--episodes", type=int, help="total training episodes (rounded down to whole rollouts)")
    p.add_argument("--out", type=Path, default=Path("runs/train"), help="output directory")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("bench", help="Monte Carlo benchmark of one or more guidance laws")
    _common(p)
    p.add_argument("--law", action="append", choices=("pn", "apn", "pn-losc"),
                   help="law to benchmark (repeatable; default pn and apn)")
    p.add_argument("--episodes", type=int, help="episodes per law")
    p.add_argument("--target-g", type=float, default=30.0, help="target maximum acceleration in g")
    p.add_argument("--drag", choices=("none", "randomized"), default="none", help="target drag model")
    p.add_argument("--no-radome", action="store_true", help="zero the radome refraction slopes")
    p.add_argument("--checkpoint", type=Path, help="trained policy for pn-losc")
    p.add_argument("--workers", type=int, help="worker processes (0 = all CPUs)")
    p.add_argument("--out", type=Path, default=Path("runs/bench"), help="output directory")

    p = sub.add_parser("trace", help="export per-step trajectories")
    _common(p)
    p.add_argument("--law", choices=("pn", "apn", "pn-losc"), default="pn")
    p.add_argument("--episodes", type=int, default=1, help="number of trajectories")
    p.add_argument("--target-g", type=float, default=30.0)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs/trace"))

    p = sub.add_parser("check", help="run the built-in invariant and oracle checks")
    _common(p)
    return parser


def _load_config(args) -> Config:
    cfg = load(args.config) if args.config else Config()
    cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_train(args, cfg: Config) -> int:
    from .ppo import train

    n_updates = None
    if args.episodes is not None:
        n_updates = args.episodes // cfg.trainer.episodes_per_rollout
        if n_updates < 1:
            raise ValueError("--episodes is smaller than one rollout")
    res = train(cfg, args.out, n_updates=n_updates, resume=args.resume,
                progress=lambda row: print(f"update {int(row['update'])}: reward {row['reward_mean']:.3f} kl {row['kl']:.2e}"))
    print(f"wrote {args.out / 'history.csv'} and {res.checkpoint}")
    return 0


def _cmd_bench(args, cfg: Config) -> int:
    from .bench import format_table, run_benchmark, write_report

    laws = args.law or ["pn", "apn"]
    stats = []
    for law in laws:
        c = benchmark_config(law, args.drag, args.target_g, not args.no_radome, base=cfg)
        stats.append(run_benchmark(c, args.episodes, args.checkpoint, args.workers))
    txt, js = write_report(stats, args.out)
    print(format_table(stats), end="")
    print(f"wrote {txt} and {js}")
    return 0


def _cmd_trace(args, cfg: Config) -> int:
    from .bench import export_trajectory
    from .seeding import episode_seeds

    c = benchmark_config(args.law, cfg.scenario.drag_mode, args.target_g, cfg.scenario.radome.enabled, base=cfg)
    for seed in episode_seeds(c.seed, args.episodes):
        print(export_trajectory(c, seed, args.out, checkpoint=args.checkpoint))
    return 0


def _cmd_check(args, cfg: Config) -> int:
    from .checks import run_checks

    return 0 if run_checks() else 1


COMMANDS = {"train": _cmd_train, "bench": _cmd_bench, "trace": _cmd_trace, "check": _cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"losc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
