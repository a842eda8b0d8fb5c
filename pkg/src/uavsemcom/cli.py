"""Command line entry point: ``uavsemcom {train,eval,sweep,compare}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .agents import VARIANTS, ConfigError
from .harness import AXES, RunConfig, compare, evaluate, load_config, sweep, train


def _parse_values(text: str) -> list:
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            num = float(item)
        except ValueError:
            raise ConfigError(f"values: not a number: {item!r}") from None
        values.append(int(num) if num.is_integer() and "e" not in item.lower() and "." not in item
                      else num)
    if not values:
        raise ConfigError("values: empty list")
    return values


def _fail(kind: str, message: str, code: int) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    sys.exit(code)


class _Parser(argparse.ArgumentParser):
    """Usage errors are reported as one JSON line, like every other failure."""

    def error(self, message):
        _fail("usage", f"{self.prog}: {message}", 2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uavsemcom",
                                     description="UAV semantic data collection with hybrid-action PPO")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, algos=VARIANTS):
        p.add_argument("--config", type=Path, help="JSON run config")
        p.add_argument("--algo", choices=algos)
        p.add_argument("--seed", type=int)
        p.add_argument("--episodes", type=int)
        p.add_argument("--out", type=str, help="output directory")

    common(sub.add_parser("train", help="train one algorithm"))
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint in mean mode")
    common(p_eval)
    p_eval.add_argument("--checkpoint", type=Path,
                        help="checkpoint directory (default OUT/checkpoints/final)")
    p_eval.add_argument("--freeze-fading", action="store_true")
    p_sweep = sub.add_parser("sweep", help="train/evaluate across one parameter axis")
    common(p_sweep, VARIANTS + ("oracle", "fixed"))
    p_sweep.add_argument("--axis", choices=AXES, required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated list")
    common(sub.add_parser("compare", help="train all algorithms and tabulate them"))
    return parser


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.algo and args.algo in VARIANTS:
        overrides["algo"] = args.algo
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.out:
        overrides["output_dir"] = args.out
    return replace(cfg, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        if args.command == "train":
            result = train(cfg)
            print(json.dumps({"metrics": str(result.metrics_path),
                              "checkpoint": str(result.checkpoint_dir)}))
        elif args.command == "eval":
            ckpt = args.checkpoint or Path(cfg.output_dir) / "checkpoints" / "final"
            print(json.dumps(evaluate(cfg, ckpt, freeze_fading=args.freeze_fading)))
        elif args.command == "sweep":
            algos = [args.algo] if args.algo else [cfg.algo]
            rows = sweep(cfg, args.axis, _parse_values(args.values), algos)
            print(json.dumps({"csv": str(Path(cfg.output_dir) / f"sweep_{args.axis}.csv"),
                              "points": len(rows)}))
        elif args.command == "compare":
            algos = [args.algo] if args.algo else list(VARIANTS)
            compare(cfg, algos)
            print(json.dumps({"csv": str(Path(cfg.output_dir) / "compare.csv")}))
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
