"""Command-line entry point.

Subcommands: trace (floorplan scene -> OBJ), simulate (theater / distortion /
bubbles), train, rollout, report, verify. Exit codes: 0 success, 2 config
error, 3 scene error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import sys
import time

from ..agents import DivergenceDetected
from . import report as report_mod
from .scenario import (
    ConfigError,
    ScenarioConfig,
    SceneLoadError,
    run_scenario,
    run_trace,
    verify_bundle,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENE = 3
EXIT_DIVERGED = 4


def _default_label(args) -> str:
    return args.label if args.label else time.strftime("%Y%m%d-%H%M%S")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="scenario config JSON")
    p.add_argument("--out", required=True, help="output root directory")
    p.add_argument("--label", default=None, help="bundle directory name (default: timestamp)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagesim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="extrude a traced scene into an OBJ bundle")
    p.add_argument("--config", required=True, help="scene JSON (schema v1)")
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None)

    p = sub.add_parser("simulate", help="run a theater / distortion / bubbles scenario")
    _add_run_args(p)

    p = sub.add_parser("train", help="train an audience-agent policy")
    _add_run_args(p)
    p.add_argument("--steps", type=int, default=None, help="override PPO step budget")

    p = sub.add_parser("rollout", help="roll a policy out to traces")
    _add_run_args(p)
    p.add_argument("--episodes", type=int, default=None, help="override episode count")

    p = sub.add_parser("report", help="regenerate report.json and plots for a bundle")
    p.add_argument("bundle", help="bundle directory")

    p = sub.add_parser("verify", help="re-check a bundle's manifest hashes")
    p.add_argument("bundle", help="bundle directory")
    return parser


def _load_config(args, expect: tuple[str, ...]) -> ScenarioConfig:
    config = ScenarioConfig.load(args.config)
    if config.kind not in expect:
        raise ConfigError(
            f"scenario kind {config.kind!r} not valid here (expected one of {expect})"
        )
    doc = dict(config.doc)
    if args.seed is not None:
        doc["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        doc.setdefault("train", {})
        doc["train"] = {**doc["train"], "steps": args.steps}
    if getattr(args, "episodes", None) is not None:
        doc.setdefault("rollout", {})
        doc["rollout"] = {**doc["rollout"], "episodes": args.episodes}
    return ScenarioConfig.parse(doc, base_dir=config.base_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "trace":
            out = run_trace(args.config, args.out, args.label or time.strftime("%Y%m%d-%H%M%S"))
            print(f"wrote {out}")
        elif args.command == "simulate":
            config = _load_config(args, ("theater", "distortion", "bubbles"))
            out = run_scenario(config, args.out, _default_label(args))
            print(f"wrote {out}")
        elif args.command == "train":
            config = _load_config(args, ("train",))
            out = run_scenario(config, args.out, _default_label(args))
            print(f"wrote {out}")
        elif args.command == "rollout":
            config = _load_config(args, ("rollout",))
            out = run_scenario(config, args.out, _default_label(args))
            print(f"wrote {out}")
        elif args.command == "report":
            report_mod.emit_report(args.bundle)
            from .scenario import Bundle
            import json as _json
            from pathlib import Path as _Path

            bundle_dir = _Path(args.bundle)
            manifest = _json.loads((bundle_dir / "manifest.json").read_text())
            Bundle(bundle_dir, manifest.get("kind", "?"), manifest.get("seed", 0)).finalize()
            print(f"refreshed report in {args.bundle}")
        elif args.command == "verify":
            problems = verify_bundle(args.bundle)
            if problems:
                for p in problems:
                    print(f"FAIL {p}", file=sys.stderr)
                return EXIT_CONFIG
            print("ok")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SceneLoadError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except report_mod.IncompleteBundle as exc:
        print(f"bundle error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceDetected as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
