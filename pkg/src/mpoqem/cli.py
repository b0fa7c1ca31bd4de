"""Command line entry point: ``mpoqem-bench <experiment> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import bench


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpoqem-bench",
        description="Run seeded error-mitigation benchmarks and write CSV results.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for exp in bench.EXPERIMENTS:
        p = sub.add_parser(exp, help=f"run the {exp} experiment")
        p.add_argument("--config", metavar="PATH", help="TOML file overriding the preset")
        p.add_argument("--out", metavar="DIR", default="results", help="output directory (default: results)")
        p.add_argument("--seed", type=int, help="base seed; rep r uses seed + r")
        p.add_argument("--reps", type=int, help="seeds per parameter point")
        p.add_argument("--paper-scale", action="store_true", help="use the large published-size presets")
        p.add_argument("--threads", type=int, help="worker processes")
        p.add_argument("--check", action="store_true", help="re-read outputs and verify the summary")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg = bench.load_config(args.config, args.experiment, args.paper_scale)
        else:
            cfg = bench.preset(args.experiment, args.paper_scale)
        overrides = {k: getattr(args, k) for k in ("seed", "reps", "threads") if getattr(args, k) is not None}
        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
    except (bench.ConfigError, OSError, ValueError, TypeError) as exc:
        print(f"mpoqem-bench: config error: {exc}", file=sys.stderr)
        return 2
    result = bench.run_experiment(cfg)
    paths = bench.write_outputs(result, args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    if result.failures:
        print(f"{len(result.failures)} seed(s) failed; see the manifest", file=sys.stderr)
    if args.check and not bench.check_summary(cfg.experiment, paths["rows"], paths["summary"]):
        print("summary does not match rows", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
