"""Command line entry point ``twistorlab``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, TwistorLabError
from .scenarios import REGISTRY, ScenarioConfig, default_suite_dir, run_all, run_scenario


def _grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 32x32, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twistorlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", choices=sorted(REGISTRY))
    run.add_argument("--metric", action="append", help="metric spec; repeat for several")
    run.add_argument("--lambda", dest="lam", help="lambda spec, e.g. const:0.2")
    run.add_argument("--grid", type=_grid, help="NxM grid of (beta, gamma)")
    run.add_argument("--tol", type=float)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", help="output directory")
    run.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                     help="scenario parameter override")
    run.add_argument("--plots", action="store_true", help="also write SVG heat maps")
    run.add_argument("--canonical", action="store_true",
                     help="omit timestamps and runtimes from the report")

    suite = sub.add_parser("suite", help="run every JSON config in a directory")
    suite.add_argument("dir", nargs="?", help="config directory (default: shipped suite)")
    suite.add_argument("--out", help="output root")
    suite.add_argument("--canonical", action="store_true")

    sub.add_parser("list", help="list registered scenarios")
    return ap


def _params(items) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param needs KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for spec in REGISTRY.values():
                print(f"{spec.id:<24} {spec.description}")
            return 0
        if args.command == "suite":
            return run_all(args.dir or default_suite_dir(), args.out, canonical=args.canonical)
        cfg = ScenarioConfig(args.scenario, args.metric, args.lam, args.grid, args.tol, args.seed,
                             args.out, args.canonical, args.plots, _params(args.param))
        rep = run_scenario(cfg)
    except TwistorLabError as exc:
        print(f"twistorlab: {exc}", file=sys.stderr)
        return 2
    for a in rep.assertions:
        print(f"{'PASS' if a.passed else 'FAIL'}  {a.name:<40} {a.value:.3e} {a.comparison} {a.threshold:.1e}")
    print(f"{rep.scenario}: {'PASS' if rep.passed else 'FAIL'}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
