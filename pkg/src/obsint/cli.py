"""Command line entry point: ``obsint run | list | bode``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import freq, harness
from .observer import DivergenceError, GainError, make_spec
from .poly import UnsupportedCase
from .record import export_csv


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obsint", description="Differentiation-integration observer toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a built-in scenario")
    run.add_argument("scenario")
    run.add_argument("--config", type=Path, help="JSON file of dotted-key overrides")
    run.add_argument("--out", type=Path, help="output directory (default out/<scenario>)")
    run.add_argument("--seed", type=int)

    sub.add_parser("list", help="list built-in scenarios")

    bode = sub.add_parser("bode", help="Bode data and plot for arbitrary gains")
    bode.add_argument("--n", type=int, required=True)
    bode.add_argument("--p", type=int, required=True)
    bode.add_argument("--k", type=_floats, required=True, help="gains k1,...,kn")
    bode.add_argument("--eps", type=float, required=True)
    bode.add_argument("--omega", type=_floats, default=[1e-3, 1e3, 400], help="min,max,points")
    bode.add_argument("--out", type=Path, default=Path("out/bode"))
    return ap


def _cmd_run(args) -> int:
    overrides = harness.load_config(args.config) if args.config else None
    out = args.out or Path("out") / args.scenario
    try:
        res = harness.run_scenario(args.scenario, overrides, out, args.seed)
    except harness.ScenarioDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"partial results written to {out}", file=sys.stderr)
        return 3
    for path in res.files:
        print(path)
    summary = {k: v for k, v in res.metrics.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_bode(args) -> int:
    if len(args.omega) != 3:
        raise ValueError("--omega needs min,max,points")
    lo, hi, pts = args.omega
    omega = np.logspace(np.log10(lo), np.log10(hi), int(pts))
    spec = make_spec(args.n, args.p, args.k, args.eps)
    rec = freq.bode_record(spec.gains, omega)
    stem = f"bode-n{args.n}-p{args.p}-eps{args.eps:g}"
    csv_path = export_csv(rec, args.out / f"{stem}.csv")
    args.out.mkdir(parents=True, exist_ok=True)
    svg_path = freq.export_bode_svg(spec.gains, args.out / f"{stem}.svg", omega)
    print(csv_path)
    print(svg_path)
    for j in range(1, args.n + 1):
        print(f"x{j}: usable band {freq.usable_band(spec.gains, j, omega)}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, text in harness.DESCRIPTIONS.items():
                print(f"{name:16s} {text}")
            return 0
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_bode(args)
    except (harness.ConfigError, GainError, UnsupportedCase, DivergenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
