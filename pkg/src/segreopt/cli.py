"""Command-line entry point.

Subcommands:

* ``decompose`` / ``regress`` -- run one experiment from a preset or config
  file and write trace CSVs, the RMS aggregate, and a manifest.
* ``bench`` -- expand a preset's parameter grid and run every cell into its
  own subdirectory.

Config fields can be overridden by environment variables prefixed with
``SEGREOPT_`` (e.g. ``SEGREOPT_REPLICATES=5``); flags take precedence over
the environment, which takes precedence over the file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import (
    ExperimentConfig,
    expand_grid,
    load_preset,
    preset_names,
    run_experiment,
)
from .solvers import SolverError

ENV_PREFIX = "SEGREOPT_"


def _env_overrides() -> dict:
    out = {}
    fields = {
        "seed": int, "replicates": int, "max_iters": int, "noise_sd": float,
        "rho": float, "step_size": float, "kappa": float, "n_samples": int,
    }
    for name, cast in fields.items():
        raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            out[name] = cast(raw)
    return out


def _load_base(args) -> dict:
    if args.config:
        with open(args.config) as fh:
            return json.load(fh)
    if args.preset:
        return load_preset(args.preset)
    raise SystemExit("one of --preset or --config is required "
                     f"(presets: {', '.join(preset_names())})")


def _apply_flags(base: dict, args, task: str | None) -> dict:
    base = dict(base)
    if task is not None:
        base["task"] = task
    base.update(_env_overrides())
    for name in ("seed", "replicates", "max_iters"):
        val = getattr(args, name, None)
        if val is not None:
            base[name] = val
    if args.method:
        base["methods"] = args.method
    return base


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="named built-in configuration")
    p.add_argument("--config", help="path to a JSON configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--method", action="append", choices=["rgd", "rgn", "als"],
                   help="repeatable; overrides the configured method list")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="segreopt")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, task in (("decompose", "decompose"), ("regress", "regress"), ("bench", None)):
        p = sub.add_parser(name)
        _add_common(p)
    args = parser.parse_args(argv)

    base = _load_base(args)
    task = args.command if args.command in ("decompose", "regress") else None
    base = _apply_flags(base, args, task)

    if args.command == "bench":
        configs = expand_grid(base)
        failed = 0
        for cfg in configs:
            cell = f"noise{cfg.noise_sd}_rho{cfg.rho}"
            cell_dir = os.path.join(args.out, cell)
            print(f"[bench] {cfg.task} {cell} -> {cell_dir}")
            try:
                summary = run_experiment(cfg, cell_dir)
            except SolverError as exc:
                print(f"[bench] {cell} failed: {exc}", file=sys.stderr)
                failed += 1
                continue
            for method in cfg.methods:
                print(f"[bench]   {method}: final rms rel err {summary.final_error(method):.3e}")
        return 1 if failed == len(configs) else 0

    grid = base.pop("grid", None)
    if grid:
        print("note: ignoring grid field outside `bench`", file=sys.stderr)
    cfg = ExperimentConfig.from_dict(base)
    try:
        summary = run_experiment(cfg, args.out)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for method in cfg.methods:
        print(f"{method}: final rms rel err {summary.final_error(method):.3e}")
    if summary.failures:
        print(f"{len(summary.failures)} replicate failure(s); see manifest.json", file=sys.stderr)
    print(f"outputs written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
