"""Command-line front end: run experiments, sweeps, and the invariant suite.

Per-step records go to ``trials.csv`` (fixed column order, one row per
step per trial), aggregate results to ``summary.json``, and the fully
resolved configuration plus provenance to ``manifest.json``. Identical
seeds and configurations produce byte-identical CSV and summary files;
timestamps live only in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .experiments import (
    DEFAULT_SEED,
    ExperimentConfig,
    ExperimentError,
    aggregate,
    example1_config,
    example2_config,
    run_trials,
    scaled_config,
    sensitivity_sweep,
)
from .filter import FilterError
from .validation import run_all

CSV_SCHEMA_VERSION = 1


def _config_to_jsonable(cfg: ExperimentConfig) -> dict:
    out = {}
    for field in dataclasses.fields(cfg):
        value = getattr(cfg, field.name)
        if isinstance(value, np.ndarray):
            out[field.name] = value.tolist()
        elif isinstance(value, tuple):
            out[field.name] = [
                v.tolist() if isinstance(v, np.ndarray) else list(v) for v in value
            ]
        else:
            out[field.name] = value
    return out


def _apply_config_file(cfg: ExperimentConfig, path: str) -> ExperimentConfig:
    with open(path) as fh:
        overrides = json.load(fh)
    known = {f.name for f in dataclasses.fields(cfg)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    fixed = {}
    for key, value in overrides.items():
        if key == "ubb_process_shapes":
            fixed[key] = tuple(np.asarray(v, dtype=float) for v in value)
        elif key == "stations":
            fixed[key] = tuple(tuple(float(c) for c in s) for s in value)
        elif isinstance(value, list):
            fixed[key] = np.asarray(value, dtype=float)
        else:
            fixed[key] = value
    return dataclasses.replace(cfg, **fixed)


def _resolve_config(args) -> ExperimentConfig:
    base = example1_config() if args.command == "example1" else example2_config()
    if args.command == "sweep":
        base = example2_config(trials=1)
    if args.config:
        base = _apply_config_file(base, args.config)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.eta is not None:
        overrides["eta"] = args.eta
    if args.seed is not None:
        overrides["seed"] = args.seed
    return dataclasses.replace(base, **overrides) if overrides else base


def _csv_header(cfg: ExperimentConfig, meas_dim: int) -> list[str]:
    n = cfg.x0.size
    cols = ["trial", "k"]
    cols += [f"x_true_{i}" for i in range(n)]
    cols += [f"y_{i}" for i in range(meas_dim)]
    cols += [f"skf_center_{i}" for i in range(n)]
    cols += [f"ekf_state_{i}" for i in range(n)]
    cols += ["beta_star", "skf_dist", "ekf_dist"]
    return cols


def _write_trials_csv(path: str, cfg: ExperimentConfig, batches) -> None:
    meas_dim = batches[0][0][0].measurement.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(cfg, meas_dim))
        trial_id = 0
        for batch in batches:
            for records in batch:
                for r in records:
                    row = [trial_id, r.step]
                    row += [repr(float(v)) for v in r.true_state]
                    row += [repr(float(v)) for v in r.measurement]
                    row += [repr(float(v)) for v in r.skf_center]
                    row += [repr(float(v)) for v in r.ekf_state]
                    row += [
                        repr(float(r.beta_star)),
                        repr(float(r.skf_dist)),
                        repr(float(r.ekf_dist)),
                    ]
                    writer.writerow(row)
                trial_id += 1


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _workers() -> int:
    env = os.environ.get("SKF_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()

    if args.command == "sweep":
        scales = [float(s) for s in args.scales.split(",")]
        table = sensitivity_sweep(cfg, scales)
        batches = []
        for scale in scales:
            scaled = scaled_config(cfg, scale)
            batches.append(run_trials(scaled, workers=_workers()))
        summary = {
            "command": "sweep",
            "scales": scales,
            "sweep_table": table,
            "per_scale": {
                repr(scale): aggregate(batch, scaled_config(cfg, scale))
                for scale, batch in zip(scales, batches)
            },
        }
    else:
        batches = [run_trials(cfg, workers=_workers())]
        summary = aggregate(batches[0], cfg)
        summary["command"] = args.command

    trials_path = os.path.join(out_dir, "trials.csv")
    summary_path = os.path.join(out_dir, "summary.json")
    manifest_path = os.path.join(out_dir, "manifest.json")
    _write_trials_csv(trials_path, cfg, batches)
    _write_json(summary_path, summary)
    _write_json(
        manifest_path,
        {
            "version": __version__,
            "command": args.command,
            "csv_schema": CSV_SCHEMA_VERSION,
            "config": _config_to_jsonable(cfg),
            "seed": cfg.seed,
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": {
                "trials": trials_path,
                "summary": summary_path,
                "manifest": manifest_path,
            },
        },
    )
    return 0


def _cmd_validate(args) -> int:
    results = run_all(quick=args.quick)
    failed = False
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
        failed = failed or not result.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skf",
        description="Set-membership Kalman filter experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("example1", "scalar nonlinear benchmark"),
        ("example2", "planar two-station range-bearing tracking"),
        ("sweep", "bounded-uncertainty sensitivity sweep (example2)"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--trials", type=int, default=None, help="number of Monte Carlo trials")
        p.add_argument("--steps", type=int, default=None, help="steps per trial")
        p.add_argument("--eta", type=float, default=None, help="uncertainty weighting in [0, 1]")
        p.add_argument("--seed", type=int, default=None, help=f"base seed (default {DEFAULT_SEED})")
        p.add_argument("--out", default="skf_out", help="output directory")
        p.add_argument("--config", default=None, help="JSON file overriding config fields")
        if name == "sweep":
            p.add_argument("--scales", default="1,10,100", help="comma-separated semi-axis scales")
        p.set_defaults(handler=_cmd_run)

    v = sub.add_parser("validate", help="run the built-in invariant suite")
    v.add_argument("--quick", action="store_true", help="reduced sample counts")
    v.set_defaults(handler=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (FilterError, ExperimentError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
