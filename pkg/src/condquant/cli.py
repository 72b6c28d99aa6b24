"""Command-line front end: codebook training, curve estimation, experiments.

Four subcommands share a small contract: exit 0 on success, 2 on user or
configuration errors, 3 on data precondition failures. Every run writes a
manifest next to its outputs recording the command, the resolved
configuration, the master seed and derived seed families, the emitted
files, and wall-clock timing. Data outputs are byte-identical across
re-runs with the same inputs and seed; the manifest's timing field is the
one intentionally non-reproducible value.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from ._util import atomic_write_text, derive_seed, fmt_float
from .core import Dataset, QuantileLevel
from .estimator import (
    CURVE_CSV_HEADER,
    curves_to_csv,
    fit,
    fit_bootstrap,
)
from .quantizer import (
    ClvqConfig,
    InsufficientSupportError,
    clvq_train,
    distortion,
    grid_separation,
    grid_to_csv,
)
from .simulation import (
    ExperimentConfig,
    run_approximation_rate_experiment,
    run_comparison_experiment,
    run_consistency_experiment,
    run_rate_experiment_zador,
    write_metadata,
)

EXIT_OK = 0
EXIT_USER = 2
EXIT_DATA = 3

EXPERIMENTS = ("zador", "theorem3", "theorem5", "comparison")


class UserError(Exception):
    """Configuration / input problems: exit code 2."""


class DataError(Exception):
    """Data precondition failures: exit code 3."""


def _read_dataset_csv(path: str, require_y: bool) -> tuple[Dataset | None, np.ndarray]:
    """Parse ``x1,...,xd[,y]`` with line-numbered complaints.

    Returns ``(dataset, x)``; the dataset is None when the file has no
    response column.
    """
    if not os.path.exists(path):
        raise UserError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise UserError(f"{path}:1: empty file")
    header = lines[0].split(",")
    has_y = header[-1] == "y"
    x_cols = header[:-1] if has_y else header
    if x_cols != [f"x{j + 1}" for j in range(len(x_cols))] or not x_cols:
        raise UserError(f"{path}:1: bad header {lines[0]!r}, expected x1,...,xd[,y]")
    if require_y and not has_y:
        raise UserError(f"{path}:1: missing response column 'y'")
    width = len(header)
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != width:
            raise UserError(f"{path}:{ln_no}: expected {width} columns, found {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise UserError(f"{path}:{ln_no}: non-numeric value in {ln!r}")
    if not rows:
        raise UserError(f"{path}:2: no data rows")
    arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = int(np.where(~np.isfinite(arr).all(axis=1))[0][0]) + 2
        raise UserError(f"{path}:{bad}: non-finite value")
    if has_y:
        return Dataset(arr[:, :-1], arr[:, -1]), arr[:, :-1]
    return None, arr


def _parse_alphas(raw: str) -> list[float]:
    out = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            a = float(tok)
            QuantileLevel(a)
        except ValueError:
            raise UserError(f"alpha out of range: {tok!r} (need 0 < alpha < 1)")
        out.append(a)
    if not out:
        raise UserError("alpha list is empty")
    return out


def _write_manifest(path: str, command: str, config: dict, seed: int | None,
                    seed_families: dict, outputs: list[str], warnings: dict,
                    elapsed_s: float) -> None:
    payload = {
        "command": command,
        "config": config,
        "master_seed": seed,
        "seed_families": seed_families,
        "outputs": sorted(outputs + [path]),
        "warnings": warnings,
        "timing": {"elapsed_s": elapsed_s},
        "version": __version__,
    }
    atomic_write_text(path, json.dumps(payload, indent=2, default=str) + "\n")


def cmd_quantize(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    _, x = _read_dataset_csv(args.input, require_y=False)
    try:
        grid = clvq_train(x, ClvqConfig(n_points=args.n_points, p=args.p_norm, seed=args.seed))
    except InsufficientSupportError as exc:
        raise DataError(str(exc))
    atomic_write_text(args.output, grid_to_csv(grid))
    final_distortion = distortion(grid, x, args.p_norm)
    sep = grid_separation(grid) if grid.size >= 2 else math.nan
    print(f"distortion={fmt_float(final_distortion)}")
    print(f"grid_separation={fmt_float(sep)}")
    manifest = args.output + ".manifest.json"
    _write_manifest(
        manifest,
        "quantize",
        {"input": args.input, "output": args.output, "n_points": args.n_points,
         "p_norm": args.p_norm, "seed": args.seed},
        args.seed,
        {"clvq_init": "default_rng(seed)"},
        [args.output],
        {},
        time.monotonic() - t0,
    )
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    alphas = _parse_alphas(args.alpha)
    data, _ = _read_dataset_csv(args.input, require_y=True)
    if data.dim != 1:
        raise UserError("estimate builds scalar query grids; input must have a single covariate")
    if args.query_count < 1:
        raise UserError("query count must be >= 1")
    lo = args.query_min if args.query_min is not None else float(data.x.min())
    hi = args.query_max if args.query_max is not None else float(data.x.max())
    if not lo < hi:
        raise UserError(f"query range is empty: [{lo}, {hi}]")
    step = (hi - lo) / args.query_count
    query = lo + (np.arange(args.query_count) + 0.5) * step
    cfg = ClvqConfig(n_points=args.n_points, p=args.p_norm, seed=args.seed)
    try:
        single = fit(data, cfg)
    except InsufficientSupportError as exc:
        raise DataError(str(exc))
    except ValueError as exc:
        if "need n > N" in str(exc):
            raise DataError(str(exc))
        raise
    entries = []
    curve = single.predict_curve(query, alphas)
    entries.append((curve, "quant", args.n_points, 0))
    empty_cells = int(np.isnan(curve.values).sum())
    if args.bootstrap > 0:
        boot = fit_bootstrap(data, cfg, args.bootstrap)
        bcurve = boot.predict_curve(query, alphas)
        entries.append((bcurve, "quant-boot", args.n_points, args.bootstrap))
        empty_cells += int(np.isnan(bcurve.values).sum())
    atomic_write_text(args.output, curves_to_csv(entries))
    manifest = args.output + ".manifest.json"
    _write_manifest(
        manifest,
        "estimate",
        {"input": args.input, "output": args.output, "n_points": args.n_points,
         "alpha": alphas, "bootstrap": args.bootstrap, "seed": args.seed,
         "p_norm": args.p_norm, "query": [lo, hi, args.query_count]},
        args.seed,
        {"clvq_init": "default_rng(seed)",
         "bootstrap_grids": "derive_seed(seed, b) for b in range(B)"},
        [args.output],
        {"empty_cell_predictions": empty_cells},
        time.monotonic() - t0,
    )
    return EXIT_OK


def _read_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise UserError(f"config file not found: {path}")
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UserError(f"{path}:{ln_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _csv_ints(raw: str) -> tuple:
    return tuple(int(tok) for tok in raw.split(",") if tok.strip())


def _csv_floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


_CONFIG_PARSERS = {
    "model": str,
    "n": int,
    "n_points": int,
    "n_boot": int,
    "alphas": _csv_floats,
    "query": _csv_floats,
    "query_point": float,
    "replications": int,
    "mc_n": int,
    "p": float,
    "sample_n": int,
    "n_list": _csv_ints,
    "n_points_list": _csv_ints,
    "use_clvq_grids": lambda raw: raw.lower() in ("1", "true", "yes"),
    "k_grid": _csv_ints,
    "h_grid": _csv_floats,
    "cv_folds": int,
    "include_truth": lambda raw: raw.lower() in ("1", "true", "yes"),
}


def _build_experiment_config(raw: dict, seed: int) -> ExperimentConfig:
    kwargs: dict = {"seed": seed}
    for key, value in raw.items():
        if key in ("experiment", "seed"):
            continue
        if key not in _CONFIG_PARSERS:
            raise UserError(f"unknown config key: {key}")
        try:
            kwargs[key] = _CONFIG_PARSERS[key](value)
        except ValueError:
            raise UserError(f"bad value for config key {key}: {value!r}")
    if "query" in kwargs and len(kwargs["query"]) != 3:
        raise UserError("query must be lo,hi,count")
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise UserError(str(exc))


def cmd_simulate(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    raw = _read_config_file(args.config) if args.config else {}
    experiment = args.experiment or raw.get("experiment")
    if experiment is None:
        raise UserError("missing config key: experiment")
    if experiment not in EXPERIMENTS:
        raise UserError(f"unknown experiment: {experiment!r} (choose from {', '.join(EXPERIMENTS)})")
    if args.seed is not None:
        seed = args.seed
    elif "seed" in raw:
        try:
            seed = int(raw["seed"])
        except ValueError:
            raise UserError(f"bad value for config key seed: {raw['seed']!r}")
    else:
        raise UserError("missing config key: seed")
    config = _build_experiment_config(raw, seed)
    os.makedirs(args.output, exist_ok=True)
    table_path = os.path.join(args.output, f"{experiment}.csv")
    meta_path = os.path.join(args.output, f"{experiment}.meta.json")
    extra: dict = {}
    if experiment == "zador":
        result = run_rate_experiment_zador(config)
        extra["slope"] = result.slope
        extra["in_band"] = result.in_band
    elif experiment == "theorem3":
        result = run_approximation_rate_experiment(config)
        extra["slope"] = result.slope
    elif experiment == "theorem5":
        result = run_consistency_experiment(config)
        extra["qtilde_reference"] = result.qtilde_reference
    else:
        result = run_comparison_experiment(config)
    atomic_write_text(table_path, result.to_csv())
    write_metadata(meta_path, experiment, config, extra)
    manifest = os.path.join(args.output, f"{experiment}.manifest.json")
    _write_manifest(
        manifest,
        "simulate",
        {"config_file": args.config, "experiment": experiment, "output": args.output},
        seed,
        {"experiment_streams": "derive_seed(seed, stage, ...) per stage"},
        [table_path, meta_path],
        {},
        time.monotonic() - t0,
    )
    return EXIT_OK


def _read_curve_csv(path: str) -> list[str]:
    if not os.path.exists(path):
        raise UserError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines or lines[0] != CURVE_CSV_HEADER:
        raise UserError(f"{path}:1: expected curve header {CURVE_CSV_HEADER!r}")
    return lines[1:]


def cmd_compare_plotdata(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    all_rows: list[str] = []
    grids: list[tuple] = []
    for path in args.input:
        rows = _read_curve_csv(path)
        xs = []
        seen = set()
        for ln_no, row in enumerate(rows, start=2):
            parts = row.split(",")
            if len(parts) != 6:
                raise UserError(f"{path}:{ln_no}: expected 6 columns")
            if not parts[3]:
                raise UserError(f"{path}:{ln_no}: empty estimator column")
            if parts[0] not in seen:
                seen.add(parts[0])
                xs.append(parts[0])
        grids.append(tuple(xs))
        all_rows.extend(rows)
    if len(set(grids)) > 1:
        raise UserError("mismatched query grids across input curve files")
    atomic_write_text(args.output, "\n".join([CURVE_CSV_HEADER] + all_rows) + "\n")
    manifest = args.output + ".manifest.json"
    _write_manifest(
        manifest,
        "compare-plotdata",
        {"input": list(args.input), "output": args.output},
        None,
        {},
        [args.output],
        {},
        time.monotonic() - t0,
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condquant",
        description="Conditional quantile estimation through optimal vector quantization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="train a codebook on the covariate columns of a CSV")
    q.add_argument("--input", required=True)
    q.add_argument("--output", required=True)
    q.add_argument("--n-points", "-N", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--p-norm", type=float, default=2.0)
    q.set_defaults(func=cmd_quantize)

    e = sub.add_parser("estimate", help="fit the estimator and write a quantile-curve CSV")
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--n-points", "-N", type=int, required=True)
    e.add_argument("--alpha", default="0.05,0.25,0.5,0.75,0.95")
    e.add_argument("--bootstrap", "-B", type=int, default=0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--p-norm", type=float, default=2.0)
    e.add_argument("--query-min", type=float, default=None)
    e.add_argument("--query-max", type=float, default=None)
    e.add_argument("--query-count", type=int, default=300)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run a seeded experiment from a config file")
    s.add_argument("--config", default=None)
    s.add_argument("--experiment", default=None, help=", ".join(EXPERIMENTS))
    s.add_argument("--output", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare-plotdata", help="merge curve CSVs into one long-format file")
    c.add_argument("--input", nargs="+", required=True)
    c.add_argument("--output", required=True)
    c.set_defaults(func=cmd_compare_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the user-error code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
