"""Command-line entry point.

Exit codes: 0 on success, 1 for validation and usage errors (including
missing input files), 2 for any other failure. Every output file is
written below ``--output-dir``.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import (arima, covcor, datacube, ensemble, geo, hybrid, interpolation, raster,
               regressors, synth)
from .errors import MissingColumn, UsageError, ValidationError
from .evolution import GaConfig, Integer

logger = logging.getLogger("pvcast")

ENV_OUTPUT_DIR = "PVCAST_OUTPUT_DIR"
DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers ------------------------------------------------------------------

def _out(args, *parts) -> Path:
    path = Path(args.output_dir).joinpath(*parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _out_dir(args, *parts) -> Path:
    path = Path(args.output_dir).joinpath(*parts)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _table(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    cells = [[str(h) for h in header]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _ga_config(args) -> GaConfig:
    return GaConfig(population_size=args.pop, generations=args.gens,
                    crossover_rate=args.crossover, mutation_rate=args.mutation,
                    elite_count=args.elite, seed=args.seed)


def _order(text: str, n: int, flag: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} expects {n} comma-separated integers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{flag} expects {n} comma-separated integers, got {text!r}")
    return vals


def _value_column(cols: Dict[str, np.ndarray], name: Optional[str]) -> str:
    if name is not None:
        if name not in cols:
            raise MissingColumn(name)
        return name
    if "value" in cols:
        return "value"
    rest = [c for c in cols if c not in ("lat", "lon", "alt")]
    if len(rest) != 1:
        raise UsageError(f"--value-column is required; candidate columns: {rest}")
    return rest[0]


def _read_field(path, column=None) -> covcor.EstimateField:
    _, cols = datacube.read_columns_csv(path)
    for name in ("lat", "lon"):
        if name not in cols:
            raise MissingColumn(name)
    return covcor.EstimateField(cols["lat"], cols["lon"], cols[_value_column(cols, column)])


def _read_series(path, target: str):
    """Series CSV: ISO date column, the target column, then exogenous columns."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "date" not in header:
        raise MissingColumn("date")
    if target not in header:
        raise MissingColumn(target)
    dates, data = [], []
    for i, r in enumerate(rows[1:], start=1):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {i} has {len(r)} cells, header has {len(header)}")
        rec = dict(zip(header, (c.strip() for c in r)))
        try:
            dates.append(dt.date.fromisoformat(rec["date"]).isoformat())
        except ValueError:
            raise ValidationError(f"{path}: row {i} date {rec['date']!r} is not ISO-8601") from None
        data.append({k: datacube.parse_cell(v, i, k) for k, v in rec.items() if k != "date"})
    if not data:
        raise ValidationError(f"{path}: no data rows")
    cols = {k: np.array([d[k] for d in data]) for k in header if k != "date"}
    return dates, cols


# -- subcommands --------------------------------------------------------------

def cmd_synth(args) -> int:
    paths = synth.generate(args.kind, Path(args.output_dir), n=args.n, seed=args.seed)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_cube_build(args) -> int:
    sources = []
    for tag in ("atlas", "stations", "pvgis", "plants"):
        path = getattr(args, tag)
        if path:
            sources.append(datacube.load_table(path, tag))
    for path in args.other or ():
        sources.append(datacube.load_table(path, "other"))
    if not sources:
        raise UsageError("cube build needs at least one of --atlas/--stations/--pvgis/--plants/--other")
    grid = datacube.read_grid(args.grid)
    cube = datacube.build_cube(sources, grid, k=args.k, include_pvgis=args.include_pvgis,
                               metric=args.metric)
    csv_path = _out(args, f"{args.name}.csv")
    datacube.write_cube(cube, csv_path, _out(args, f"{args.name}.json"))
    print(f"cube: {csv_path} ({cube.n_rows} rows, {len(cube.names)} columns)")
    for w in cube.norm.warnings:
        print(f"warning: {w}")
    return 0


def cmd_krige(args) -> int:
    _, cols = datacube.read_columns_csv(args.samples)
    for name in ("lat", "lon"):
        if name not in cols:
            raise MissingColumn(name)
    col = _value_column(cols, args.value_column)
    model = interpolation.fit_kriging(cols["lat"], cols["lon"], cols[col], n_bins=args.bins,
                                      metric=args.metric)
    grid = datacube.read_grid(args.grid)
    r = interpolation.krige_grid(model, grid, chunk=1024, threads=args.threads)
    out = _out(args, f"{args.name}.csv")
    raster.write_raster_csv(out, r.lat, r.lon, r.prediction, r.variance)
    info = {"variogram": model.variogram.to_dict(), "samples": model.n,
            "merged_duplicates": model.merged, "metric": args.metric, "value_column": col}
    _write_json(_out(args, f"{args.name}_variogram.json"), info)
    if args.png:
        raster.write_heatmap(_out(args, f"{args.name}.png"), r.lat, r.lon, r.prediction)
    print(f"raster: {out} ({len(r.lat)} points)")
    return 0


def _features(cube: datacube.DataCube, target: Optional[str],
              names: Optional[List[str]]) -> List[str]:
    if target is not None and target not in cube.table.columns:
        raise MissingColumn(target)
    if names:
        for n in names:
            if n not in cube.table.columns:
                raise MissingColumn(n)
        return list(names)
    return [n for n in cube.names if n != target and n not in covcor.EXCLUDED]


def cmd_ensemble_optimize(args) -> int:
    cube = datacube.read_cube(args.cube)
    feats = _features(cube, None if args.target_raster else args.target, args.features)
    if not feats:
        raise ValidationError("no feature columns left in the cube")
    X = cube.table.matrix(feats)
    if args.target_raster:
        _, cols = datacube.read_columns_csv(args.target_raster)
        for name in ("lat", "lon", "prediction"):
            if name not in cols:
                raise MissingColumn(name)
        field_ = covcor.EstimateField(cols["lat"], cols["lon"], cols["prediction"])
        y = covcor.align_field(field_, cube.table.lat, cube.table.lon).value
        target = f"{args.target_raster}:prediction"
    else:
        y = cube.table.columns[args.target]
        target = args.target
    pool = args.pool or list(regressors.KINDS)
    ckpt = _out_dir(args, "checkpoints", "ensemble")
    result = ensemble.optimize_committee(pool, X, y, _ga_config(args), folds=args.folds,
                                         checkpoint_dir=ckpt, threads=args.threads)
    model = {"target": target, "features": feats, "committee": result.fitted.to_dict()}
    _write_json(_out(args, "ensemble_model.json"), model)
    report = result.report()
    report.update({"pool": pool, "folds": args.folds, "seed": args.seed,
                   "population": args.pop, "generations": args.gens})
    _write_json(_out(args, "ensemble_report.json"), report)
    text = _table([
        ["default", report["default_mae"], report["default_mse"]],
        ["optimized", report["optimized_mae"], report["optimized_mse"]],
        ["reduction %", report["mae_reduction_pct"], report["mse_reduction_pct"]],
    ], ["committee", "cv_mae", "cv_mse"])
    text += f"\nmembers: {', '.join(report['members'])}\n"
    _out(args, "ensemble_report.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_ensemble_predict(args) -> int:
    data = json.loads(Path(args.model).read_text())
    model = ensemble.FittedCommittee.from_dict(data["committee"])
    cube = datacube.read_cube(args.cube)
    for n in data["features"]:
        if n not in cube.table.columns:
            raise MissingColumn(n)
    pred = ensemble.vote_predict(model, cube.table.matrix(data["features"]))
    out = _out(args, "ensemble_predictions.csv")
    datacube.write_columns_csv(out, ["lat", "lon", "prediction"],
                               [cube.table.lat, cube.table.lon, pred])
    if args.png:
        raster.write_heatmap(_out(args, "ensemble_predictions.png"), cube.table.lat,
                             cube.table.lon, pred)
    print(f"predictions: {out} ({len(pred)} rows)")
    return 0


def _weights_from_args(args, cube) -> covcor.CovCorWeights:
    cc = covcor.cov_corr(cube)
    flip = None if args.flip is None else [f for f in args.flip.split(",") if f]
    return covcor.build_weights(cc, args.target, flip, not args.correlation_only)


def cmd_covcor_weights(args) -> int:
    cube = datacube.read_cube(args.cube)
    w = _weights_from_args(args, cube)
    out = _out(args, "covcor_weights.json")
    w.save(out)
    rows = [[n, a, b, "yes" if n in w.flipped else ""]
            for n, a, b in zip(w.variable_names, w.a, w.b)]
    _out(args, "covcor_weights.txt").write_text(
        _table(rows, ["variable", "a (covariance)", "b (correlation)", "flipped"]))
    print(f"weights: {out}")
    return 0


def cmd_covcor_estimate(args) -> int:
    cube = datacube.read_cube(args.cube)
    if args.weights:
        w = covcor.CovCorWeights.load(args.weights)
    else:
        w = _weights_from_args(args, cube)
        w.save(_out(args, "covcor_weights.json"))
    est = covcor.estimate(w, cube)
    out = _out(args, "covcor_estimate.csv")
    raster.write_field_csv(out, est.lat, est.lon, est.value)
    if args.png:
        raster.write_heatmap(_out(args, "covcor_estimate.png"), est.lat, est.lon, est.value)
    print(f"estimate: {out} ({len(est.value)} rows)")
    return 0


def cmd_covcor_evaluate(args) -> int:
    ref = _read_field(args.reference)
    fields = {"estimate": _read_field(args.estimate)}
    if args.cube:
        cube = datacube.read_cube(args.cube)
        for name in args.baseline or [covcor.DEFAULT_TARGET]:
            if name not in cube.table.columns:
                raise MissingColumn(name)
            fields[name] = covcor.EstimateField(cube.table.lat, cube.table.lon,
                                                cube.table.columns[name])
    results = {}
    for name, f in fields.items():
        aligned = covcor.align_field(f, ref.lat, ref.lon)
        results[name] = covcor.evaluate_field(aligned, ref)
    _write_json(_out(args, "covcor_evaluation.json"), results)
    text = _table([[n, m["mae"], m["mse"]] for n, m in results.items()], ["field", "mae", "mse"])
    _out(args, "covcor_evaluation.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_forecast_fit(args) -> int:
    dates, cols = _read_series(args.series, args.target)
    if args.exog is None:
        exog_names = [c for c in cols if c != args.target]
    else:
        exog_names = [c for c in args.exog.split(",") if c]
        for n in exog_names:
            if n not in cols:
                raise MissingColumn(n)
    y = cols[args.target]
    X = np.column_stack([cols[n] for n in exog_names]) if exog_names else None
    seasonal = _order(args.seasonal, 4, "--seasonal") if args.seasonal else None
    order = arima.ArimaOrder(*_order(args.order, 3, "--order"), seasonal=seasonal)
    mlp_base = {"max_epochs": args.max_epochs, "initial_lr": args.initial_lr,
                "tolerance": args.tolerance}
    overrides = {}
    if args.max_hidden != hybrid.HIDDEN_DOMAIN[1]:
        for prefix in ("error", "assoc"):
            for i in range(1, 4):
                overrides[f"{prefix}_h{i}"] = Integer(1, args.max_hidden)
    if args.max_lag != hybrid.LAG_DOMAIN[1]:
        for name in hybrid.LAG_NAMES:
            overrides[name] = Integer(1, args.max_lag)
    ckpt = _out_dir(args, "checkpoints", "forecast")
    result = hybrid.search_hybrid(y, X, _ga_config(args), overrides, order=order,
                                  fitness_mode=args.fitness, mlp_base=mlp_base,
                                  exog_columns=exog_names, checkpoint_dir=ckpt,
                                  threads=args.threads)
    model = result.model.to_dict()
    model.update({"dates": dates, "target": args.target})
    _out(args, "forecast_model.json").write_text(json.dumps(model) + "\n")
    report = result.report()
    report.update({"seed": args.seed, "order": order.to_list(), "population": args.pop,
                   "generations": args.gens, "test_start": dates[result.model.split]})
    _write_json(_out(args, "forecast_report.json"), report)
    comp = report["comparison"]
    text = _table([[name, m["mae"], m["mse"], m["mape"]] for name, m in comp.items()],
                  ["model", "mae", "mse", "mape"])
    text += f"\ntest span: {dates[result.model.split]} .. {dates[-1]} " \
            f"({result.model.n - result.model.split} points, unit scale)\n"
    _out(args, "forecast_report.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_forecast_predict(args) -> int:
    data = json.loads(Path(args.model).read_text())
    model = hybrid.HybridModel.from_dict(data)
    dates = data.get("dates")
    exog_future, future_dates = None, None
    if args.exog_future:
        names = model.config.exog_columns
        fdates, cols = _read_series_exog(args.exog_future, names)
        exog_future = np.column_stack([cols[n] for n in names])[: args.horizon]
        if len(exog_future) < args.horizon:
            raise ValidationError(
                f"--exog-future has {len(exog_future)} rows for horizon {args.horizon}")
        future_dates = fdates[: args.horizon]
        if model.scaling is not None:
            exog_future = model.scaling.exog(exog_future)
    origin = model.split if args.from_split else model.n
    pred = hybrid.predict_hybrid(model, args.horizon, exog_future, origin=origin)
    if model.scaling is not None:
        pred = model.scaling.unscale(pred)
    if future_dates is None:
        if dates:
            last = dt.date.fromisoformat(dates[origin - 1])
            future_dates = [(last + dt.timedelta(days=i + 1)).isoformat()
                            for i in range(args.horizon)]
        else:
            future_dates = [str(origin + i) for i in range(args.horizon)]
    out = _out(args, "forecast_predictions.csv")
    synth.write_series_csv(out, future_dates, {"prediction": pred})
    print(f"predictions: {out} ({args.horizon} rows)")
    return 0


def _read_series_exog(path, names: Sequence[str]):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for n in ["date"] + list(names):
        if n not in header:
            raise MissingColumn(n)
    dates = [r[header.index("date")].strip() for r in rows[1:]]
    cols = {n: np.array([datacube.parse_cell(r[header.index(n)], i, n)
                         for i, r in enumerate(rows[1:], start=1)]) for n in names}
    return dates, cols


# -- parser -------------------------------------------------------------------

def _global_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    sup = argparse.SUPPRESS
    env_dir = os.environ.get(ENV_OUTPUT_DIR, ".")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED if defaults else sup,
                   help="seed for every stochastic step (default 42)")
    p.add_argument("--threads", type=int, default=1 if defaults else sup,
                   help="worker threads for genetic-search fitness and grid kriging (default 1)")
    p.add_argument("--output-dir", default=env_dir if defaults else sup,
                   help=f"directory for all outputs (default ${ENV_OUTPUT_DIR} or '.')")
    p.add_argument("-v", "--verbose", action="store_true", default=False if defaults else sup,
                   help="log progress to stderr")


def _ga_flags(p, pop: int, gens: int) -> None:
    p.add_argument("--pop", type=int, default=pop, help=f"population size (default {pop})")
    p.add_argument("--gens", type=int, default=gens, help=f"generations (default {gens})")
    p.add_argument("--crossover", type=float, default=0.8, help="crossover rate (default 0.8)")
    p.add_argument("--mutation", type=float, default=0.2,
                   help="per-gene mutation rate (default 0.2)")
    p.add_argument("--elite", type=int, default=1, help="elite genomes kept (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvcast", description=__doc__.splitlines()[0])
    _global_flags(parser, True)
    common = _Parser(add_help=False)
    _global_flags(common, False)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write synthetic fixtures")
    p.add_argument("--kind", required=True, choices=synth.KINDS)
    p.add_argument("--n", type=int, default=None, help="series or sample length")
    p.set_defaults(func=cmd_synth)

    cube = sub.add_parser("cube", help="data cube commands")
    csub = cube.add_subparsers(dest="action", metavar="action", required=True)
    p = csub.add_parser("build", parents=[common], help="join sources onto a grid")
    p.add_argument("--grid", required=True, help="CSV with lat,lon query points")
    p.add_argument("--atlas")
    p.add_argument("--stations")
    p.add_argument("--pvgis")
    p.add_argument("--plants")
    p.add_argument("--other", action="append", help="extra source CSV (repeatable)")
    p.add_argument("--k", type=int, default=1, help="neighbours averaged per join (default 1)")
    p.add_argument("--metric", choices=sorted(geo.METRICS), default="haversine")
    p.add_argument("--include-pvgis", action="store_true",
                   help="add the PVGIS annual mean as a cube column (evaluation only by default)")
    p.add_argument("--name", default="cube", help="output file stem (default cube)")
    p.set_defaults(func=cmd_cube_build)

    p = sub.add_parser("krige", parents=[common], help="ordinary kriging onto a grid")
    p.add_argument("--samples", required=True, help="CSV with lat,lon,value")
    p.add_argument("--value-column")
    p.add_argument("--grid", required=True)
    p.add_argument("--bins", type=int, default=10, help="empirical variogram bins (default 10)")
    p.add_argument("--metric", choices=sorted(geo.METRICS), default="haversine")
    p.add_argument("--png", action="store_true", help="also write a heatmap PNG")
    p.add_argument("--name", default="raster", help="output file stem (default raster)")
    p.set_defaults(func=cmd_krige)

    ens = sub.add_parser("ensemble", help="regressor committee commands")
    esub = ens.add_subparsers(dest="action", metavar="action", required=True)
    p = esub.add_parser("optimize", parents=[common], help="genetic committee search")
    p.add_argument("--cube", required=True)
    p.add_argument("--target", default="capacity_factor", help="cube column to learn")
    p.add_argument("--target-raster",
                   help="kriged raster CSV whose prediction column is the target instead")
    p.add_argument("--features", nargs="+", help="feature columns (default: all variables)")
    p.add_argument("--pool", nargs="+", choices=regressors.KINDS,
                   help="regressor kinds to search over (default: all)")
    p.add_argument("--folds", type=int, default=5)
    _ga_flags(p, 20, 8)
    p.set_defaults(func=cmd_ensemble_optimize)
    p = esub.add_parser("predict", parents=[common], help="committee predictions on a cube")
    p.add_argument("--model", required=True)
    p.add_argument("--cube", required=True)
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=cmd_ensemble_predict)

    cc = sub.add_parser("covcor", help="covariance/correlation metric commands")
    ccsub = cc.add_subparsers(dest="action", metavar="action", required=True)
    for name, func, help_ in (("weights", cmd_covcor_weights, "derive weights from a cube"),
                              ("estimate", cmd_covcor_estimate, "evaluate the metric")):
        p = ccsub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--cube", required=True)
        p.add_argument("--target", default=covcor.DEFAULT_TARGET)
        p.add_argument("--flip", help="comma-separated variables forced negative "
                                      "(default: temperature, humidity, precipitation)")
        p.add_argument("--correlation-only", action="store_true",
                       help="apply the sign rule to correlation weights only")
        if name == "estimate":
            p.add_argument("--weights", help="weights JSON (default: derive from the cube)")
            p.add_argument("--png", action="store_true")
        p.set_defaults(func=func)
    p = ccsub.add_parser("evaluate", parents=[common], help="compare fields to a reference")
    p.add_argument("--estimate", required=True, help="CSV lat,lon,value")
    p.add_argument("--reference", required=True, help="CSV lat,lon,value")
    p.add_argument("--cube", help="cube whose raw columns are compared as baselines")
    p.add_argument("--baseline", nargs="+", help="baseline cube columns (default direct_normal)")
    p.set_defaults(func=cmd_covcor_evaluate)

    fc = sub.add_parser("forecast", help="hybrid forecasting commands")
    fsub = fc.add_subparsers(dest="action", metavar="action", required=True)
    p = fsub.add_parser("fit", parents=[common], help="genetic search of the hybrid model")
    p.add_argument("--series", required=True, help="CSV with date, target and exog columns")
    p.add_argument("--target", default="generation")
    p.add_argument("--exog", help="comma-separated exog columns (default: all others)")
    p.add_argument("--order", default="1,0,0", help="ARIMA p,d,q (default 1,0,0)")
    p.add_argument("--seasonal", help="seasonal P,D,Q,s")
    p.add_argument("--fitness", choices=hybrid.FITNESS_MODES, default="test",
                   help="score genomes on the test span or a validation split of training")
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--initial-lr", type=float, default=1e-3)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--max-hidden", type=int, default=hybrid.HIDDEN_DOMAIN[1],
                   help="upper bound of each hidden-layer size gene (default 128)")
    p.add_argument("--max-lag", type=int, default=hybrid.LAG_DOMAIN[1],
                   help="upper bound of the four lag genes (default 20)")
    _ga_flags(p, 10, 3)
    p.set_defaults(func=cmd_forecast_fit)
    p = fsub.add_parser("predict", parents=[common], help="forecast with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--exog-future", help="CSV with date and the model's exog columns")
    p.add_argument("--from-split", action="store_true",
                   help="forecast from the train/test split instead of the series end")
    p.set_defaults(func=cmd_forecast_predict)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
