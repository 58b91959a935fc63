"""Command-line entry point.

Exit codes: 0 success, 1 comparison threshold exceeded, 2 usage or
configuration error, 3 data-shape error, 4 corrupt model.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from edgeboost import dataio, synth
from edgeboost.bench import WARMUP, run_benchmark
from edgeboost.droop import (
    droop_setpoints,
    format_setpoints,
    read_droop_params,
    setpoints_csv,
)
from edgeboost.errors import (
    DataError,
    DimensionError,
    ModelCorruptionError,
    ParameterError,
)
from edgeboost.metrics import evaluate, parity_report, read_stream, write_stream
from edgeboost.model import (
    deserialize_model,
    load_model,
    model_from_json,
    model_to_json,
    predict_ensemble_batch,
    save_model,
)
from edgeboost.trainer import TrainConfig, fit_lsboost_traced

log = logging.getLogger("edgeboost")

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4

DEFAULT_THRESHOLD = 1e-6

# key -> converter, for the key = value config file
_CONFIG_KEYS = {
    "n_trees": int,
    "learn_rate": float,
    "max_depth": int,
    "min_leaf": int,
    "seed": int,
    "subsample": float,
    "train_fraction": float,
    "max_gap": int,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_USAGE, f"{what} file not found: {p}")
    return p


def read_config(path) -> dict:
    """Parse ``key = value`` lines (an optional ``[train]`` header is allowed)."""
    text = _require_file(path, "config").read_text()
    if not text.lstrip().startswith("["):
        text = "[train]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise CliError(EXIT_USAGE, f"{path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key not in _CONFIG_KEYS:
                raise CliError(EXIT_USAGE, f"{path}: unknown config key {key!r}")
            try:
                out[key] = _CONFIG_KEYS[key](value)
            except ValueError as exc:
                raise CliError(EXIT_USAGE, f"{path}: {key}: {exc}") from exc
    return out


def _load_schema(path) -> dataio.Schema:
    _require_file(path, "schema")
    try:
        return dataio.load_schema(path)
    except DataError as exc:
        raise CliError(EXIT_USAGE, f"schema {path}: {exc}") from exc


def _load_model(path):
    _require_file(path, "model")
    return load_model(path)


def read_features(path) -> np.ndarray:
    """Feature CSV: header row, every column numeric, blank cells are NaN."""
    with open(_require_file(path, "data"), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    width = len(rows[0])
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            out.append([float(c) if c.strip() else math.nan for c in row])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return np.array(out, dtype=np.float64).reshape(len(out), width)


def write_features(X: np.ndarray, names, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in np.asarray(X, dtype=np.float64).tolist():
            w.writerow(["" if math.isnan(v) else repr(v) for v in row])


def _input_matrix(args) -> np.ndarray:
    if getattr(args, "schema", None):
        ds = dataio.load_csv(_require_file(args.data, "data"), _load_schema(args.schema))
        return ds.feature_matrix()
    return read_features(args.data)


def cmd_train(args) -> int:
    settings = {f.name: getattr(TrainConfig(), f.name)
                for f in TrainConfig.__dataclass_fields__.values()}
    settings.update(train_fraction=0.8, max_gap=4)
    if args.config:
        settings.update(read_config(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    try:
        config = TrainConfig(**{k: settings[k] for k in TrainConfig.__dataclass_fields__})
    except ParameterError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc

    schema = _load_schema(args.schema)
    ds = dataio.load_csv(_require_file(args.data, "data"), schema, args.target)
    ds, actions = dataio.clean(ds)
    for a in actions:
        log.info("clean: %s", a)
    ds = dataio.impute(ds, settings["max_gap"])
    train, test = dataio.split(ds, settings["train_fraction"])
    X, y = train.matrices()
    Xt, yt = test.matrices()
    if X.shape[0] == 0 or Xt.shape[0] == 0:
        raise DataError("no complete rows left in the training or test split")

    t0 = time.perf_counter()
    model, trace = fit_lsboost_traced(X, y, config)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    save_model(model, out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log")
    log_path.write_text("\n".join(trace.log_lines()) + "\n")

    report = evaluate(yt, predict_ensemble_batch(model, Xt), schema.capacity)
    report_path = Path(args.report) if args.report else out.with_name(out.name + ".report.csv")
    report_path.write_text(report.as_csv())
    if args.test_features:
        write_features(Xt, schema.features, args.test_features)
    if args.test_targets:
        write_stream(yt, args.test_targets, header=ds.target_column)

    print(f"target {args.target} ({ds.target_column}), inverter {schema.inverter or '-'}")
    print(f"train rows {X.shape[0]}, test rows {Xt.shape[0]}, features {X.shape[1]}, "
          f"{len(actions)} cleaning actions")
    print(f"trained {config.n_trees} trees in {elapsed:.2f} s, "
          f"final train RMSE {trace.train_rmse[-1]:.6g}")
    print("test-set metrics:")
    print(report.as_text(), end="")
    print(f"model written to {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    X = _input_matrix(args)
    pred = predict_ensemble_batch(model, X)
    write_stream(pred, args.out)
    print(f"{pred.size} predictions written to {args.out}")
    return EXIT_OK


def cmd_droop(args) -> int:
    params = read_droop_params(_require_file(args.params, "parameter"))
    try:
        voltages = [float(v) for v in args.voltages.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"--voltages: {exc}") from exc
    if len(voltages) != len(params):
        raise CliError(EXIT_USAGE, f"{len(voltages)} voltages given for "
                                   f"{len(params)} inverters")
    setpoints = []
    for i, (pr, u) in enumerate(zip(params, voltages), start=1):
        try:
            setpoints.append(droop_setpoints(pr, u))
        except ParameterError as exc:
            name = pr.id or f"#{i}"
            raise CliError(EXIT_USAGE, f"inverter {name}: {exc}") from exc
    print(format_setpoints(setpoints), end="")
    if args.csv:
        Path(args.csv).write_text(setpoints_csv([p.id for p in params], voltages, setpoints))
    return EXIT_OK


def cmd_compare(args) -> int:
    ref = read_stream(_require_file(args.ref, "reference"))
    cand = read_stream(_require_file(args.cand, "candidate"))
    if ref.size != cand.size:
        raise DimensionError(f"reference has {ref.size} values, candidate {cand.size}")
    try:
        report = parity_report(ref, cand, args.capacity)
    except ParameterError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc
    print(report.as_text(), end="")
    ok = report.rmse <= args.threshold
    print(f"{'PASS' if ok else 'FAIL'}: RMSE {report.rmse:.3e} "
          f"{'<=' if ok else '>'} threshold {args.threshold:.3e}")
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_bench(args) -> int:
    model = _load_model(args.model)
    X = _input_matrix(args)
    if X.shape[1] != model.n_features:
        raise DimensionError(f"model expects {model.n_features} features, "
                             f"data has {X.shape[1]}")
    if X.shape[0] == 0:
        raise DataError("no samples to benchmark")
    if args.reps is not None and args.reps < 1:
        raise CliError(EXIT_USAGE, "--reps must be >= 1")
    report = run_benchmark(model, X, args.reps, args.warmup)
    print(f"model: {model.n_trees} trees, {model.n_features} features")
    print(report.as_text(), end="")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = _require_file(args.model, "model")
    data = path.read_bytes()
    try:
        model = model_from_json(data.decode()) if data[:1] == b"{" else deserialize_model(data)
    except ModelCorruptionError as exc:
        print(f"INVALID: {exc}")
        for v in exc.violations:
            print(f"  {v}")
        return EXIT_MODEL
    print(f"n_features   {model.n_features}")
    print(f"n_trees      {model.n_trees}")
    print(f"bias         {model.bias!r}")
    for k, (w, t) in enumerate(zip(model.weights, model.trees), start=1):
        print(f"tree {k:<4}    nodes {t.n_nodes:<4} leaves {t.n_leaves:<4} "
              f"depth {t.depth():<3} weight {w!r}")
    print("valid")
    if args.json:
        Path(args.json).write_text(model_to_json(model) + "\n")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth.generate(days=args.days, capacity=args.capacity, seed=args.seed,
                        n_features=args.features, inverter=args.inverter)
    dataio.write_csv(ds, args.out)
    if args.schema_out:
        dataio.save_schema(ds.schema, args.schema_out)
    print(f"{len(ds)} rows written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeboost",
        description="Boosted-tree P/Q forecasting, V-Q droop setpoints and "
                    "deployment parity checks for PV inverters.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a measurement CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--target", choices=dataio.TARGETS, default="active")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", help="training log (default: OUT.log)")
    p.add_argument("--report", help="metrics CSV (default: OUT.report.csv)")
    p.add_argument("--test-features", help="write the test-split feature matrix here")
    p.add_argument("--test-targets", help="write the test-split targets here")
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--learn-rate", dest="learn_rate", type=float)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--subsample", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--max-gap", dest="max_gap", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write one prediction per input row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="feature CSV (or measurement CSV with --schema)")
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("droop", help="V-Q droop setpoints per inverter")
    p.add_argument("--params", required=True)
    p.add_argument("--voltages", required=True, help="comma-separated, one per inverter")
    p.add_argument("--csv", help="also write id,u_meas,p_ref,q_ref,k_q")
    p.set_defaults(func=cmd_droop)

    p = sub.add_parser("compare", help="parity report of two prediction streams")
    p.add_argument("--ref", required=True)
    p.add_argument("--cand", required=True)
    p.add_argument("--capacity", required=True, type=float)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="maximum RMSE for exit 0 (default %(default)g)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="single-sample inference latency")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--reps", type=int, help="full passes over the data "
                                            "(default: enough for 1000 predictions)")
    p.add_argument("--warmup", type=int, default=WARMUP)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="validate a model and print its header")
    p.add_argument("--model", required=True)
    p.add_argument("--json", help="write the JSON mirror here")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="generate a synthetic measurement month")
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--capacity", type=float, default=15.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", type=int, choices=(10, 12), default=10)
    p.add_argument("--inverter", default="inv1")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ModelCorruptionError as exc:
        print(f"error: corrupt model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (DataError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
