"""Command-line workflow: synthesize data, train, evaluate/compare, forecast.

Exit codes (stable contract): 0 success, 1 I/O or data error, 2 usage
error, 3 numerical divergence. Every command writes a JSON run manifest
beside its primary output; the manifest is the only output carrying wall
clock, so repeated runs with identical flags produce byte-identical data
artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import evaluation, forecaster, training
from .data_pipeline import (DataFormatError, StateSeries, SyntheticConfig,
                            build_windows, chronological_split,
                            generate_synthetic_series, load_series, save_series)
from .forecaster import (HYBRID, RNN_ONLY, MODEL_FORMAT_VERSION, ModelConfig,
                         ModelFormatError, load_model, save_model)
from .training import DivergenceError, Hyperparams

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

MANIFEST_VERSION = "gridcast-manifest-v1"


class UsageError(ValueError):
    pass


def _atomic_write(path, text):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_manifest(primary_out, command, args, seeds, inputs, outputs, t0):
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
        "format_versions": {"model": MODEL_FORMAT_VERSION},
        "wall_clock_s": time.perf_counter() - t0,
    }
    _atomic_write(str(primary_out) + ".manifest.json", json.dumps(doc, indent=1) + "\n")


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    t0 = time.perf_counter()
    if args.length < 12:
        raise UsageError(f"--length must be >= 12 (lag 10 needs r+1 states), got {args.length}")
    cfg = SyntheticConfig(
        n_buses=args.buses,
        length=args.length,
        period=args.period,
        noise_std_magnitude=args.noise,
        noise_std_angle=args.angle_noise,
        coupling=args.coupling,
        seed=args.seed,
    )
    series = generate_synthetic_series(cfg)
    save_series(series, args.out)
    _write_manifest(args.out, "gen-data", args, [args.seed], [], [args.out], t0)
    print(f"wrote {len(series)} instances x {2 * args.buses} features to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _hyperparams_from(args):
    return Hyperparams(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        freeze_branch=args.freeze_branch,
    )


def cmd_train(args):
    t0 = time.perf_counter()
    series = load_series(args.data)
    kind = HYBRID if args.baseline == "hybrid" else RNN_ONLY
    config = ModelConfig(n_buses=series.n_buses, lag_r=args.lag, kind=kind)
    hp = _hyperparams_from(args)
    model, report, _, _ = training.fit_forecaster(
        series, config, hp, train_fraction=args.train_fraction)
    save_model(model, args.model_out)
    report_path = args.report_out or (args.model_out + ".report.json")
    _atomic_write(report_path, json.dumps(report.to_dict(), indent=1) + "\n")
    _write_manifest(args.model_out, "train", args, [args.seed], [args.data],
                    [args.model_out, report_path], t0)
    print(f"trained {kind} model: final train loss {report.final_train_loss:.6e}, "
          f"test nRMSE {report.test_nrmse:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _run_protocol(series, config, hp, train_fraction):
    model, report, x_test, y_test = training.fit_forecaster(series, config, hp, train_fraction)
    metrics, trace = evaluation.evaluate(model, x_test, y_test)
    return model, metrics, trace


def cmd_eval(args):
    t0 = time.perf_counter()
    model = load_model(args.model)
    series = load_series(args.data)
    if series.n_buses != model.config.n_buses:
        raise DataFormatError(
            f"model expects {model.config.n_buses} buses, data has {series.n_buses}")
    r = model.config.lag_r
    _, test_part = chronological_split(series, args.train_fraction, min_len=r + 1)
    x_test, y_test = build_windows(test_part, r)
    compare = [c.strip() for c in (args.compare or "").split(",") if c.strip()]
    for c in compare:
        if c not in ("persistence", "rnn-only"):
            raise UsageError(f"unknown --compare entry {c!r}")

    reports = {}
    seeds = []
    aggregate = None
    if args.runs <= 1:
        metrics, trace = evaluation.evaluate(model, x_test, y_test)
        reports["hybrid" if model.config.kind == HYBRID else "rnn-only"] = metrics
    else:
        hp = _hyperparams_from(args)
        per_run = []
        diverged = 0
        for i in range(args.runs):
            seeds.append(args.seed + i)
            try:
                _, metrics_i, trace_i = _run_protocol(
                    series, model.config, replace(hp, seed=args.seed + i),
                    args.train_fraction)
            except DivergenceError:
                diverged += 1
                continue
            per_run.append(metrics_i)
            if len(per_run) == 1:
                metrics, trace = metrics_i, trace_i
        scores = [m.nrmse for m in per_run]
        aggregate = {
            "n_runs": args.runs,
            "n_completed": len(per_run),
            "n_diverged": diverged,
            "base_seed": args.seed,
            "nrmse_mean": float(np.mean(scores)) if scores else None,
            "nrmse_std": float(np.std(scores)) if scores else None,
            "nrmse_min": float(np.min(scores)) if scores else None,
            "nrmse_max": float(np.max(scores)) if scores else None,
        }
        reports["hybrid" if model.config.kind == HYBRID else "rnn-only"] = metrics
    if "persistence" in compare:
        preds = evaluation.persistence_predictions(x_test)
        reports["persistence"], _ = evaluation.evaluate_predictions(
            preds, y_test, model.config.n_buses)
    if "rnn-only" in compare and model.config.kind == HYBRID:
        rnn_cfg = replace(model.config, kind=RNN_ONLY)
        _, reports["rnn-only"], _ = _run_protocol(
            series, rnn_cfg, _hyperparams_from(args), args.train_fraction)

    table = evaluation.comparison_table(reports)
    body = table
    if aggregate is not None:
        body += "\naggregate over independent runs:\n"
        body += json.dumps(aggregate, indent=1) + "\n"
    outputs = []
    if args.report_out:
        _atomic_write(args.report_out, body)
        outputs.append(args.report_out)
    if args.trace_out:
        evaluation.export_trace_csv(trace, args.trace_out)
        outputs.append(args.trace_out)
    primary = args.report_out or args.trace_out or (args.model + ".eval")
    _write_manifest(primary, "eval", args, seeds or [args.seed],
                    [args.model, args.data], outputs, t0)
    print(body, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast
# ---------------------------------------------------------------------------

def cmd_forecast(args):
    t0 = time.perf_counter()
    series = load_series(args.data)
    n = series.n_buses
    if args.model == "persistence":
        r = 1
        predict = evaluation.persistence_baseline
    else:
        model = load_model(args.model)
        if model.config.n_buses != n:
            raise DataFormatError(
                f"model expects {model.config.n_buses} buses, data has {n}")
        r = model.config.lag_r

        def predict(window):
            return forecaster.forecast_next(model, window)

    i = args.at_instance  # 1-based series coordinate of the forecast target
    if i < r + 1 or i > len(series) + 1:
        raise DataFormatError(
            f"instance {i} out of range: need {r} preceding states "
            f"(legal range {r + 1}..{len(series) + 1})")
    window = series.values[i - 1 - r:i - 1].T
    pred = predict(window)
    has_truth = i <= len(series)
    cols = [f"vm_{b + 1}" for b in range(n)] + [f"va_{b + 1}" for b in range(n)]
    lines = ["kind,t," + ",".join(cols)]
    lines.append("forecast," + str(i) + "," + ",".join(repr(float(v)) for v in pred))
    if has_truth:
        truth = series.values[i - 1]
        ae = np.abs(pred - truth)
        lines.append("truth," + str(i) + "," + ",".join(repr(float(v)) for v in truth))
        lines.append("abs_error," + str(i) + "," + ",".join(repr(float(v)) for v in ae))
    text = "\n".join(lines) + "\n"
    if args.out:
        _atomic_write(args.out, text)
        _write_manifest(args.out, "forecast", args, [], [args.data], [args.out], t0)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="gridcast",
        description="Hybrid CNN-RNN one-step-ahead grid state forecaster")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic state series CSV")
    g.add_argument("--buses", type=int, default=14)
    g.add_argument("--length", type=int, default=2000)
    g.add_argument("--period", type=int, default=96)
    g.add_argument("--noise", type=float, default=5e-4,
                   help="magnitude noise std (p.u.)")
    g.add_argument("--angle-noise", type=float, default=2e-2,
                   help="angle noise std (degrees)")
    g.add_argument("--coupling", type=float, default=0.3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a forecaster on a dataset CSV")
    t.add_argument("--data", required=True)
    t.add_argument("--lag", type=int, default=10)
    t.add_argument("--model-out", required=True)
    t.add_argument("--report-out", default=None)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--train-fraction", type=float, default=0.8)
    t.add_argument("--freeze-branch", choices=["cnn", "rnn"], default=None)
    t.add_argument("--baseline", choices=["hybrid", "rnn-only"], default="hybrid")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model (optionally retrain per run)")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report-out", default=None)
    e.add_argument("--trace-out", default=None)
    e.add_argument("--runs", type=int, default=1)
    e.add_argument("--compare", default=None,
                   help="comma list of baselines: persistence,rnn-only")
    e.add_argument("--epochs", type=int, default=30)
    e.add_argument("--batch", type=int, default=32)
    e.add_argument("--lr", type=float, default=1e-3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--train-fraction", type=float, default=0.8)
    e.add_argument("--freeze-branch", choices=["cnn", "rnn"], default=None)
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("forecast", help="one-step forecast at a series instance")
    f.add_argument("--model", required=True,
                   help="model file, or 'persistence' for the naive baseline")
    f.add_argument("--data", required=True)
    f.add_argument("--at-instance", type=int, required=True,
                   help="1-based series index of the instance to forecast")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_forecast)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataFormatError, ModelFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
