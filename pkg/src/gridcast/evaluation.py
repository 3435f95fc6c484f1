"""Metrics and baselines: normalized RMSE, absolute-error statistics split
by magnitude/angle, per-instance error traces, and the persistence
baseline. All metrics are computed in physical units (p.u., degrees).

nRMSE definition used throughout this package:

    nrmse = sqrt(sum_t ||pred_t - truth_t||^2) / sqrt(sum_t ||truth_t||^2)

over all components and all test instances; 0 for perfect predictions,
1 for all-zero predictions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import forecaster


@dataclass
class MetricsReport:
    nrmse: float
    nrmse_magnitude: float
    nrmse_angle: float
    avg_ae_magnitude: float
    max_ae_magnitude: float
    avg_ae_angle: float
    max_ae_angle: float
    n_test_windows: int

    def to_dict(self):
        return {
            "nrmse": self.nrmse,
            "nrmse_magnitude": self.nrmse_magnitude,
            "nrmse_angle": self.nrmse_angle,
            "avg_ae_magnitude": self.avg_ae_magnitude,
            "max_ae_magnitude": self.max_ae_magnitude,
            "avg_ae_angle": self.avg_ae_angle,
            "max_ae_angle": self.max_ae_angle,
            "n_test_windows": self.n_test_windows,
        }


@dataclass
class ErrorTrace:
    """Per-instance, per-bus absolute errors; both arrays are (T_test, n)."""

    ae_vm: np.ndarray
    ae_va: np.ndarray

    @property
    def n_instances(self):
        return self.ae_vm.shape[0]

    def at_instance(self, i):
        """Per-bus errors for one test instance (1-based, matching reports)."""
        return self.ae_vm[i - 1], self.ae_va[i - 1]

    def for_bus(self, bus, start, stop):
        """Errors of one bus (1-based) over [start, stop) instances (1-based)."""
        sl = slice(start - 1, stop - 1)
        return self.ae_vm[sl, bus - 1], self.ae_va[sl, bus - 1]


def _as_2d(values):
    a = np.asarray(values, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    return a


def normalized_rmse(preds, truths):
    preds = _as_2d(preds)
    truths = _as_2d(truths)
    if preds.shape != truths.shape or preds.size == 0:
        raise ValueError(f"bad shapes {preds.shape} vs {truths.shape}")
    num = np.sqrt(np.sum((preds - truths) ** 2))
    den = np.sqrt(np.sum(truths ** 2))
    if den == 0.0:
        raise ValueError("truth norm is zero; nRMSE undefined")
    return float(num / den)


def ae_stats(preds, truths, n_buses) -> MetricsReport:
    preds = _as_2d(preds)
    truths = _as_2d(truths)
    if preds.shape != truths.shape or preds.shape[1] != 2 * n_buses:
        raise ValueError(f"bad shapes {preds.shape} vs {truths.shape} for n={n_buses}")
    ae = np.abs(preds - truths)
    ae_vm = ae[:, :n_buses]
    ae_va = ae[:, n_buses:]
    return MetricsReport(
        nrmse=normalized_rmse(preds, truths),
        nrmse_magnitude=normalized_rmse(preds[:, :n_buses], truths[:, :n_buses]),
        nrmse_angle=normalized_rmse(preds[:, n_buses:], truths[:, n_buses:]),
        avg_ae_magnitude=float(ae_vm.mean()),
        max_ae_magnitude=float(ae_vm.max()),
        avg_ae_angle=float(ae_va.mean()),
        max_ae_angle=float(ae_va.max()),
        n_test_windows=preds.shape[0],
    )


def persistence_baseline(window):
    """Naive forecast: the most recent observed state (last window column)."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ValueError(f"expected a 2n x r window, got shape {window.shape}")
    return window[:, -1].copy()


def persistence_predictions(windows):
    return np.asarray(windows, dtype=float)[:, :, -1].copy()


def evaluate(model, x_test, y_test):
    """Forecast every test window (physical units) and compute the report
    plus the full error trace."""
    x_test = np.asarray(x_test, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    preds = forecaster.forecast_batch(model, x_test)
    return evaluate_predictions(preds, y_test, model.config.n_buses)


def evaluate_predictions(preds, truths, n_buses):
    preds = _as_2d(preds)
    truths = _as_2d(truths)
    report = ae_stats(preds, truths, n_buses)
    ae = np.abs(preds - truths)
    trace = ErrorTrace(ae[:, :n_buses].copy(), ae[:, n_buses:].copy())
    return report, trace


# ---------------------------------------------------------------------------
# text / CSV exports
# ---------------------------------------------------------------------------

def _atomic_write(path, text):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def export_trace_csv(trace: ErrorTrace, path):
    """CSV `instance,bus,ae_vm,ae_va`, 1-based indices, row-major by instance."""
    lines = ["instance,bus,ae_vm,ae_va"]
    t, n = trace.ae_vm.shape
    for i in range(t):
        for b in range(n):
            lines.append(f"{i + 1},{b + 1},{float(trace.ae_vm[i, b])!r},{float(trace.ae_va[i, b])!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def export_instance_slice_csv(trace: ErrorTrace, instance, path):
    """Per-bus errors at one test instance (all-buses view)."""
    vm, va = trace.at_instance(instance)
    lines = ["bus,ae_vm,ae_va"]
    for b in range(len(vm)):
        lines.append(f"{b + 1},{float(vm[b])!r},{float(va[b])!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def export_bus_slice_csv(trace: ErrorTrace, bus, start, stop, path):
    """One bus's errors over an instance range (time-trace view)."""
    vm, va = trace.for_bus(bus, start, stop)
    lines = ["instance,ae_vm,ae_va"]
    for i in range(len(vm)):
        lines.append(f"{start + i},{float(vm[i])!r},{float(va[i])!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def comparison_table(reports: dict) -> str:
    """Side-by-side text table: one row per method, absolute-error columns
    split avg/max x magnitude/angle, plus nRMSE columns."""
    header = (f"{'Method':<14} {'AvgAE |V| (p.u.)':>18} {'MaxAE |V| (p.u.)':>18} "
              f"{'AvgAE angle (deg)':>18} {'MaxAE angle (deg)':>18} "
              f"{'nRMSE':>12} {'nRMSE |V|':>12} {'nRMSE angle':>12}")
    lines = [header, "-" * len(header)]
    for name, rep in reports.items():
        lines.append(
            f"{name:<14} {rep.avg_ae_magnitude:>18.6e} {rep.max_ae_magnitude:>18.6e} "
            f"{rep.avg_ae_angle:>18.6e} {rep.max_ae_angle:>18.6e} "
            f"{rep.nrmse:>12.6e} {rep.nrmse_magnitude:>12.6e} {rep.nrmse_angle:>12.6e}")
    return "\n".join(lines) + "\n"
