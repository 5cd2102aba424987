"""Localization metrics and the per-method report."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import AlignmentError, ExperimentError

THRESHOLD_CM = 30.0
BOOTSTRAP_RESAMPLES = 1000


def _pair(predictions, truths):
    p = np.asarray(predictions, dtype=float).reshape(-1, 3)
    t = np.asarray(truths, dtype=float).reshape(-1, 3)
    if p.shape != t.shape:
        raise AlignmentError(f"{p.shape[0]} predictions for {t.shape[0]} truths")
    if p.shape[0] < 1:
        raise AlignmentError("metrics need at least one trial")
    return p, t


def errors_cm(predictions, truths) -> np.ndarray:
    p, t = _pair(predictions, truths)
    return 100.0 * np.linalg.norm(p - t, axis=1)


def compute_mae(predictions, truths) -> float:
    """Mean Euclidean error in centimetres."""
    return float(np.mean(errors_cm(predictions, truths)))


def compute_acc_at(predictions, truths, threshold_cm: float = THRESHOLD_CM) -> float:
    """Percentage of trials with error <= ``threshold_cm`` (the boundary counts as correct)."""
    return acc_from_errors(errors_cm(predictions, truths), threshold_cm)


def acc_from_errors(errors, threshold_cm: float = THRESHOLD_CM) -> float:
    e = np.asarray(errors, dtype=float)
    return float(100.0 * np.count_nonzero(e <= threshold_cm) / e.size)


def bootstrap_std(values, statistic, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> float:
    """Standard deviation of ``statistic`` over bootstrap resamples of ``values``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(resamples, v.size))
    stats = np.array([statistic(v[i]) for i in idx])
    return float(np.std(stats, ddof=1))


def round_sig(x: float, digits: int = 4) -> float:
    """Round to ``digits`` significant digits (the precision of emitted tables)."""
    return float(f"{x:.{digits}g}") if math.isfinite(x) else x


@dataclass
class MetricRow:
    method: str
    target: str            # "all", "source" or "mic"
    n_trials: int
    n_failed: int
    mae_cm: float
    mae_std_cm: float
    acc_at_30cm: float     # percent, errors <= 30 cm count as correct
    acc_std: float

    def rounded(self) -> "MetricRow":
        return replace(self, **{k: round_sig(getattr(self, k))
                                for k in ("mae_cm", "mae_std_cm", "acc_at_30cm", "acc_std")})


@dataclass
class MetricsReport:
    scenario: str
    rows: list = field(default_factory=list)
    runtime_s: float = 0.0
    threshold_cm: float = THRESHOLD_CM

    def row(self, method: str, target: str = "all") -> MetricRow:
        for r in self.rows:
            if r.method == method and r.target == target:
                return r
        raise KeyError((method, target))

    def rounded(self) -> "MetricsReport":
        return replace(self, rows=[r.rounded() for r in self.rows], runtime_s=round_sig(self.runtime_s))


def summarize(records, scenario: str, runtime_s: float = 0.0, seed: int = 0,
              resamples: int = BOOTSTRAP_RESAMPLES) -> MetricsReport:
    """Aggregate per-trial records into a report.

    Rows come per method for all targets together and for each target type
    present; failed trials are counted but carry no error.
    """
    records = list(records)
    if not records:
        raise ExperimentError("no test trials to report")
    rows = []
    methods = sorted({r["method"] for r in records})
    for method in methods:
        mine = [r for r in records if r["method"] == method]
        targets = sorted({r["target"] for r in mine})
        for target in ["all"] + targets:
            sel = [r for r in mine if target == "all" or r["target"] == target]
            ok = np.array([r["error_cm"] for r in sel if r["status"] == "ok"], dtype=float)
            n_failed = sum(r["status"] != "ok" for r in sel)
            if ok.size:
                mae, acc = float(np.mean(ok)), acc_from_errors(ok)
                mae_std = bootstrap_std(ok, np.mean, resamples, seed)
                acc_std = bootstrap_std(ok, acc_from_errors, resamples, seed)
            else:
                mae = acc = mae_std = acc_std = float("nan")
            rows.append(MetricRow(method, target, len(sel), n_failed, mae, mae_std, acc, acc_std))
    return MetricsReport(scenario, rows, float(runtime_s))
