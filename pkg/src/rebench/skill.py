"""Holdout RMSE and RE (reduction of error) over every contiguous holdout window.

For a window the model and the calibration-mean (intercept) model are both
fitted on the remaining years, and::

    RE = 1 - rmse_model / rmse_intercept

Windows where the intercept RMSE is exactly zero have no defined RE; they are
kept in the sweep with ``re = nan`` and left out of every summary.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .data import (
    ProxyNetwork,
    SplitSpec,
    TargetSeries,
    YearAxis,
    enumerate_splits,
    instrumental_overlap,
)
from .errors import (
    ConvergenceError,
    DataError,
    DegenerateHoldoutError,
    RebenchError,
    ZeroVarianceError,
)
from .reconstruct import (
    LASSO_MAX_SWEEPS,
    LASSO_TOL,
    MethodSpec,
    fit_intercept,
    fit_method,
    predict,
)

POSITIONS = ("endpoint", "interior")


@dataclass(frozen=True)
class HoldoutResult:
    split: SplitSpec
    rmse_model: float
    rmse_intercept: float
    re: float
    position: str
    method: str

    @property
    def degenerate(self) -> bool:
        return self.rmse_intercept == 0.0


@dataclass(frozen=True)
class BoxSummary:
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "mean": self.mean,
        }


@dataclass(frozen=True)
class PositionSummary:
    position: str
    n_degenerate: int
    re: BoxSummary
    rmse_model: BoxSummary
    rmse_intercept: BoxSummary


@dataclass(frozen=True)
class SweepInput:
    """Network and target restricted to their instrumental overlap, keeping
    only proxies complete on every overlap year."""

    overlap: YearAxis
    network: ProxyNetwork
    y: np.ndarray
    excluded_ids: tuple


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DataError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise DataError("rmse of empty input")
    d = pred - truth
    return math.sqrt(float(d @ d) / d.size)


def re_statistic(rmse_model: float, rmse_intercept: float) -> float:
    if not rmse_intercept > 0.0:
        raise DegenerateHoldoutError(
            "intercept RMSE is zero: the holdout target equals the calibration mean"
        )
    return 1.0 - rmse_model / rmse_intercept


def box_summary(values) -> BoxSummary:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise DataError("summary of empty input")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    lo = float(v.min())
    # shifted mean: exact when all values are equal
    return BoxSummary(int(v.size), lo, float(q1), float(med), float(q3),
                      float(v.max()), lo + float((v - lo).mean()))


def prepare_sweep(net: ProxyNetwork, target: TargetSeries) -> SweepInput:
    overlap = instrumental_overlap(net, target)
    restricted = net.restrict(overlap)
    complete = restricted.mask.all(axis=0)
    excluded = tuple(pid for pid, ok in zip(net.ids, complete) if not ok)
    kept = [pid for pid, ok in zip(net.ids, complete) if ok]
    return SweepInput(overlap, restricted.select(kept), target.at(overlap.years), excluded)


def sweep_matrix(X: np.ndarray, y: np.ndarray, overlap: YearAxis, splits, method: MethodSpec,
                 ids: Optional[tuple] = None) -> tuple:
    """Model and intercept holdout RMSEs for every split, as two arrays.

    ``X`` holds complete proxy columns on the overlap years. Lasso with a
    fixed lambda runs through the compiled sliding-window kernel; everything
    else refits per split.
    """
    L = splits[0].holdout_length
    if method.kind == "lasso" and method.lam is not None and X.shape[1] > 0:
        rm, ri, status = kernels.lasso_holdout_sweep(X, y, L, float(method.lam), LASSO_TOL, LASSO_MAX_SWEEPS)
        bad = np.nonzero(status < 0)[0]
        if bad.size:
            s = int(bad[0])
            if status[s] == kernels.STATUS_ZERO_VARIANCE:
                raise ZeroVarianceError(
                    "zero-variance proxy on calibration years", split=splits[s].holdout_start
                )
            raise ConvergenceError(
                f"lasso did not converge within {LASSO_MAX_SWEEPS} sweeps", split=splits[s].holdout_start
            )
        return rm, ri

    if ids is None:
        ids = tuple(f"p{j}" for j in range(X.shape[1]))
    net = ProxyNetwork(overlap, ids, X, np.ones(X.shape, dtype=bool))
    target = TargetSeries(overlap, y)
    rm = np.empty(len(splits))
    ri = np.empty(len(splits))
    for i, split in enumerate(splits):
        calib = split.calibration_years(overlap)
        hold = split.holdout_years()
        truth = target.at(hold)
        try:
            base = fit_intercept(target, calib)
            ri[i] = rmse(np.full(hold.size, base.intercept), truth)
            if method.kind == "intercept":
                rm[i] = ri[i]
                continue
            model = fit_method(method, net, target, calib)
            rm[i] = rmse(predict(model, net, hold).values, truth)
        except RebenchError as exc:
            raise exc.with_context(split=split.holdout_start)
    return rm, ri


def re_values(rm: np.ndarray, ri: np.ndarray) -> np.ndarray:
    """Elementwise RE; nan where the intercept RMSE is zero."""
    out = np.full(rm.shape, np.nan)
    ok = ri > 0.0
    out[ok] = 1.0 - rm[ok] / ri[ok]
    return out


def holdout_sweep(net: ProxyNetwork, target: TargetSeries, method: MethodSpec,
                  holdout_length: int = 30) -> list:
    """Fit ``method`` and the intercept model on the complement of every
    contiguous holdout window of the instrumental overlap.

    Results are ordered by holdout start year.
    """
    prep = prepare_sweep(net, target)
    if method.kind != "intercept" and prep.network.n_proxies == 0:
        raise DataError("no proxy is complete over the instrumental overlap")
    splits = enumerate_splits(prep.overlap, holdout_length)
    rm, ri = sweep_matrix(prep.network.matrix, prep.y, prep.overlap, splits, method, prep.network.ids)
    re = re_values(rm, ri)
    return [
        HoldoutResult(split, float(rm[i]), float(ri[i]), float(re[i]), split.position, method.label)
        for i, split in enumerate(splits)
    ]


def summarize_by_position(results) -> dict:
    """Boxplot summaries of RE and RMSE for endpoint and interior windows.

    A class with no non-degenerate windows maps to ``None``.
    """
    results = list(results)
    if not results:
        raise DataError("no holdout results to summarize")
    out = {}
    for position in POSITIONS:
        rows = [r for r in results if r.position == position]
        good = [r for r in rows if not r.degenerate]
        if not good:
            out[position] = None
            continue
        out[position] = PositionSummary(
            position,
            len(rows) - len(good),
            box_summary([r.re for r in good]),
            box_summary([r.rmse_model for r in good]),
            box_summary([r.rmse_intercept for r in good]),
        )
    return out


def write_holdout_csv(results, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["holdout_start", "holdout_length", "position", "rmse_model",
                    "rmse_intercept", "re", "method"])
        for r in results:
            w.writerow([r.split.holdout_start, r.split.holdout_length, r.position,
                        repr(r.rmse_model), repr(r.rmse_intercept), repr(r.re), r.method])
