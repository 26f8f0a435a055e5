"""Per-year calibration consistency by inverting a proxy-on-target regression.

Each proxy is regressed on the target over the calibration years, giving
``y = a + b * xi + e`` with residual covariance ``S``. For an observed proxy
row ``y`` the generalized least squares distance

    Q(xi) = (y - a - b xi)' S^-1 (y - a - b xi)

is a quadratic in ``xi``. The confidence set ``{xi : Q(xi) <= c}`` is an
interval around the vertex, empty when even the vertex exceeds ``c`` (no
single target value fits all proxies), or unbounded when no proxy responds
to the target at all.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats

from .data import ProxyNetwork, TargetSeries
from .errors import (
    ConfigError,
    DataError,
    MissingPredictorError,
    RankError,
    SingularCovarianceError,
)

SET_KINDS = ("interval", "empty", "unbounded")
QUANTILES = ("chi2", "f")
COVARIANCES = ("diagonal", "full")
RESPONSE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CalibrationFit:
    """Per-proxy regressions on the target and their residual covariance.

    ``covariance`` is a vector of residual variances in diagonal mode and a
    full matrix otherwise.
    """

    ids: tuple
    slopes: np.ndarray
    intercepts: np.ndarray
    covariance: np.ndarray
    calib_size: int
    diagonal: bool = True
    forced_diagonal: bool = False
    degenerate: bool = False

    @property
    def n_proxies(self) -> int:
        return len(self.ids)

    def weight_matrix(self) -> np.ndarray:
        """Inverse residual covariance."""
        if self.degenerate:
            raise SingularCovarianceError("residual covariance has a zero variance")
        if self.diagonal:
            return np.diag(1.0 / self.covariance)
        try:
            cho = linalg.cho_factor(self.covariance)
        except linalg.LinAlgError:
            raise SingularCovarianceError("residual covariance is not positive definite") from None
        return linalg.cho_solve(cho, np.eye(self.n_proxies))

    def q_statistic(self, row, xi) -> np.ndarray:
        """Q evaluated at each value of ``xi``."""
        W = self.weight_matrix()
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        R = (np.asarray(row, dtype=float) - self.intercepts)[None, :] - xi[:, None] * self.slopes[None, :]
        return np.einsum("ij,jk,ik->i", R, W, R)


@dataclass(frozen=True)
class ConsistencySet:
    year: Optional[int]
    statistic_min: float
    set_kind: str
    lo: Optional[float] = None
    hi: Optional[float] = None
    estimate: Optional[float] = None
    degenerate: bool = False

    def __post_init__(self):
        if self.set_kind not in SET_KINDS:
            raise ConfigError(f"unknown set kind {self.set_kind!r}")
        if self.set_kind == "interval" and not (self.lo <= self.hi):
            raise DataError(f"interval with lo > hi: {self.lo} > {self.hi}")
        if self.set_kind != "interval" and (self.lo is not None or self.hi is not None):
            raise DataError(f"{self.set_kind} set cannot carry endpoints")
        if not self.statistic_min >= 0.0:
            raise DataError(f"negative minimum statistic {self.statistic_min}")

    def contains(self, xi: float) -> bool:
        if self.set_kind == "interval":
            return self.lo <= xi <= self.hi
        return self.set_kind == "unbounded"


@dataclass(frozen=True)
class ConsistencyProfile:
    sets: list
    skipped_years: tuple
    confidence: float
    quantile: str
    threshold: float

    def counts(self) -> dict:
        c = Counter(s.set_kind for s in self.sets)
        return {k: c.get(k, 0) for k in SET_KINDS}

    def by_century(self) -> dict:
        out = {}
        for s in self.sets:
            key = str((s.year // 100) * 100)
            row = out.setdefault(key, {k: 0 for k in SET_KINDS})
            row[s.set_kind] += 1
        return dict(sorted(out.items(), key=lambda kv: int(kv[0])))


def fit_calibration(net: ProxyNetwork, target: TargetSeries, calib,
                    covariance: str = "diagonal") -> CalibrationFit:
    """Regress every proxy on the target over ``calib``.

    Residual variances use divisor ``n - 2``. Full covariance needs
    ``n > q + 2``; with fewer years the diagonal estimate is used and
    ``forced_diagonal`` is set. A zero residual variance (a proxy exactly
    linear in the target) sets ``degenerate`` instead of raising.
    """
    if covariance not in COVARIANCES:
        raise ConfigError(f"unknown covariance mode {covariance!r}; expected one of {COVARIANCES}")
    calib = np.asarray(calib, dtype=np.int64)
    n = calib.size
    if n < 3:
        raise DataError(f"calibration needs at least 3 years, got {n}")
    Y, mask = net.rows(calib)
    missing = [pid for pid, ok in zip(net.ids, mask.all(axis=0)) if not ok]
    if missing:
        raise MissingPredictorError("proxies incomplete on the calibration years", columns=",".join(missing))
    x = target.at(calib)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-24 * max(1.0, float(x @ x)):
        raise RankError("target is constant over the calibration years; slopes are not identified")
    b = (xc @ (Y - Y.mean(axis=0))) / sxx
    a = Y.mean(axis=0) - b * x.mean()
    E = Y - a - np.outer(x, b)
    var = (E * E).sum(axis=0) / (n - 2)
    scale = np.maximum((Y - Y.mean(axis=0)).var(axis=0), np.abs(Y).max(axis=0) ** 2)
    degenerate = bool(np.any(var <= 1e-24 * np.maximum(scale, 1e-300)))

    q = net.n_proxies
    diagonal = covariance == "diagonal"
    forced = False
    if not diagonal and n <= q + 2:
        diagonal, forced = True, True
    if diagonal:
        cov = var
    else:
        cov = (E.T @ E) / (n - 2)
        cov = 0.5 * (cov + cov.T)
        if not degenerate and np.linalg.eigvalsh(cov).min() <= 0.0:
            raise SingularCovarianceError("full residual covariance is singular", calib_size=n, proxies=q)
    return CalibrationFit(tuple(net.ids), b, a, cov, n, diagonal, forced, degenerate)


def threshold(confidence: float, q: int, calib_size: int, quantile: str = "chi2") -> float:
    """Cutoff ``c`` on Q: the chi-square(q) quantile, or ``q * F(q, n - 2)``."""
    if not (0.0 < confidence < 1.0):
        raise ConfigError(f"confidence must lie in (0, 1), got {confidence}")
    if quantile == "chi2":
        return float(stats.chi2.ppf(confidence, q))
    if quantile == "f":
        if calib_size <= 2:
            raise DataError("F quantile needs more than 2 calibration years")
        return float(q * stats.f.ppf(confidence, q, calib_size - 2))
    raise ConfigError(f"unknown quantile {quantile!r}; expected one of {QUANTILES}")


def _classify(W, b, d, c, year):
    A = float(b @ W @ b)
    B = float(b @ W @ d)
    if A < RESPONSE_TOL:
        # no response to the target: Q is (numerically) flat at d'Wd
        qmin = max(float(d @ W @ d) - (B * B / A if A > 0.0 else 0.0), 0.0)
        if qmin <= c:
            return ConsistencySet(year, qmin, "unbounded", degenerate=True)
        return ConsistencySet(year, qmin, "empty", degenerate=True)
    xi = B / A
    r = d - xi * b
    qmin = max(float(r @ W @ r), 0.0)
    if qmin > c:
        return ConsistencySet(year, qmin, "empty", estimate=xi)
    half = math.sqrt((c - qmin) / A)
    return ConsistencySet(year, qmin, "interval", xi - half, xi + half, estimate=xi)


def consistency_set(fit: CalibrationFit, proxy_row, confidence: float = 0.95,
                    quantile: str = "chi2", year: Optional[int] = None) -> ConsistencySet:
    row = np.asarray(proxy_row, dtype=float)
    if row.shape != (fit.n_proxies,):
        raise DataError(f"proxy row has shape {row.shape}, expected ({fit.n_proxies},)")
    if not np.all(np.isfinite(row)):
        raise MissingPredictorError("proxy row is incomplete", year=year)
    c = threshold(confidence, fit.n_proxies, fit.calib_size, quantile)
    return _classify(fit.weight_matrix(), fit.slopes, row - fit.intercepts, c, year)


def backcast_consistency_profile(fit: CalibrationFit, net: ProxyNetwork, years,
                                 confidence: float = 0.95, quantile: str = "chi2") -> ConsistencyProfile:
    """One set per year on which every fitted proxy is available.

    Years outside the network axis or with a missing fitted proxy are
    skipped and listed.
    """
    years = np.asarray(years, dtype=np.int64)
    c = threshold(confidence, fit.n_proxies, fit.calib_size, quantile)
    sub = net.select(list(fit.ids))
    inside = np.asarray(sub.axis.contains(years), dtype=bool).reshape(years.shape)
    sets, skipped = [], [int(y) for y in years[~inside]]
    if inside.any():
        W = fit.weight_matrix()
        Y, mask = sub.rows(years[inside])
        for yr, row, ok in zip(years[inside], Y, mask.all(axis=1)):
            if not ok:
                skipped.append(int(yr))
                continue
            sets.append(_classify(W, fit.slopes, row - fit.intercepts, c, int(yr)))
    return ConsistencyProfile(sets, tuple(sorted(skipped)), confidence, quantile, c)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_consistency_csv(profile: ConsistencyProfile, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "statistic_min", "set_kind", "lo", "hi"])
        for s in profile.sets:
            w.writerow([s.year, repr(s.statistic_min), s.set_kind, _fmt(s.lo), _fmt(s.hi)])


def profile_summary(profile: ConsistencyProfile, fit: CalibrationFit) -> dict:
    return {
        "confidence": profile.confidence,
        "quantile": profile.quantile,
        "threshold": profile.threshold,
        "covariance": "diagonal" if fit.diagonal else "full",
        "forced_diagonal": fit.forced_diagonal,
        "calib_size": fit.calib_size,
        "n_proxies": fit.n_proxies,
        "n_years": len(profile.sets),
        "skipped_years": list(profile.skipped_years),
        "counts": profile.counts(),
        "by_century": profile.by_century(),
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
