"""Reconstruction estimators: calibration-mean intercept, lasso and
principal-components regression (PCR).

All three are fitted on a set of calibration years and predict the target
from proxy rows. Proxies with any missing calibration year are dropped from
the fit (listwise), never imputed. Proxies are standardized over the
calibration years (sd divisor n - 1) before fitting.

Lasso minimizes ``(1/2n) |z - X b|^2 + lam |b|_1`` where ``X`` holds the
standardized proxies and ``z`` is the calibration target standardized to
mean 0 and sd 1, so ``lam`` is unit-free. Predictions are mapped back to
target units. When no ``lam`` is given it is picked by contiguous-block
cross-validation over the calibration years.

PCR takes the singular value decomposition of the standardized calibration
matrix, so components are correlation-mode principal components computed
from calibration years only, and regresses the centered target on the first
``k`` component scores.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .data import ProxyNetwork, StandardizationParams, TargetSeries
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    MissingPredictorError,
    RankError,
    ZeroVarianceError,
)

LASSO_TOL = 1e-9
LASSO_MAX_SWEEPS = 10000
CV_BLOCKS = 10
CV_LAMBDAS = 30
CV_RATIO = 1e-3


@dataclass(frozen=True)
class MethodSpec:
    """Which estimator to fit: ``intercept``, ``lasso`` (``lam=None`` means
    cross-validated) or ``pcr`` with ``k`` components."""

    kind: str
    lam: Optional[float] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("intercept", "lasso", "pcr"):
            raise ConfigError(f"unknown method {self.kind!r}")
        if self.kind == "lasso" and self.lam is not None and not self.lam >= 0.0:
            raise ConfigError(f"lasso lambda must be non-negative, got {self.lam}")
        if self.kind == "pcr" and (self.k is None or self.k < 1):
            raise ConfigError("pcr needs a positive number of components")

    @property
    def label(self) -> str:
        if self.kind == "lasso":
            return "lasso(cv)" if self.lam is None else f"lasso({self.lam:g})"
        if self.kind == "pcr":
            return f"pcr({self.k})"
        return "intercept"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """``intercept``, ``lasso``, ``lasso:cv``, ``lasso:0.1`` or ``pcr:5``."""
        kind, _, arg = text.strip().partition(":")
        kind, arg = kind.strip(), arg.strip()
        try:
            if kind == "lasso":
                return cls("lasso", None if arg in ("", "cv") else float(arg))
            if kind == "pcr":
                return cls("pcr", k=int(arg) if arg else None)
        except ValueError:
            raise ConfigError(f"bad method argument in {text!r}") from None
        if arg:
            raise ConfigError(f"method {kind!r} takes no argument")
        return cls(kind)


@dataclass(frozen=True, eq=False)
class ReconstructionModel:
    method: str
    intercept: float
    predictor_ids: tuple = ()
    # per predictor, in standardized-proxy space and target units
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    preprocessing: Optional[StandardizationParams] = None
    lam: Optional[float] = None
    k: Optional[int] = None
    pc_loadings: Optional[np.ndarray] = None
    pc_coefficients: Optional[np.ndarray] = None
    singular_values: Optional[np.ndarray] = None
    target_sd: Optional[float] = None
    excluded_ids: tuple = ()
    sweeps: Optional[int] = None

    @property
    def label(self) -> str:
        if self.method == "lasso":
            return f"lasso({self.lam:g})"
        if self.method == "pcr":
            return f"pcr({self.k})"
        return "intercept"

    @property
    def raw_weights(self) -> np.ndarray:
        """Coefficients on proxies in their original units."""
        if self.preprocessing is None:
            return np.zeros(0)
        return self.coefficients / self.preprocessing.sd

    def explained_variance(self) -> Optional[np.ndarray]:
        if self.singular_values is None:
            return None
        s2 = self.singular_values**2
        return s2 / s2.sum()


@dataclass(frozen=True, eq=False)
class Backcast:
    years: np.ndarray
    values: np.ndarray
    method: str


@dataclass(frozen=True, eq=False)
class WeightProfile:
    ids: tuple
    weights: np.ndarray
    standardized_weights: np.ndarray
    l1_share: np.ndarray
    method: str

    def share_of(self, ids) -> float:
        """Fraction of total absolute standardized weight carried by ``ids``."""
        wanted = set(ids)
        mask = np.array([i in wanted for i in self.ids])
        return float(np.abs(self.l1_share[mask]).sum())


@dataclass(frozen=True)
class LambdaCV:
    grid: np.ndarray
    rmse: np.ndarray
    best: float


# ---------------------------------------------------------------------------
# helpers


def _years(years) -> np.ndarray:
    years = np.unique(np.asarray(years, dtype=int))
    return years


def _calibration_block(net: ProxyNetwork, target: TargetSeries, calib):
    calib = _years(calib)
    if calib.size == 0:
        raise DataError("empty calibration set")
    complete = net.complete_on(calib)
    ids = tuple(pid for pid, ok in zip(net.ids, complete) if ok)
    excluded = tuple(pid for pid, ok in zip(net.ids, complete) if not ok)
    if not ids:
        raise DataError("no proxy is available on every calibration year")
    X = net.rows(calib)[0][:, complete]
    y = target.at(calib)
    return ids, excluded, X, y


def _standardize_block(X, ids):
    n = X.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 calibration years, got {n}")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    flat = [ids[j] for j in np.nonzero(sd <= 1e-12 * np.maximum(1.0, np.abs(mean)))[0]]
    if flat:
        raise ZeroVarianceError(f"zero-variance proxies on calibration years: {flat}")
    return (X - mean) / sd, StandardizationParams(tuple(ids), mean, sd)


def _target_scale(y):
    ybar = float(y.mean())
    yc = y - ybar
    sd = float(np.std(yc, ddof=1)) if y.size > 1 else 0.0
    return ybar, yc, sd


# ---------------------------------------------------------------------------
# estimators


def fit_intercept(target: TargetSeries, calib) -> ReconstructionModel:
    calib = _years(calib)
    if calib.size == 0:
        raise DataError("empty calibration set")
    return ReconstructionModel("intercept", float(target.at(calib).mean()))


def lasso_objective(X, z, beta, lam) -> float:
    r = z - X @ beta
    return float(r @ r) / (2 * len(z)) + lam * float(np.abs(beta).sum())


def solve_lasso(Xs, z, lam, beta0=None, tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS):
    """Coordinate descent on an already standardized design.

    Returns ``(beta, sweeps)``; raises :class:`ConvergenceError` when the
    sweep budget runs out.
    """
    n = Xs.shape[0]
    G = Xs.T @ Xs / n
    c = Xs.T @ z / n
    beta, sweeps = kernels.lasso_cd_gram(G, c, float(lam), beta0, tol, max_sweeps)
    if sweeps < 0:
        raise ConvergenceError(f"lasso did not converge within {max_sweeps} sweeps", sweeps=max_sweeps)
    return beta, sweeps


def lambda_max(Xs, z) -> float:
    """Smallest lambda at which every lasso coefficient is zero."""
    return float(np.max(np.abs(Xs.T @ z)) / Xs.shape[0])


def select_lambda_cv(X, y, n_blocks=CV_BLOCKS, n_lambdas=CV_LAMBDAS, ratio=CV_RATIO) -> LambdaCV:
    """Leave-one-block-out CV over contiguous blocks of calibration rows.

    The grid runs geometrically from the all-zero lambda of the full block
    down to ``ratio`` times it. Each fold re-standardizes on its training
    rows. Ties go to the larger lambda.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    n_blocks = min(n_blocks, n)
    if n_blocks < 2:
        raise DataError("cross-validation needs at least 2 calibration years")
    Xs, _ = _standardize_block(X, [str(j) for j in range(p)])
    _, yc, ysd = _target_scale(y)
    if ysd == 0.0:
        return LambdaCV(np.zeros(1), np.zeros(1), 0.0)
    top = lambda_max(Xs, yc / ysd)
    if top == 0.0:
        return LambdaCV(np.zeros(1), np.zeros(1), 0.0)
    grid = top * np.geomspace(1.0, ratio, n_lambdas)
    sse = np.zeros(n_lambdas)
    for block in np.array_split(np.arange(n), n_blocks):
        train = np.ones(n, dtype=bool)
        train[block] = False
        Xt, yt = X[train], y[train]
        mean = Xt.mean(axis=0)
        sd = Xt.std(axis=0, ddof=1) if Xt.shape[0] > 1 else np.zeros(p)
        ok = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(ok, sd, 1.0)
        Xts = np.where(ok, (Xt - mean) / scale, 0.0)
        ybar, ytc, ytsd = _target_scale(yt)
        if ytsd == 0.0:
            pred = np.full((block.size, n_lambdas), ybar)
        else:
            m = Xts.shape[0]
            coefs, sweeps = kernels.lasso_path_gram(
                Xts.T @ Xts / m, Xts.T @ (ytc / ytsd) / m, grid, LASSO_TOL, LASSO_MAX_SWEEPS
            )
            if np.any(sweeps < 0):
                raise ConvergenceError("lasso path did not converge during cross-validation")
            Xb = np.where(ok, (X[block] - mean) / scale, 0.0)
            pred = ybar + ytsd * (Xb @ coefs.T)
        sse += ((pred - y[block, None]) ** 2).sum(axis=0)
    rmse = np.sqrt(sse / n)
    best = int(np.argmin(rmse))
    return LambdaCV(grid, rmse, float(grid[best]))


def fit_lasso(net: ProxyNetwork, target: TargetSeries, calib, lam: Optional[float] = None,
              *, n_blocks: int = CV_BLOCKS) -> ReconstructionModel:
    ids, excluded, X, y = _calibration_block(net, target, calib)
    Xs, params = _standardize_block(X, ids)
    ybar, yc, ysd = _target_scale(y)
    if lam is None:
        lam = select_lambda_cv(X, y, n_blocks=n_blocks).best
    if lam < 0:
        raise ConfigError(f"lasso lambda must be non-negative, got {lam}")
    if ysd == 0.0:
        beta, sweeps = np.zeros(len(ids)), 0
    else:
        beta, sweeps = solve_lasso(Xs, yc / ysd, lam)
    return ReconstructionModel(
        "lasso",
        ybar,
        ids,
        beta * ysd,
        params,
        lam=float(lam),
        target_sd=ysd,
        excluded_ids=excluded,
        sweeps=sweeps,
    )


def _orient_components(s, V):
    """Order by singular value (exact ties: column order of the dominant
    loading) and make each component's largest-magnitude loading positive."""
    dominant = np.argmax(np.abs(V), axis=0)
    order = sorted(range(len(s)), key=lambda i: (-s[i], dominant[i]))
    s, V = s[order], V[:, order]
    dominant = dominant[order]
    signs = np.sign(V[dominant, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return s, V * signs


def pcr_coefficients(Xs, yc, loadings):
    """Least-squares regression of ``yc`` on the scores ``Xs @ loadings``.

    Returns ``(gamma, beta)``: per-component coefficients and the implied
    coefficients on standardized proxies. Loadings are sign-normalized
    first (largest-magnitude entry positive), so flipping any component
    leaves ``beta`` bit-identical and ``gamma`` follows the normalized signs.
    """
    loadings = np.ascontiguousarray(loadings, dtype=float)
    if loadings.size:
        dominant = np.argmax(np.abs(loadings), axis=0)
        signs = np.sign(loadings[dominant, np.arange(loadings.shape[1])])
        signs[signs == 0] = 1.0
        loadings = np.ascontiguousarray(loadings * signs)
    scores = Xs @ loadings
    gamma = (scores.T @ yc) / np.einsum("ij,ij->j", scores, scores)
    return gamma, loadings @ gamma


def matrix_rank(s, shape) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > s[0] * max(shape) * np.finfo(float).eps))


def fit_pcr(net: ProxyNetwork, target: TargetSeries, calib, k: int) -> ReconstructionModel:
    ids, excluded, X, y = _calibration_block(net, target, calib)
    Xs, params = _standardize_block(X, ids)
    ybar, yc, _ = _target_scale(y)
    _, s, Vt = np.linalg.svd(Xs, full_matrices=False)
    rank = matrix_rank(s, Xs.shape)
    if k < 1 or k > rank:
        raise RankError(
            f"cannot retain {k} components: the calibration proxy matrix has rank {rank}",
            k=k,
            rank=rank,
        )
    s, V = _orient_components(s[:rank], Vt[:rank].T)
    loadings = V[:, :k]
    gamma, beta = pcr_coefficients(Xs, yc, loadings)
    return ReconstructionModel(
        "pcr",
        ybar,
        ids,
        beta,
        params,
        k=k,
        pc_loadings=loadings,
        pc_coefficients=gamma,
        singular_values=s,
        excluded_ids=excluded,
    )


def fit_method(method: MethodSpec, net: ProxyNetwork, target: TargetSeries, calib) -> ReconstructionModel:
    if method.kind == "intercept":
        return fit_intercept(target, calib)
    if method.kind == "lasso":
        return fit_lasso(net, target, calib, method.lam)
    return fit_pcr(net, target, calib, method.k)


# ---------------------------------------------------------------------------
# prediction and diagnostics


def predict(model: ReconstructionModel, net: Optional[ProxyNetwork], years) -> Backcast:
    years = _years(years)
    if model.method == "intercept" or not np.any(model.coefficients != 0.0):
        return Backcast(years, np.full(years.size, model.intercept), model.label)
    needed = model.coefficients != 0.0 if model.method == "lasso" else np.ones(len(model.predictor_ids), bool)
    ids = [pid for pid, use in zip(model.predictor_ids, needed) if use]
    values, mask = net.select(ids).rows(years)
    missing = ~mask.all(axis=1)
    if missing.any():
        raise MissingPredictorError(
            f"predictors unavailable on {int(missing.sum())} requested years",
            years=years[missing][:10].tolist(),
        )
    mean = model.preprocessing.mean[needed]
    sd = model.preprocessing.sd[needed]
    pred = model.intercept + ((values - mean) / sd) @ model.coefficients[needed]
    return Backcast(years, pred, model.label)


def available_years(model: ReconstructionModel, net: ProxyNetwork) -> np.ndarray:
    """Years of ``net`` on which every predictor the model needs is available."""
    if model.method == "intercept":
        return net.years
    if model.method == "lasso":
        ids = [pid for pid, b in zip(model.predictor_ids, model.coefficients) if b != 0.0]
    else:
        ids = list(model.predictor_ids)
    if not ids:
        return net.years
    mask = net.select(ids).mask
    return net.years[mask.all(axis=1)]


def pc_weight_profile(model: ReconstructionModel) -> WeightProfile:
    """Effective per-proxy weights of a PCR model.

    ``standardized_weights`` sum the loadings times the component
    coefficients; ``weights`` map them back to raw proxy units; ``l1_share``
    normalizes the standardized weights to unit L1 norm (signed).
    """
    if model.method != "pcr":
        raise ConfigError(f"weight profiles need a pcr model, got {model.method}")
    std_w = model.pc_loadings @ model.pc_coefficients
    total = np.abs(std_w).sum()
    share = std_w / total if total > 0 else np.zeros_like(std_w)
    return WeightProfile(model.predictor_ids, std_w / model.preprocessing.sd, std_w, share, model.label)


def weight_profile(model: ReconstructionModel) -> WeightProfile:
    """Per-proxy weights of a lasso or PCR model (see :func:`pc_weight_profile`)."""
    if model.method == "pcr":
        return pc_weight_profile(model)
    if model.method != "lasso":
        raise ConfigError(f"weight profiles need a lasso or pcr model, got {model.method}")
    std_w = np.asarray(model.coefficients, dtype=float)
    total = np.abs(std_w).sum()
    share = std_w / total if total > 0 else np.zeros_like(std_w)
    return WeightProfile(model.predictor_ids, std_w / model.preprocessing.sd, std_w, share, model.label)


def write_backcast(bc: Backcast, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "value", "method"])
        for year, value in zip(bc.years, bc.values):
            w.writerow([int(year), repr(float(value)), bc.method])


def write_weight_profile(profile: WeightProfile, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["proxy_id", "weight", "weight_l1_share"])
        for pid, weight, share in zip(profile.ids, profile.weights, profile.l1_share):
            w.writerow([pid, repr(float(weight)), repr(float(share))])
