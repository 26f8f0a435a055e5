"""Monte-Carlo null distributions of RE from pseudoproxy networks.

Each trial swaps the real proxies for a pseudoproxy network of the same shape
on the instrumental overlap, reruns the holdout sweep with the same method
and target, and aggregates the split REs. Benchmarks are upper empirical
percentiles of the trial values; a real reconstruction is significant when
its RE strictly exceeds them.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .data import ProxyNetwork, TargetSeries, enumerate_splits
from .errors import ConfigError, DataError, RebenchError
from .noise import NullModelSpec, RngSeed, StreamFactory, fit_network_ar1, pseudo_matrix
from .reconstruct import MethodSpec
from .skill import BoxSummary, box_summary, prepare_sweep, re_values, sweep_matrix

AGGREGATIONS = ("mean_over_splits", "per_split", "endpoint_only")
BENCHMARK_LEVELS = {"p50": 0.50, "p95": 0.95, "p99": 0.99}


def percentile(values, p: float) -> float:
    """Order statistic number ``ceil(p * n)`` (1-indexed) of the sorted values.

    No interpolation, so the benchmark never sits below an observed value
    that would make it less conservative.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise DataError("percentile of empty input")
    if not (0.0 < p < 1.0):
        raise ConfigError(f"percentile level must lie in (0, 1), got {p}")
    # guard against p * n landing a hair above an integer, e.g. 0.95 * 100
    k = math.ceil(round(p * v.size, 9))
    return float(v[max(k, 1) - 1])


def aggregate_re(re: np.ndarray, endpoint: np.ndarray, aggregation: str) -> np.ndarray:
    """Reduce split REs (last axis) according to ``aggregation``.

    ``mean_over_splits`` and ``endpoint_only`` return one value per leading
    index; ``per_split`` returns the REs unchanged. NaN (degenerate) splits
    are ignored.
    """
    if aggregation == "per_split":
        return re
    if aggregation == "mean_over_splits":
        sel = re
    elif aggregation == "endpoint_only":
        sel = re[..., endpoint]
    else:
        raise ConfigError(f"unknown aggregation {aggregation!r}; expected one of {AGGREGATIONS}")
    ok = np.isfinite(sel)
    if not ok.any():
        raise DataError("no non-degenerate holdout windows to aggregate")
    return np.where(ok, sel, 0.0).sum(axis=-1) / ok.sum(axis=-1)


def _proxy_statistic(re: np.ndarray, endpoint: np.ndarray, aggregation: str) -> float:
    # per_split compares the mean real split against the pooled split distribution
    agg = "mean_over_splits" if aggregation == "per_split" else aggregation
    return float(aggregate_re(re, endpoint, agg))


@dataclass(frozen=True, eq=False)
class NullEnsemble:
    spec: NullModelSpec
    method: str
    trials: int
    aggregation: str
    holdout_length: int
    seed: int
    re_values: np.ndarray
    percentiles: dict

    def summary(self) -> BoxSummary:
        return box_summary(self.re_values)

    def to_dict(self) -> dict:
        return {
            "null_family": self.spec.label,
            "method": self.method,
            "trials": self.trials,
            "aggregation": self.aggregation,
            "holdout_length": self.holdout_length,
            "seed": self.seed,
            "percentiles": dict(self.percentiles),
            "re_values": [float(v) for v in np.ravel(self.re_values)],
        }


@dataclass(frozen=True)
class Verdict:
    re_proxy: float
    benchmark95: float
    benchmark99: float
    significant95: bool
    significant99: bool
    spec: NullModelSpec

    def to_dict(self) -> dict:
        return {
            "null_family": self.spec.label,
            "re_proxy": self.re_proxy,
            "benchmark95": self.benchmark95,
            "benchmark99": self.benchmark99,
            "significant95": self.significant95,
            "significant99": self.significant99,
        }


def verdict(re_proxy: float, ensemble: NullEnsemble) -> Verdict:
    b95 = ensemble.percentiles["p95"]
    b99 = ensemble.percentiles["p99"]
    return Verdict(float(re_proxy), b95, b99, bool(re_proxy > b95), bool(re_proxy > b99), ensemble.spec)


@dataclass(frozen=True)
class _TrialJob:
    X_shape: tuple
    y: np.ndarray
    overlap: object
    splits: list
    method: MethodSpec
    spec: NullModelSpec
    params: Optional[list]
    seed: int


def _run_trials(job: _TrialJob, start: int, stop: int) -> np.ndarray:
    """Split REs for trials ``start..stop-1``, one row per trial."""
    n, p = job.X_shape
    streams = StreamFactory(job.seed, job.spec.label)
    out = np.empty((stop - start, len(job.splits)))
    for i, t in enumerate(range(start, stop)):
        try:
            X = pseudo_matrix(job.spec, n, p, t, streams, job.params)
            rm, ri = sweep_matrix(X, job.y, job.overlap, job.splits, job.method)
        except RebenchError as exc:
            raise exc.with_context(trial=t)
        out[i] = re_values(rm, ri)
    return out


def _seed_value(seed: Union[int, RngSeed]) -> int:
    return seed.seed if isinstance(seed, RngSeed) else RngSeed(int(seed)).seed


def run_null_ensemble(net: ProxyNetwork, target: TargetSeries, method: MethodSpec,
                      spec: NullModelSpec, trials: int = 999, holdout_length: int = 30,
                      seed: Union[int, RngSeed] = 0, aggregation: str = "mean_over_splits",
                      n_jobs: int = 1) -> NullEnsemble:
    """RE null distribution for ``method`` under pseudoproxy family ``spec``.

    The pseudo networks cover the instrumental overlap and have as many
    columns as the real network keeps there. For ``ar1_empirical`` each
    column's coefficient is fitted on the full real record of that proxy.
    Trial ``t`` depends only on ``(seed, spec, t)``, so ``n_jobs`` never
    changes the result.
    """
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    if aggregation not in AGGREGATIONS:
        raise ConfigError(f"unknown aggregation {aggregation!r}; expected one of {AGGREGATIONS}")
    seed_v = _seed_value(seed)
    prep = prepare_sweep(net, target)
    p = prep.network.n_proxies
    if p == 0:
        raise DataError("no proxy is complete over the instrumental overlap")
    splits = enumerate_splits(prep.overlap, holdout_length)
    params = fit_network_ar1(net.select(prep.network.ids)) if spec.kind == "ar1_empirical" else None
    job = _TrialJob((prep.overlap.length, p), prep.y, prep.overlap, splits, method, spec, params, seed_v)

    if n_jobs > 1 and trials > 1:
        bounds = np.linspace(0, trials, min(n_jobs, trials) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_run_trials, [job] * (len(bounds) - 1), bounds[:-1], bounds[1:]))
        re = np.vstack(parts)
    else:
        re = _run_trials(job, 0, trials)

    endpoint = np.array([s.position == "endpoint" for s in splits])
    values = aggregate_re(re, endpoint, aggregation)
    finite = values[np.isfinite(values)]
    pct = {name: percentile(finite, lvl) for name, lvl in BENCHMARK_LEVELS.items()}
    return NullEnsemble(spec, method.label, trials, aggregation, holdout_length, seed_v, values, pct)


def proxy_re(net: ProxyNetwork, target: TargetSeries, method: MethodSpec,
             holdout_length: int = 30, aggregation: str = "mean_over_splits") -> float:
    """Aggregated RE of the real network, on the same footing as the null."""
    prep = prepare_sweep(net, target)
    splits = enumerate_splits(prep.overlap, holdout_length)
    rm, ri = sweep_matrix(prep.network.matrix, prep.y, prep.overlap, splits, method, prep.network.ids)
    endpoint = np.array([s.position == "endpoint" for s in splits])
    return _proxy_statistic(re_values(rm, ri), endpoint, aggregation)


@dataclass(frozen=True, eq=False)
class FamilyComparison:
    method: str
    trials: int
    aggregation: str
    holdout_length: int
    seed: int
    re_proxy: float
    ensembles: list
    verdicts: list = field(default_factory=list)

    def boxplots(self) -> list:
        rows = []
        for ens in self.ensembles:
            row = {"family": ens.spec.label}
            row.update(ens.summary().as_dict())
            rows.append(row)
        return rows

    def to_report(self) -> dict:
        return {
            "method": self.method,
            "null_family": [e.spec.label for e in self.ensembles],
            "trials": self.trials,
            "aggregation": self.aggregation,
            "holdout_length": self.holdout_length,
            "percentiles": {e.spec.label: dict(e.percentiles) for e in self.ensembles},
            "re_proxy": self.re_proxy,
            "verdict": {v.spec.label: v.to_dict() for v in self.verdicts},
            "per_family_boxplots": self.boxplots(),
            "seed": self.seed,
        }


def compare_null_families(net: ProxyNetwork, target: TargetSeries, method: MethodSpec,
                          specs, trials: int = 999, holdout_length: int = 30,
                          seed: Union[int, RngSeed] = 0, aggregation: str = "mean_over_splits",
                          n_jobs: int = 1, min_families: int = 2) -> FamilyComparison:
    """Null ensembles for several families side by side with the real RE.

    Families draw from independent streams (the family label keys the
    generator), all from the same seed.
    """
    specs = list(specs)
    if len(specs) < min_families:
        raise ConfigError(f"need at least {min_families} null families, got {len(specs)}")
    re_proxy = proxy_re(net, target, method, holdout_length, aggregation)
    ensembles = [
        run_null_ensemble(net, target, method, s, trials, holdout_length, seed, aggregation, n_jobs)
        for s in specs
    ]
    verdicts = [verdict(re_proxy, e) for e in ensembles]
    return FamilyComparison(method.label, trials, aggregation, holdout_length, _seed_value(seed),
                            re_proxy, ensembles, verdicts)
