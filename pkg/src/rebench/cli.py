"""Command-line driver: ``rebench benchmark | reconstruct | consistency``.

Options come from flags and, optionally, a JSON config file whose keys are
the long flag names (``holdout_length`` or ``holdout-length``). Flags win
over the file. Every output is computed in memory first and then written to
``--out`` in one go, so a failed run leaves no partial reports. Exit codes:
0 success, 2 config error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__, kernels
from .consistency import (
    backcast_consistency_profile,
    fit_calibration,
    profile_summary,
    write_consistency_csv,
)
from .data import dedup_columns, instrumental_overlap, load_network, load_target
from .errors import ConfigError, DataError, RebenchError
from .noise import NullModelSpec
from .nullbench import AGGREGATIONS, compare_null_families
from .reconstruct import (
    MethodSpec,
    available_years,
    fit_method,
    predict,
    weight_profile,
    write_backcast,
    write_weight_profile,
)
from .skill import holdout_sweep, summarize_by_position, write_holdout_csv

COMMANDS = ("benchmark", "reconstruct", "consistency")
METHODS = ("intercept", "lasso", "pcr")


@dataclass
class RunConfig:
    command: str
    proxies: str
    target: str
    out: str
    method: str = "lasso"
    lam: Optional[float] = None
    pcs: list = field(default_factory=lambda: [1, 5, 10, 20])
    holdout_length: int = 30
    null: list = field(default_factory=lambda: ["white", "ar1_empirical"])
    fixed_phi: Optional[float] = None
    trials: int = 999
    seed: int = 0
    aggregation: str = "mean_over_splits"
    confidence: float = 0.95
    quantile: str = "chi2"
    covariance: str = "diagonal"
    years: Optional[str] = None
    exclude: list = field(default_factory=list)
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name in ("proxies", "target", "out"):
            if not getattr(self, name):
                raise ConfigError(f"--{name} is required")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.command == "reconstruct" and self.method == "intercept":
            raise ConfigError("reconstruct needs method lasso or pcr")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"--lambda must be non-negative, got {self.lam}")
        if not self.pcs or any(k < 1 for k in self.pcs):
            raise ConfigError(f"--pcs must list positive integers, got {self.pcs}")
        if self.command == "benchmark" and self.method == "pcr" and len(self.pcs) != 1:
            raise ConfigError("benchmark with pcr takes a single --pcs value")
        if self.holdout_length < 1:
            raise ConfigError("--holdout-length must be positive")
        if self.trials < 1:
            raise ConfigError("--trials must be at least 1")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"unknown aggregation {self.aggregation!r}; expected one of {AGGREGATIONS}")
        if not (0.0 < self.confidence < 1.0):
            raise ConfigError("--confidence must lie in (0, 1)")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if self.command == "benchmark":
            self.null_specs()
        return self

    def method_specs(self) -> list:
        if self.method == "pcr":
            return [MethodSpec("pcr", k=k) for k in self.pcs]
        if self.method == "lasso":
            return [MethodSpec("lasso", lam=self.lam)]
        return [MethodSpec("intercept")]

    def null_specs(self) -> list:
        specs = [NullModelSpec.parse(n, self.fixed_phi if n.strip() == "ar1_fixed" else None)
                 for n in self.null]
        if not specs:
            raise ConfigError("--null lists no families")
        return specs

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# argument handling


def _int_list(text):
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _str_list(text):
    if isinstance(text, list):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


# flag dest -> converter, shared by argparse and the config file
_FIELDS = {
    "proxies": str,
    "target": str,
    "out": str,
    "method": str,
    "lam": float,
    "pcs": _int_list,
    "holdout_length": int,
    "null": _str_list,
    "fixed_phi": float,
    "trials": int,
    "seed": int,
    "aggregation": str,
    "confidence": float,
    "quantile": str,
    "covariance": str,
    "years": str,
    "exclude": _str_list,
    "jobs": int,
}
_ALIASES = {"lambda": "lam"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rebench",
        description="Holdout skill, pseudoproxy null benchmarks and calibration consistency.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("benchmark", "holdout RE sweep plus pseudoproxy null ensembles"),
        ("reconstruct", "backcasts, weight profiles and a divergence table"),
        ("consistency", "per-year calibration consistency sets"),
    ):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of options (flags override it)")
        p.add_argument("--proxies", help="proxy CSV (year column then one column per proxy)")
        p.add_argument("--target", help="target CSV (year,value)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--lambda", dest="lam", type=float,
                       help="lasso penalty on the standardized target (default: cross-validated)")
        p.add_argument("--pcs", type=_int_list, help="comma-separated component counts")
        p.add_argument("--holdout-length", type=int)
        p.add_argument("--null", type=_str_list,
                       help="comma-separated families: white, ar1_fixed[:phi], ar1_empirical")
        p.add_argument("--fixed-phi", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--aggregation", choices=AGGREGATIONS)
        p.add_argument("--confidence", type=float)
        p.add_argument("--quantile", choices=("chi2", "f"))
        p.add_argument("--covariance", choices=("diagonal", "full"))
        p.add_argument("--years", help="backcast year range START-END (consistency)")
        p.add_argument("--exclude", type=_str_list, help="comma-separated proxy ids to drop")
        p.add_argument("--jobs", type=int, help="worker processes for null trials")
    return parser


def _read_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", path=path) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc.msg}", path=path) from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object", path=path)
    out = {}
    for key, value in raw.items():
        dest = key.replace("-", "_")
        dest = _ALIASES.get(dest, dest)
        if dest not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}", path=path)
        if value is None:
            out[dest] = None
            continue
        try:
            out[dest] = _FIELDS[dest](value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key!r}: {value!r}", path=path) from None
    return out


def config_from_args(argv=None) -> RunConfig:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise ConfigError("invalid command line") from None
    flags = vars(ns)
    command = flags.pop("command")
    values = {}
    if "config" in flags:
        values.update(_read_config_file(flags.pop("config")))
    values.update(flags)
    for name in ("proxies", "target", "out"):
        values.setdefault(name, "")
    try:
        return RunConfig(command=command, **values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# shared pipeline pieces


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _load_inputs(cfg: RunConfig):
    for name in ("proxies", "target"):
        if not os.path.isfile(getattr(cfg, name)):
            raise DataError(f"input file not found: {getattr(cfg, name)}", input=name)
    target = load_target(cfg.target)
    net = load_network(cfg.proxies)
    unknown = [pid for pid in cfg.exclude if pid not in net.ids]
    if unknown:
        raise ConfigError(f"--exclude names unknown proxies: {', '.join(unknown)}")
    if cfg.exclude:
        net = net.drop(cfg.exclude)
    overlap = instrumental_overlap(net, target)
    net, removed = dedup_columns(net, overlap)
    return net, target, overlap, list(removed)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _manifest(cfg: RunConfig, outputs) -> dict:
    return {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "inputs": {
            "proxies": {"path": cfg.proxies, "sha256": sha256_file(cfg.proxies)},
            "target": {"path": cfg.target, "sha256": sha256_file(cfg.target)},
        },
        "outputs": sorted(outputs),
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


class _Outputs:
    """Collects files in a scratch directory, then moves them into place."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = {}

    def text(self, name, content: str):
        self.files[name] = ("text", content)

    def writer(self, name, fn, obj):
        self.files[name] = ("fn", (fn, obj))

    def commit(self, cfg: RunConfig):
        self.text("manifest.json", _dump_json(_manifest(cfg, list(self.files) + ["manifest.json"])))
        os.makedirs(self.out_dir, exist_ok=True)
        scratch = tempfile.mkdtemp(prefix=".rebench-", dir=self.out_dir)
        try:
            for name, (kind, payload) in self.files.items():
                path = os.path.join(scratch, name)
                if kind == "text":
                    with open(path, "w", encoding="utf-8", newline="") as fh:
                        fh.write(payload)
                else:
                    fn, obj = payload
                    fn(obj, path)
            for name in self.files:
                os.replace(os.path.join(scratch, name), os.path.join(self.out_dir, name))
        finally:
            shutil.rmtree(scratch, ignore_errors=True)
        return sorted(self.files)


# ---------------------------------------------------------------------------
# commands


def _box_row(label, box):
    return [label, box.n, repr(box.min), repr(box.q1), repr(box.median), repr(box.q3),
            repr(box.max), repr(box.mean)]


def run_benchmark(cfg: RunConfig) -> list:
    net, target, overlap, removed = _load_inputs(cfg)
    method = cfg.method_specs()[0]
    specs = cfg.null_specs()

    results = holdout_sweep(net, target, method, cfg.holdout_length)
    positions = summarize_by_position(results)
    comparison = compare_null_families(net, target, method, specs, cfg.trials, cfg.holdout_length,
                                       cfg.seed, cfg.aggregation, cfg.jobs, min_families=1)

    report = comparison.to_report()
    report["removed_duplicates"] = removed
    report["excluded"] = list(cfg.exclude)
    report["instrumental_overlap"] = [overlap.start_year, overlap.end_year]

    box_header = ["group", "n", "min", "q1", "median", "q3", "max", "mean"]
    pos_rows = []
    for position, summary in positions.items():
        if summary is None:
            continue
        for stat in ("re", "rmse_model", "rmse_intercept"):
            pos_rows.append([position, stat] + _box_row(position, getattr(summary, stat))[1:])
    family_rows = [_box_row(e.spec.label, e.summary()) for e in comparison.ensembles]

    out = _Outputs(cfg.out)
    out.writer("holdout.csv", write_holdout_csv, results)
    out.text("position_summary.csv", _csv_text(["position", "statistic"] + box_header[1:], pos_rows))
    out.text("null_boxplots.csv", _csv_text(box_header, family_rows))
    out.text("null_ensembles.json", _dump_json([e.to_dict() for e in comparison.ensembles]))
    out.text("verdict.json", _dump_json([v.to_dict() for v in comparison.verdicts]))
    out.text("report.json", _dump_json(report))
    return out.commit(cfg)


def run_reconstruct(cfg: RunConfig) -> list:
    net, target, overlap, removed = _load_inputs(cfg)
    calib = overlap.years
    fitted = []
    for method in cfg.method_specs():
        try:
            model = fit_method(method, net, target, calib)
            years = available_years(model, net)
            backcast = predict(model, net, years)
            sweep = holdout_sweep(net, target, method, cfg.holdout_length)
        except RebenchError as exc:
            raise exc.with_context(method=method.label)
        cv_rmse = float(np.mean([r.rmse_model for r in sweep]))
        fitted.append((method, model, backcast, weight_profile(model), cv_rmse))

    # pairwise divergence on the years before calibration that all share
    pre = overlap.start_year
    rows = []
    for i in range(len(fitted)):
        for j in range(i + 1, len(fitted)):
            a, b = fitted[i][2], fitted[j][2]
            common = np.intersect1d(a.years[a.years < pre], b.years[b.years < pre])
            if common.size:
                va = a.values[np.searchsorted(a.years, common)]
                vb = b.values[np.searchsorted(b.years, common)]
                rms = repr(float(np.sqrt(np.mean((va - vb) ** 2))))
            else:
                rms = ""
            rows.append([fitted[i][0].label, fitted[j][0].label, int(common.size), rms,
                         repr(fitted[i][4]), repr(fitted[j][4])])

    out = _Outputs(cfg.out)
    summary = {"methods": [], "removed_duplicates": removed, "excluded": list(cfg.exclude),
               "calibration": [overlap.start_year, overlap.end_year]}
    for method, model, backcast, profile, cv_rmse in fitted:
        tag = method.label.replace("(", "").replace(")", "")
        out.writer(f"backcast_{tag}.csv", write_backcast, backcast)
        out.writer(f"weights_{tag}.csv", write_weight_profile, profile)
        summary["methods"].append({
            "method": method.label,
            "cv_rmse": cv_rmse,
            "lambda": model.lam,
            "n_backcast_years": int(backcast.years.size),
            "excluded_predictors": list(model.excluded_ids),
        })
    out.text("divergence.csv", _csv_text(
        ["method_a", "method_b", "n_years", "rms_difference", "cv_rmse_a", "cv_rmse_b"], rows))
    out.text("reconstruct_summary.json", _dump_json(summary))
    return out.commit(cfg)


def _parse_years(text, default):
    if text is None:
        return default
    start, sep, end = str(text).partition("-")
    try:
        lo, hi = int(start), int(end if sep else start)
    except ValueError:
        raise ConfigError(f"--years must look like START-END, got {text!r}") from None
    return np.arange(lo, hi + 1, dtype=np.int64)


def run_consistency(cfg: RunConfig) -> list:
    net, target, overlap, removed = _load_inputs(cfg)
    calib = overlap.years
    complete = net.complete_on(calib)
    used = [pid for pid, ok in zip(net.ids, complete) if ok]
    if not used:
        raise DataError("no proxy is complete over the calibration years")
    fit = fit_calibration(net.select(used), target, calib, cfg.covariance)
    years = _parse_years(cfg.years, net.years[net.years < overlap.start_year])
    profile = backcast_consistency_profile(fit, net, years, cfg.confidence, cfg.quantile)
    summary = profile_summary(profile, fit)
    summary["removed_duplicates"] = removed
    summary["excluded"] = list(cfg.exclude) + [pid for pid in net.ids if pid not in used]
    summary["calibration"] = [overlap.start_year, overlap.end_year]

    out = _Outputs(cfg.out)
    out.writer("consistency.csv", write_consistency_csv, profile)
    out.text("consistency_summary.json", _dump_json(summary))
    return out.commit(cfg)


RUNNERS = {"benchmark": run_benchmark, "reconstruct": run_reconstruct, "consistency": run_consistency}


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        written = RUNNERS[cfg.command](cfg)
    except RebenchError as exc:
        print(f"rebench: error [{exc.module}] {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"rebench: error [io] {exc}", file=sys.stderr)
        return DataError.exit_code
    print(f"wrote {len(written)} files to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
