"""Time the compiled and numpy kernel backends on the null-benchmark workload.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--trials 200]

Each kernel is timed on the shapes used by a self-calibration ensemble
(10 proxies, 120 overlap years, 30-year holdouts). The end-to-end row runs
one null ensemble in a subprocess per backend, since the backend is fixed
at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rebench import kernels

ENSEMBLE = """
import time
from rebench.noise import NullModelSpec
from rebench.nullbench import run_null_ensemble
from rebench.reconstruct import MethodSpec
from rebench.synthetic import white_network
net, target = white_network(seed=0, p=10, n=120)
t0 = time.perf_counter()
run_null_ensemble(net, target, MethodSpec("lasso", 0.1), NullModelSpec("white"), trials={trials}, seed=1)
print(time.perf_counter() - t0)
"""


def workloads(rng):
    n, p, L = 120, 10, 30
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    Xs = (X - X.mean(0)) / X.std(0, ddof=1)
    z = (y - y.mean()) / y.std(ddof=1)
    G, c = Xs.T @ Xs / n, Xs.T @ z / n
    z_ar = rng.standard_normal((n, p))
    phis = rng.uniform(0.0, 0.9, p)
    rows = rng.standard_normal((p, n))
    key = np.array([7, 11], dtype=np.uint64)
    out = np.empty((p, n))
    return {
        "lasso_holdout_sweep (91 splits)": lambda k: k.lasso_holdout_sweep(X, y, L, 0.1, 1e-9, 10000),
        "lasso_cd_gram": lambda k: k.lasso_cd_gram(G, c, 0.05, None, 1e-9, 10000),
        "ar1_filter": lambda k: k.ar1_filter(z_ar, phis),
        "standardize_rows": lambda k: k.standardize_rows(rows.copy()),
        "philox_normals": lambda k: k.philox_normals(np.random.Philox(key=key), 3, out),
    }


def time_call(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def ensemble_seconds(pure: bool, trials: int) -> float:
    env = dict(os.environ)
    env["REBENCH_PURE_PYTHON"] = "1" if pure else "0"
    proc = subprocess.run([sys.executable, "-c", ENSEMBLE.format(trials=trials)], env=env,
                          capture_output=True, text=True, check=True)
    return float(proc.stdout.strip())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--trials", type=int, default=200, help="trials for the end-to-end ensemble row")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the numpy backend is timed")
    names = list(backends)
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s}" + "".join(f"{n:>14s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in workloads(rng).items():
        secs = [time_call(lambda: fn(backends[n]), args.repeat) for n in names]
        row = f"{label:34s}" + "".join(f"{s * 1e6:11.1f} us" for s in secs)
        if len(secs) > 1:
            row += f"{secs[0] / secs[1]:11.1f}x"
        print(row)
    secs = [ensemble_seconds(n == "python", args.trials) for n in names]
    row = f"{f'null ensemble ({args.trials} trials)':34s}" + "".join(f"{s:12.3f} s" for s in secs)
    if len(secs) > 1:
        row += f"{secs[0] / secs[1]:11.1f}x"
    print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
