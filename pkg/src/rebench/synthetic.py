"""Synthetic networks for tests, benchmarks and demos.

``python3 -m rebench.synthetic {weak-signal,block,white,calibration} --out DIR`` writes
``proxies.csv`` and ``target.csv`` that the CLI reads directly.
"""
from __future__ import annotations

import argparse
import os

import numpy as np

from . import kernels
from .data import ProxyNetwork, TargetSeries, YearAxis, write_network, write_target


def ar1_noise(rng: np.random.Generator, n: int, phis) -> np.ndarray:
    """Stationary unit-variance AR1 columns, one per entry of ``phis``."""
    phis = np.asarray(phis, dtype=float)
    z = rng.standard_normal((n, phis.size)) * np.sqrt(1.0 - phis**2)
    z[0] /= np.sqrt(1.0 - phis**2)
    return kernels.ar1_filter(z, phis)


def _ids(prefix, n):
    return tuple(f"{prefix}{j:03d}" for j in range(n))


def weak_signal_network(seed: int = 0, n_proxies: int = 90, instrumental: int = 149,
                        backcast: int = 851, signal: float = 0.25, start_year: int = 1000,
                        target_phi: float = 0.4, trend: float = 0.8):
    """Target = linear trend + AR1 noise on the last ``instrumental`` years;
    proxies = ``signal`` * standardized target history + AR1 noise whose
    coefficients are right-skewed on [0, 0.95].

    The pre-instrumental target history is simulated too, so backcasts have
    a known truth (returned third).
    """
    rng = np.random.default_rng(seed)
    n = backcast + instrumental
    t = np.linspace(0.0, 1.0, instrumental)
    truth = ar1_noise(rng, n, [target_phi])[:, 0] * 0.3
    truth[backcast:] += trend * t
    phis = 0.95 * rng.beta(1.2, 4.0, n_proxies)
    scaled = (truth - truth[backcast:].mean()) / truth[backcast:].std()
    X = signal * scaled[:, None] + ar1_noise(rng, n, phis)
    axis = YearAxis(start_year, n)
    net = ProxyNetwork(axis, _ids("ws", n_proxies), X, np.ones(X.shape, dtype=bool))
    target = TargetSeries(YearAxis(start_year + backcast, instrumental), truth[backcast:])
    return net, target, TargetSeries(axis, truth)


def block_network(seed: int = 0, block: int = 19, others: int = 74, instrumental: int = 120,
                  backcast: int = 200, start_year: int = 1700, block_r: float = 0.8):
    """``block`` columns sharing a common factor (pairwise correlation about
    ``block_r``) next to ``others`` independent columns.

    The target loads on the block factor and weakly on a few of the
    independent columns. Returns ``(net, target, block_ids)``.
    """
    rng = np.random.default_rng(seed)
    n = backcast + instrumental
    factor = rng.standard_normal(n)
    B = np.sqrt(block_r) * factor[:, None] + np.sqrt(1.0 - block_r) * rng.standard_normal((n, block))
    O = rng.standard_normal((n, others))
    X = np.hstack([B, O])
    ids = _ids("blk", block) + _ids("ind", others)
    k = min(others, 10)
    y = 0.6 * factor + O[:, :k] @ rng.uniform(0.1, 0.3, k) + 0.5 * rng.standard_normal(n)
    axis = YearAxis(start_year, n)
    net = ProxyNetwork(axis, ids, X, np.ones(X.shape, dtype=bool))
    target = TargetSeries(YearAxis(start_year + backcast, instrumental), y[backcast:])
    return net, target, ids[:block]


def white_network(seed: int = 0, p: int = 10, n: int = 120, start_year: int = 1880):
    """Independent white-noise proxies and an independent white target."""
    rng = np.random.default_rng(seed)
    axis = YearAxis(start_year, n)
    X = rng.standard_normal((n, p))
    net = ProxyNetwork(axis, _ids("w", p), X, np.ones(X.shape, dtype=bool))
    return net, TargetSeries(axis, rng.standard_normal(n))


def calibration_network(seed: int = 0, q: int = 5, calib: int = 100, backcast: int = 1000,
                        adversarial: bool = False, start_year: int = 1000):
    """Proxies linear in the target with independent Gaussian noise.

    Every year draws the target from N(0, 1) and each proxy as
    ``a_j + b_j * target + e_j``. The last ``calib`` years are the
    calibration (instrumental) period. With ``adversarial`` the second half
    of the proxies respond with the opposite sign before that period, so
    the backcast rows pull toward two different target values.
    Returns ``(net, target, truth)``.
    """
    rng = np.random.default_rng(seed)
    n = backcast + calib
    a = rng.normal(0.0, 1.0, q)
    b = rng.uniform(0.5, 1.5, q)
    sd = rng.uniform(0.3, 0.8, q)
    xi = rng.standard_normal(n)
    resp = np.tile(b, (n, 1))
    if adversarial:
        resp[:backcast, q // 2:] *= -1.0
    X = a + resp * xi[:, None] + sd * rng.standard_normal((n, q))
    axis = YearAxis(start_year, n)
    net = ProxyNetwork(axis, _ids("c", q), X, np.ones(X.shape, dtype=bool))
    target = TargetSeries(YearAxis(start_year + backcast, calib), xi[backcast:])
    return net, target, TargetSeries(axis, xi)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python3 -m rebench.synthetic", description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=("weak-signal", "block", "white", "calibration"))
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--adversarial", action="store_true",
                        help="calibration only: flip half the proxy responses before calibration")
    args = parser.parse_args(argv)
    if args.kind == "weak-signal":
        net, target, _ = weak_signal_network(args.seed)
    elif args.kind == "block":
        net, target, _ = block_network(args.seed)
    elif args.kind == "calibration":
        net, target, _ = calibration_network(args.seed, q=10 if args.adversarial else 5,
                                             adversarial=args.adversarial)
    else:
        net, target = white_network(args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_network(net, os.path.join(args.out, "proxies.csv"))
    write_target(target, os.path.join(args.out, "target.csv"))
    print(f"wrote {net.n_proxies} proxies x {net.axis.length} years to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
