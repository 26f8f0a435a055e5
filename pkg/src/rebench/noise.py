"""AR(1) fitting and pseudoproxy generation.

Random streams
--------------
Every pseudoproxy column is drawn from its own Philox4x64-10 stream
(numpy's ``Philox`` bit generator) fed to numpy's ``Generator``:

* key = ``(seed, family_tag)`` where ``family_tag`` is the first 8 bytes
  (little endian) of ``blake2b(label, digest_size=8)`` of the null family
  label (``"white"``, ``"ar1_fixed(0.25)"``, ``"ar1_empirical"``);
* counter starts at ``(0, 0, column_index, trial_index)``.

Philox is counter based, so distinct ``(column_index, trial_index)`` pairs
own disjoint blocks of 2**128 counter values and never overlap. A trial is
therefore a pure function of ``(seed, family, trial_index, column_index)``
regardless of how trials are scheduled. Standard normals come from
``Generator.standard_normal`` (ziggurat).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .data import ProxyNetwork
from .errors import ConfigError, DataError, NumericError, ZeroVarianceError

PHI_CLAMP = 0.99
NULL_KINDS = ("white", "ar1_fixed", "ar1_empirical")
_UINT64 = 2**64


@dataclass(frozen=True)
class Ar1Params:
    phi: float
    sigma: float = 1.0

    def __post_init__(self):
        if not (-1.0 < self.phi < 1.0):
            raise NumericError(f"AR1 coefficient must lie in (-1, 1), got {self.phi}")
        if not self.sigma > 0.0:
            raise NumericError(f"AR1 innovation sd must be positive, got {self.sigma}")

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (1.0 - self.phi**2)


@dataclass(frozen=True)
class NullModelSpec:
    kind: str
    fixed_phi: Optional[float] = None

    def __post_init__(self):
        if self.kind not in NULL_KINDS:
            raise ConfigError(f"unknown null family {self.kind!r}; expected one of {NULL_KINDS}")
        if self.kind == "ar1_fixed":
            if self.fixed_phi is None:
                raise ConfigError("ar1_fixed needs fixed_phi")
            if not (-1.0 < self.fixed_phi < 1.0):
                raise ConfigError(f"fixed_phi must lie in (-1, 1), got {self.fixed_phi}")
        elif self.fixed_phi is not None:
            raise ConfigError(f"fixed_phi only applies to ar1_fixed, not {self.kind}")

    @property
    def label(self) -> str:
        if self.kind == "ar1_fixed":
            return f"ar1_fixed({self.fixed_phi:g})"
        return self.kind

    @classmethod
    def parse(cls, text: str, fixed_phi: Optional[float] = None) -> "NullModelSpec":
        """Parse ``white``, ``ar1_empirical``, ``ar1_fixed`` or ``ar1_fixed:0.25``."""
        text = text.strip()
        if ":" in text:
            kind, _, value = text.partition(":")
            try:
                fixed_phi = float(value)
            except ValueError:
                raise ConfigError(f"bad fixed phi in {text!r}") from None
            return cls(kind.strip(), fixed_phi)
        if text == "ar1_fixed":
            return cls(text, fixed_phi)
        return cls(text)


@dataclass(frozen=True)
class RngSeed:
    seed: int
    trial_index: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < _UINT64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not (0 <= self.trial_index < _UINT64):
            raise ConfigError(f"trial index must be a non-negative 64-bit integer, got {self.trial_index}")

    def trial(self, index: int) -> "RngSeed":
        return RngSeed(self.seed, index)


def family_tag(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


class StreamFactory:
    """Cheap access to the per-(trial, column) Philox substreams of one family.

    Not thread-safe: each worker builds its own factory.
    """

    def __init__(self, seed: int, label: str):
        key = np.array([seed, family_tag(label)], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def generator(self, trial_index: int, column_index: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"][:] = (0, 0, column_index, trial_index)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen

    def normals(self, trial_index: int, column_index: int, size: int) -> np.ndarray:
        return self.generator(trial_index, column_index).standard_normal(size)

    def fill(self, trial_index: int, out: np.ndarray) -> np.ndarray:
        """Row j of the C-contiguous ``out`` gets ``normals(trial_index, j, ncol)``."""
        return kernels.philox_normals(self._bitgen, trial_index, out)


# ---------------------------------------------------------------------------
# Fitting


def longest_run(available: np.ndarray) -> slice:
    """Slice of the longest contiguous run of True values (first one on ties)."""
    available = np.asarray(available, dtype=bool)
    best_start, best_len = 0, 0
    start = None
    for i, ok in enumerate(np.append(available, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best_len:
                best_start, best_len = start, i - start
            start = None
    return slice(best_start, best_start + best_len)


def fit_ar1(series, available=None) -> Ar1Params:
    """Lag-1 autocorrelation fit.

    ``phi`` is the centered lag-1 sample autocorrelation (denominator the
    full sum of squares), clamped to [-0.99, 0.99]; ``sigma`` is the sample
    sd of the residuals ``x[t] - phi * x[t-1]`` of the centered series. With
    an availability mask only the longest contiguous available run is used.
    """
    x = np.asarray(series, dtype=float)
    if available is not None:
        x = x[longest_run(available)]
    if x.size < 3:
        raise DataError(f"AR1 fit needs at least 3 values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("AR1 fit given non-finite values")
    d = x - x.mean()
    ss = float(d @ d)
    if ss <= 1e-24 * max(1.0, float(x @ x)):
        raise ZeroVarianceError("AR1 fit on a zero-variance series")
    phi = float(d[1:] @ d[:-1]) / ss
    phi = min(max(phi, -PHI_CLAMP), PHI_CLAMP)
    resid = d[1:] - phi * d[:-1]
    sigma = float(np.std(resid, ddof=1))
    if not sigma > 0.0:
        raise NumericError("AR1 residuals have zero variance")
    return Ar1Params(phi, sigma)


def fit_network_ar1(net: ProxyNetwork) -> list:
    """Per-column AR1 fits on each column's longest available run."""
    params = []
    for j, pid in enumerate(net.ids):
        try:
            params.append(fit_ar1(net.matrix[:, j], net.mask[:, j]))
        except (DataError, NumericError) as exc:
            raise exc.with_context(column=pid)
    return params


# ---------------------------------------------------------------------------
# Generation


def _standardize_rows(xt: np.ndarray) -> np.ndarray:
    """In place, on a C-contiguous (series x time) block."""
    return kernels.standardize_rows(xt)


def _standardize_columns(x: np.ndarray) -> np.ndarray:
    # reduce over contiguous rows of the transpose so a column standardizes
    # identically whether it is drawn alone or inside a network
    return _standardize_rows(np.array(x.T, order="C")).T


def _column_phis(spec: NullModelSpec, p: int, params) -> Optional[np.ndarray]:
    if spec.kind == "white":
        return None
    if spec.kind == "ar1_fixed":
        return np.full(p, float(spec.fixed_phi))
    if params is None:
        raise ConfigError("ar1_empirical generation needs fitted AR1 parameters")
    if isinstance(params, Ar1Params):
        params = [params] * p
    if len(params) != p:
        raise ConfigError(f"{len(params)} AR1 parameter sets for {p} columns")
    return np.array([pr.phi for pr in params])


def simulate_ar1(params: Ar1Params, length: int, rng: RngSeed, *, label: str = "ar1",
                 column_index: int = 0) -> np.ndarray:
    """Stationary AR1 path with innovation sd ``params.sigma`` (not standardized)."""
    if length < 1:
        raise DataError("length must be at least 1")
    streams = StreamFactory(rng.seed, label)
    z = params.sigma * streams.normals(rng.trial_index, column_index, length)[:, None]
    z[0] /= math.sqrt(1.0 - params.phi**2)
    return kernels.ar1_filter(z, np.array([params.phi]))[:, 0]


def gen_pseudoproxy(spec: NullModelSpec, params: Optional[Ar1Params], length: int,
                    rng: RngSeed, *, column_index: int = 0) -> np.ndarray:
    """One pseudoproxy of ``length`` years, standardized to mean 0 and sd 1.

    ``white`` gives iid standard normals; the AR1 kinds give a stationary AR1
    path (``ar1_fixed`` uses ``spec.fixed_phi``, ``ar1_empirical`` uses
    ``params.phi``). The draw is identical to column ``column_index`` of
    :func:`gen_pseudo_network` for the same seed and trial.
    """
    if length < 1:
        raise DataError("length must be at least 1")
    if spec.kind == "ar1_empirical" and params is None:
        raise ConfigError("ar1_empirical generation needs AR1 parameters")
    streams = StreamFactory(rng.seed, spec.label)
    if spec.kind == "white":
        x = streams.normals(rng.trial_index, column_index, length)[:, None]
    else:
        phi = spec.fixed_phi if spec.kind == "ar1_fixed" else params.phi
        x = _pseudo_column(streams, rng.trial_index, column_index, length, phi)
    return _standardize_columns(x)[:, 0]


def _pseudo_column(streams, trial_index, column_index, length, phi):
    z = streams.normals(trial_index, column_index, length)[:, None]
    z[0] /= math.sqrt(1.0 - phi * phi)
    return kernels.ar1_filter(z, np.array([phi]))


def pseudo_matrix(spec: NullModelSpec, length: int, p: int, trial_index: int,
                  streams: StreamFactory, params=None) -> np.ndarray:
    """``length x p`` standardized pseudoproxy block for one trial."""
    phis = _column_phis(spec, p, params)
    zt = streams.fill(trial_index, np.empty((p, length)))
    if phis is not None and length > 0:
        # stationary start: x0 ~ N(0, 1 / (1 - phi^2))
        zt[:, 0] /= np.sqrt(1.0 - phis * phis)
        zt = np.array(kernels.ar1_filter(zt.T, phis).T, order="C")
    return _standardize_rows(zt).T


def gen_pseudo_network(net: ProxyNetwork, spec: NullModelSpec, rng: RngSeed,
                       params=None, streams: Optional[StreamFactory] = None) -> ProxyNetwork:
    """Replace every column of ``net`` by a pseudoproxy with the same mask.

    For ``ar1_empirical`` each column uses its own fitted coefficient; pass
    ``params`` (from :func:`fit_network_ar1`) to avoid refitting per trial.
    """
    if spec.kind == "ar1_empirical" and params is None:
        params = fit_network_ar1(net)
    if streams is None:
        streams = StreamFactory(rng.seed, spec.label)
    values = pseudo_matrix(spec, net.axis.length, net.n_proxies, rng.trial_index, streams, params)
    return ProxyNetwork(net.axis, net.ids, np.where(net.mask, values, 0.0), net.mask)
