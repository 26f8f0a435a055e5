"""The compiled kernels and the numpy fallback must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rebench import _pykernels, kernels

BACKENDS = kernels.available_backends()
compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def random_gram(rng, n, p):
    X = rng.standard_normal((n, p))
    X = (X - X.mean(0)) / X.std(0, ddof=1)
    y = rng.standard_normal(n)
    return X.T @ X / n, X.T @ y / n


@compiled
@given(seed=st.integers(0, 2**32), p=st.integers(1, 12), lam=st.floats(0.0, 0.5))
def test_cd_gram_agrees(seed, p, lam):
    rng = np.random.default_rng(seed)
    G, c = random_gram(rng, 3 * p + 5, p)
    b1, s1 = BACKENDS["cython"].lasso_cd_gram(G, c, lam, None)
    b2, s2 = _pykernels.lasso_cd_gram(G, c, lam, None)
    assert s1 == s2
    np.testing.assert_allclose(b1, b2, rtol=0, atol=1e-12)


@compiled
def test_path_agrees(rng):
    G, c = random_gram(rng, 50, 8)
    lams = np.geomspace(0.5, 1e-3, 12)
    c1, s1 = BACKENDS["cython"].lasso_path_gram(G, c, lams)
    c2, s2 = _pykernels.lasso_path_gram(G, c, lams)
    assert np.array_equal(s1, s2)
    np.testing.assert_allclose(c1, c2, atol=1e-12)


@compiled
@given(seed=st.integers(0, 2**32), p=st.integers(1, 8), L=st.integers(1, 20), lam=st.floats(0.0, 0.3))
def test_holdout_sweep_agrees(seed, p, L, lam):
    rng = np.random.default_rng(seed)
    N = L + 3 * p + 10
    X = rng.standard_normal((N, p)) * rng.uniform(0.1, 10, p) + rng.uniform(-5, 5, p)
    y = 3.0 + rng.standard_normal(N)
    m1, i1, st1 = BACKENDS["cython"].lasso_holdout_sweep(X, y, L, lam)
    m2, i2, st2 = _pykernels.lasso_holdout_sweep(X, y, L, lam)
    assert np.array_equal(st1, st2)
    np.testing.assert_allclose(m1, m2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(i1, i2, rtol=1e-12, atol=1e-14)


@compiled
def test_sweep_flags_flat_column():
    X = np.random.default_rng(0).standard_normal((40, 3))
    X[:25, 1] = 2.0  # flat once the last 15 rows are held out
    for impl in BACKENDS.values():
        status = impl.lasso_holdout_sweep(X, np.arange(40.0), 15, 0.1)[2]
        assert status[-1] == kernels.STATUS_ZERO_VARIANCE
        assert status[0] >= 1


@compiled
def test_ar1_filter_agrees(rng):
    z = rng.standard_normal((200, 5))
    phi = np.array([0.0, 0.5, -0.5, 0.9, 0.99])
    np.testing.assert_allclose(BACKENDS["cython"].ar1_filter(z, phi), _pykernels.ar1_filter(z, phi),
                               rtol=1e-12, atol=1e-12)


def test_ar1_filter_recursion():
    z = np.array([[1.0], [2.0], [3.0]])
    for impl in BACKENDS.values():
        assert impl.ar1_filter(z, np.array([0.5]))[:, 0].tolist() == [1.0, 2.5, 4.25]


@compiled
def test_standardize_rows_agrees(rng):
    x = rng.standard_normal((4, 77)) * 3 + 1
    a = BACKENDS["cython"].standardize_rows(x.copy())
    b = _pykernels.standardize_rows(x.copy())
    np.testing.assert_allclose(a, b, atol=1e-13)


@compiled
def test_philox_fill_bit_identical():
    key = np.array([77, 5], dtype=np.uint64)
    a = BACKENDS["cython"].philox_normals(np.random.Philox(key=key), 123, np.empty((6, 41)))
    b = _pykernels.philox_normals(np.random.Philox(key=key), 123, np.empty((6, 41)))
    assert np.array_equal(a, b)
    assert kernels.philox_normals is BACKENDS["cython"].philox_normals


def test_cd_reports_non_convergence():
    G = np.array([[1.0, 0.999], [0.999, 1.0]])
    c = np.array([1.0, -1.0])
    for impl in BACKENDS.values():
        _, sweeps = impl.lasso_cd_gram(G, c, 0.0, None, 1e-12, 3)
        assert sweeps == -1


def test_fallback_selected_by_env():
    env = dict(os.environ, REBENCH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from rebench import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
