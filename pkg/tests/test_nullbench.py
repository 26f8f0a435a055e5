import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rebench import nullbench
from rebench.errors import ConfigError, ConvergenceError, DataError
from rebench.noise import NullModelSpec, RngSeed, fit_network_ar1, gen_pseudo_network
from rebench.nullbench import (
    NullEnsemble,
    aggregate_re,
    compare_null_families,
    percentile,
    proxy_re,
    run_null_ensemble,
    verdict,
)
from rebench.reconstruct import MethodSpec
from rebench.skill import holdout_sweep

from conftest import make_network, make_target

WHITE = NullModelSpec("white")
LASSO = MethodSpec("lasso", 0.1)


@pytest.fixture
def white_problem(rng):
    n, p = 60, 4
    return make_network(rng.standard_normal((n, p))), make_target(rng.standard_normal(n))


class TestPercentile:
    def test_examples(self):
        v = np.arange(1.0, 101.0)
        assert percentile(v, 0.95) == 95.0
        assert percentile(v, 0.99) == 99.0
        assert percentile(v[::-1], 0.5) == 50.0
        for p in (0.01, 0.5, 0.999):
            assert percentile([7.0], p) == 7.0

    def test_999_values(self):
        v = np.random.default_rng(3).permutation(np.arange(1.0, 1000.0))
        # ceil(0.95 * 999) = 950, ceil(0.99 * 999) = 990
        assert percentile(v, 0.95) == 950.0
        assert percentile(v, 0.99) == 990.0

    def test_errors(self):
        with pytest.raises(DataError):
            percentile([], 0.5)
        with pytest.raises(ConfigError):
            percentile([1.0], 1.0)

    @given(st.lists(st.floats(-10, 1), min_size=1, max_size=200), st.floats(0.01, 0.98))
    def test_monotone_and_observed(self, values, p):
        lo, hi = percentile(values, p), percentile(values, min(p + 0.01, 0.99))
        assert lo <= hi
        assert lo in values
        # conservative: at least a fraction p of the sample is at or below it
        assert np.mean(np.asarray(values) <= lo) >= p - 1e-12


class TestVerdict:
    def _ensemble(self, values):
        v = np.asarray(values, dtype=float)
        pct = {"p50": percentile(v, 0.5), "p95": percentile(v, 0.95), "p99": percentile(v, 0.99)}
        return NullEnsemble(WHITE, "m", v.size, "mean_over_splits", 30, 0, v, pct)

    def test_examples(self):
        ens = self._ensemble([0.2] * 5)
        assert verdict(0.9, ens).significant95
        tie = verdict(0.2, ens)
        assert not tie.significant95 and not tie.significant99
        ens2 = self._ensemble([0.0] * 95 + [0.1] * 5)
        assert ens2.percentiles["p95"] == 0.0 and ens2.percentiles["p99"] == 0.1
        v = verdict(-0.5, ens2)
        assert not v.significant95 and not v.significant99

    @given(st.floats(-2, 1), st.lists(st.floats(-2, 1), min_size=1, max_size=50))
    def test_strict_exceedance(self, re_proxy, values):
        ens = self._ensemble(values)
        v = verdict(re_proxy, ens)
        assert v.significant95 == (re_proxy > ens.percentiles["p95"])
        assert v.significant99 == (re_proxy > ens.percentiles["p99"])
        assert ens.percentiles["p95"] <= ens.percentiles["p99"]


class TestAggregate:
    def test_modes(self):
        re = np.array([[0.1, 0.2, 0.3, np.nan], [0.0, 0.0, 0.0, 0.4]])
        endpoint = np.array([True, False, False, True])
        np.testing.assert_allclose(aggregate_re(re, endpoint, "mean_over_splits"), [0.2, 0.1])
        np.testing.assert_allclose(aggregate_re(re, endpoint, "endpoint_only"), [0.1, 0.2])
        assert aggregate_re(re, endpoint, "per_split") is re
        with pytest.raises(ConfigError):
            aggregate_re(re, endpoint, "median")


class TestEnsemble:
    def test_single_trial(self, white_problem):
        net, t = white_problem
        ens = run_null_ensemble(net, t, LASSO, WHITE, trials=1, holdout_length=15, seed=4)
        assert ens.re_values.shape == (1,)
        assert ens.percentiles["p50"] == ens.percentiles["p95"] == ens.percentiles["p99"] == ens.re_values[0]

    def test_deterministic(self, white_problem):
        net, t = white_problem
        a = run_null_ensemble(net, t, LASSO, WHITE, trials=20, holdout_length=15, seed=9)
        b = run_null_ensemble(net, t, LASSO, WHITE, trials=20, holdout_length=15, seed=9)
        assert a.to_dict() == b.to_dict()
        c = run_null_ensemble(net, t, LASSO, WHITE, trials=20, holdout_length=15, seed=10)
        assert not np.array_equal(a.re_values, c.re_values)

    def test_prefix_stable(self, white_problem):
        # trial t depends only on (seed, family, t)
        net, t = white_problem
        a = run_null_ensemble(net, t, LASSO, WHITE, trials=5, holdout_length=15, seed=2)
        b = run_null_ensemble(net, t, LASSO, WHITE, trials=12, holdout_length=15, seed=2)
        assert np.array_equal(a.re_values, b.re_values[:5])

    @pytest.mark.parametrize("spec", [WHITE, NullModelSpec("ar1_fixed", 0.5), NullModelSpec("ar1_empirical")],
                             ids=lambda s: s.label)
    def test_matches_public_sweep(self, white_problem, spec):
        """Each trial equals a holdout sweep on the public pseudo network."""
        net, t = white_problem
        ens = run_null_ensemble(net, t, LASSO, spec, trials=3, holdout_length=15, seed=11)
        params = fit_network_ar1(net) if spec.kind == "ar1_empirical" else None
        for k in range(3):
            pseudo = gen_pseudo_network(net, spec, RngSeed(11, k), params)
            res = holdout_sweep(pseudo, t, LASSO, 15)
            assert ens.re_values[k] == pytest.approx(np.mean([r.re for r in res]), rel=1e-12)

    def test_intercept_all_zero(self, white_problem):
        net, t = white_problem
        ens = run_null_ensemble(net, t, MethodSpec("intercept"), WHITE, trials=10, holdout_length=15)
        assert np.all(ens.re_values == 0.0)
        assert set(ens.percentiles.values()) == {0.0}

    def test_per_split_and_endpoint(self, white_problem):
        net, t = white_problem
        per = run_null_ensemble(net, t, LASSO, WHITE, trials=4, holdout_length=15, seed=1, aggregation="per_split")
        mean = run_null_ensemble(net, t, LASSO, WHITE, trials=4, holdout_length=15, seed=1)
        end = run_null_ensemble(net, t, LASSO, WHITE, trials=4, holdout_length=15, seed=1, aggregation="endpoint_only")
        assert per.re_values.shape == (4, 60 - 15 + 1)
        np.testing.assert_allclose(per.re_values.mean(axis=1), mean.re_values, rtol=1e-12)
        np.testing.assert_allclose(per.re_values[:, [0, -1]].mean(axis=1), end.re_values, rtol=1e-12)
        assert np.all(per.re_values <= 1.0)

    def test_n_jobs_invariant(self, white_problem):
        net, t = white_problem
        a = run_null_ensemble(net, t, LASSO, WHITE, trials=6, holdout_length=15, seed=5)
        b = run_null_ensemble(net, t, LASSO, WHITE, trials=6, holdout_length=15, seed=5, n_jobs=2)
        assert np.array_equal(a.re_values, b.re_values)

    def test_bad_arguments(self, white_problem):
        net, t = white_problem
        with pytest.raises(ConfigError):
            run_null_ensemble(net, t, LASSO, WHITE, trials=0)
        with pytest.raises(ConfigError):
            run_null_ensemble(net, t, LASSO, WHITE, trials=2, aggregation="median")

    def test_trial_index_in_errors(self, white_problem, monkeypatch):
        net, t = white_problem
        real = nullbench.sweep_matrix
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            if len(calls) == 3:
                raise ConvergenceError("no convergence", split=1921)
            return real(*args, **kwargs)

        monkeypatch.setattr(nullbench, "sweep_matrix", flaky)
        with pytest.raises(ConvergenceError) as info:
            run_null_ensemble(net, t, LASSO, WHITE, trials=5, holdout_length=15)
        assert "trial=2" in str(info.value) and "split=1921" in str(info.value)


class TestCompare:
    def test_identical_specs(self, white_problem):
        net, t = white_problem
        cmp = compare_null_families(net, t, LASSO, [WHITE, WHITE], trials=10, holdout_length=15, seed=3)
        a, b = cmp.boxplots()
        assert a == b

    def test_white_vs_ar1_zero(self, white_problem):
        net, t = white_problem
        cmp = compare_null_families(net, t, LASSO, [WHITE, NullModelSpec("ar1_fixed", 0.0)],
                                    trials=500, holdout_length=15, seed=8)
        w, a = cmp.ensembles
        assert not np.array_equal(w.re_values, a.re_values)  # independent streams
        assert stats.ks_2samp(w.re_values, a.re_values).pvalue > 0.01

    def test_report(self, white_problem):
        net, t = white_problem
        cmp = compare_null_families(net, t, LASSO, [WHITE, NullModelSpec("ar1_empirical")],
                                    trials=8, holdout_length=15, seed=3)
        rep = cmp.to_report()
        for key in ("method", "null_family", "trials", "aggregation", "percentiles", "re_proxy",
                    "verdict", "per_family_boxplots", "seed"):
            assert key in rep
        assert rep["null_family"] == ["white", "ar1_empirical"]
        assert rep["re_proxy"] == proxy_re(net, t, LASSO, 15)
        for label, v in rep["verdict"].items():
            assert v["significant95"] == (rep["re_proxy"] > rep["percentiles"][label]["p95"])

    def test_needs_two_families(self, white_problem):
        net, t = white_problem
        with pytest.raises(ConfigError):
            compare_null_families(net, t, LASSO, [WHITE], trials=2)
