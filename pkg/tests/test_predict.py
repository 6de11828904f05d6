import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from flexreg.datagen import STUDY1_TRUTH
from flexreg.gibbs import Chain
from flexreg.mixmodel import ModelSpec, ParamState, error_variance, mixture_logpdf
from flexreg.predict import PredictiveDraws, hpd_interval, posterior_predictive, prediction_metrics

STUDY1_SPEC = ModelSpec.with_defaults(2, (2.8, 4.0), p=2)


def repeated(theta, M):
    return Chain.from_states([theta] * M, np.zeros(M))


def test_degenerate_chain_predicts_linear_predictor():
    spec = ModelSpec.with_defaults(1, (4.0,), p=2)
    theta = ParamState(np.array([1.5]), np.array([1e-12]), np.array([1.0]), np.array([[1.0]]), np.array([2.0, -1.0]))
    Xnew = np.array([[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]])
    pd = posterior_predictive(Xnew, repeated(theta, 50), spec, np.random.default_rng(0))
    np.testing.assert_allclose(pd.samples, (1.5 + Xnew @ [2.0, -1.0])[:, None] * np.ones((1, 50)), atol=1e-4)


def test_predictive_at_truth_mean_and_variance():
    M = 4 * 10**5
    pd = posterior_predictive(np.zeros((1, 2)), repeated(STUDY1_TRUTH, M), STUDY1_SPEC, np.random.default_rng(1))
    s = pd.samples[0]
    assert s.shape == (M,)
    assert s.mean() == pytest.approx(1.0, abs=4 * s.std() / math.sqrt(M))
    # the nu = 2.8 tail has no fourth moment, so compare against a generous band
    assert s.var() == pytest.approx(error_variance(STUDY1_TRUTH, STUDY1_SPEC), rel=0.1)


def test_predictive_matches_mixture_density():
    M = 2 * 10**5
    x = np.array([0.4, -0.3])
    pd = posterior_predictive(x[None, :], repeated(STUDY1_TRUTH, M), STUDY1_SPEC, np.random.default_rng(2))
    edges = np.linspace(-6, 8, 29)
    counts = np.histogram(pd.samples[0], edges)[0]
    mids = 0.5 * (edges[1:] + edges[:-1])
    dens = np.exp(mixture_logpdf(mids, np.repeat(x[None, :], len(mids), 0), STUDY1_TRUTH, STUDY1_SPEC))
    expected = dens * np.diff(edges) * M
    assert np.max(np.abs(counts - expected) / np.sqrt(expected + 1)) < 5 + 0.02 * np.sqrt(expected.max())


def test_predictive_uses_per_draw_nu():
    spec = ModelSpec.with_defaults(1, (30.0,), p=0)
    heavy = ParamState(np.zeros(1), np.ones(1), np.ones(1), np.eye(1), np.zeros(0), nu=np.array([2.5]))
    ch = repeated(heavy, 10**5)
    s = posterior_predictive(np.zeros((1, 0)), ch, spec, np.random.default_rng(3)).samples[0]
    assert stats.kstest(s, stats.t(2.5).cdf).statistic < 0.01


def test_predictive_is_deterministic_and_chunked():
    ch = repeated(STUDY1_TRUTH, 300)
    Xnew = np.random.default_rng(0).standard_normal((9000, 2))
    a = posterior_predictive(Xnew, ch, STUDY1_SPEC, np.random.default_rng(4)).samples
    b = posterior_predictive(Xnew, ch, STUDY1_SPEC, np.random.default_rng(4)).samples
    assert a.shape == (9000, 300) and np.array_equal(a, b)


def test_predictive_rejects_bad_input():
    ch = repeated(STUDY1_TRUTH, 5)
    with pytest.raises(ValueError, match="columns"):
        posterior_predictive(np.zeros((2, 3)), ch, STUDY1_SPEC, np.random.default_rng(0))
    empty = dataclasses.replace(ch, **{k: v[:0] for k, v in vars(ch).items() if isinstance(v, np.ndarray)})
    with pytest.raises(ValueError, match="empty"):
        posterior_predictive(np.zeros((2, 2)), empty, STUDY1_SPEC, np.random.default_rng(0))


# --- HPD ------------------------------------------------------------------------


def test_hpd_integer_ties_go_to_lowest_start():
    assert hpd_interval(np.arange(1, 101), 0.95) == (1, 95)


def test_hpd_standard_normal():
    lo, hi = hpd_interval(np.random.default_rng(5).standard_normal(10**5), 0.95)
    assert lo == pytest.approx(-1.96, abs=0.03) and hi == pytest.approx(1.96, abs=0.03)


def test_hpd_skewed_is_shorter_than_equal_tails():
    s = np.random.default_rng(6).exponential(size=10**5)
    lo, hi = hpd_interval(s, 0.9)
    q = np.quantile(s, [0.05, 0.95])
    assert hi - lo < q[1] - q[0] and lo < 0.01


def test_hpd_needs_twenty_samples():
    with pytest.raises(ValueError):
        hpd_interval(np.arange(19.0), 0.9)
    with pytest.raises(ValueError):
        hpd_interval(np.arange(50.0), 1.0)


@given(
    xs=st.lists(st.floats(-1e3, 1e3), min_size=20, max_size=200),
    a=st.floats(0.05, 0.99),
    b=st.floats(0.05, 0.99),
)
@settings(max_examples=60)
def test_hpd_properties(xs, a, b):
    s = np.array(xs)
    lo_a, hi_a = hpd_interval(s, a)
    lo_b, hi_b = hpd_interval(s, b)
    if a > b:
        assert hi_a - lo_a >= hi_b - lo_b
    n_in = np.sum((s >= lo_a) & (s <= hi_a))
    assert n_in >= math.ceil(a * len(s) - 1e-9)


# --- metrics --------------------------------------------------------------------


def _draws_from_points(yhat, M=40, spread=0.0):
    base = np.asarray(yhat, dtype=float)[:, None]
    return PredictiveDraws(base + spread * np.linspace(-1, 1, M)[None, :])


def test_metrics_perfect_predictions():
    y = np.array([1.0, -2.0, 3.0])
    m = prediction_metrics(y, _draws_from_points(y))
    assert (m.rmse, m.mae, m.re, m.interval_range_mean, m.interval_range_median) == (0, 0, 0, 0, 0)
    assert m.coverage == 1.0


def test_metrics_arithmetic():
    m = prediction_metrics(np.array([2.0, 4.0]), _draws_from_points([1.0, 6.0]))
    assert m.rmse == pytest.approx(math.sqrt(2.5))
    assert m.mae == pytest.approx(1.5)
    assert m.re == pytest.approx(0.5)


def test_metrics_re_excludes_zero_responses():
    m = prediction_metrics(np.array([0.0, 4.0]), _draws_from_points([1.0, 2.0]))
    assert m.re == pytest.approx(0.5)
    assert prediction_metrics(np.zeros(2), _draws_from_points([1.0, 2.0])).re is None


def test_metrics_interval_widths():
    m = prediction_metrics(np.zeros(2), _draws_from_points([0.0, 0.0], M=1001, spread=1.0), level=0.99)
    assert m.interval_range_mean == pytest.approx(1.98, abs=0.01)


def test_metrics_length_mismatch():
    with pytest.raises(ValueError):
        prediction_metrics(np.zeros(3), _draws_from_points([0.0, 1.0]))
