"""Filter, smoother, classification, durations, and the regime report."""

import numpy as np
import pytest

from conftest import enumerate_posterior, full_spec, ols_var, random_params
from msvar.errors import NumericalError
from msvar.inference import (
    classify,
    duration_pmf,
    expected_duration,
    filter_smooth,
    hamilton_filter,
    regime_report,
    smooth,
    write_probabilities_csv,
)
from msvar.model import log_density_table, log_likelihood, make_params
from msvar.simulate import simulate


def test_single_regime_filter(rng):
    params = random_params(rng, 1, 2, 1)
    data = simulate(params, 60, seed=10).series.data
    probs = hamilton_filter(data, params)
    np.testing.assert_array_equal(probs.filtered, 1.0)
    np.testing.assert_array_equal(probs.predicted, 1.0)
    _, _, want = ols_var(data, 1)
    # likelihood at the OLS parameters differs; compare against the model op
    assert probs.log_likelihood == pytest.approx(log_likelihood(data, params), abs=0.0)


def test_absorbing_start_stays_put(rng):
    base = random_params(rng, 2, 1, 0)
    params = make_params(
        intercepts=base.intercepts,
        coeffs=base.coeffs,
        covariances=base.covariances,
        transition=np.eye(2),
        initial_dist=[1.0, 0.0],
    )
    data = simulate(base, 40, seed=11).series.data
    probs = hamilton_filter(data, params)
    np.testing.assert_allclose(probs.filtered[:, 0], 1.0)
    np.testing.assert_allclose(probs.predicted[:, 0], 1.0)
    # degenerate start: the filtered path is constant, so smoothing changes nothing
    out = smooth(probs, params)
    np.testing.assert_allclose(out.smoothed, probs.filtered, atol=1e-12)


def test_filter_and_smoother_match_enumeration(rng):
    for trial in range(5):
        M = int(rng.integers(2, 4))
        N = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        params = random_params(rng, M, N, p)
        data = simulate(params, 8, seed=100 + trial).series.data
        spec = full_spec(params)
        table = log_density_table(data, params, spec)
        want_ll, want_marg, want_pair = enumerate_posterior(
            table, params.transition, params.initial_dist
        )
        probs = filter_smooth(data, params, spec)
        assert probs.log_likelihood == pytest.approx(want_ll, abs=1e-9)
        np.testing.assert_allclose(probs.smoothed, want_marg, atol=1e-9)
        np.testing.assert_allclose(probs.pairwise_smoothed, want_pair, atol=1e-9)


def test_filtered_marginals_match_enumeration_prefixes(rng):
    # filtered row t is the posterior of s_t given data up to t: enumerate each prefix
    params = random_params(rng, 2, 1, 1)
    data = simulate(params, 8, seed=12).series.data
    spec = full_spec(params)
    table = log_density_table(data, params, spec)
    probs = hamilton_filter(data, params, spec)
    for t in range(table.shape[0]):
        _, marg, _ = enumerate_posterior(table[: t + 1], params.transition, params.initial_dist)
        np.testing.assert_allclose(probs.filtered[t], marg[t], atol=1e-9)


def test_probability_table_invariants(rng):
    for trial in range(5):
        params = random_params(rng, 3, 2, 1)
        data = simulate(params, 50, seed=200 + trial).series.data
        probs = filter_smooth(data, params)
        for tab in (probs.filtered, probs.predicted, probs.smoothed):
            np.testing.assert_allclose(tab.sum(axis=1), 1.0, atol=1e-10)
            assert tab.min() >= 0.0
            assert tab.max() <= 1.0 + 1e-12
        np.testing.assert_allclose(probs.smoothed[-1], probs.filtered[-1], atol=1e-12)
        # marginalizing the pairwise joints recovers both adjacent smoothed rows
        np.testing.assert_allclose(
            probs.pairwise_smoothed.sum(axis=1), probs.smoothed[1:], atol=1e-9
        )
        np.testing.assert_allclose(
            probs.pairwise_smoothed.sum(axis=2), probs.smoothed[:-1], atol=1e-9
        )


def test_filter_loglik_equals_model_loglik(rng):
    params = random_params(rng, 2, 2, 1)
    data = simulate(params, 100, seed=13).series.data
    assert hamilton_filter(data, params).log_likelihood == log_likelihood(data, params)


def test_identity_transition_smoother_collapses(rng):
    base = random_params(rng, 2, 1, 0)
    params = make_params(
        intercepts=base.intercepts,
        coeffs=base.coeffs,
        covariances=base.covariances,
        transition=np.eye(2),
        initial_dist=[0.4, 0.6],
    )
    data = simulate(base, 30, seed=14).series.data
    probs = hamilton_filter(data, params)
    out = smooth(probs, params)
    # with P = I the future carries no extra information beyond the last row,
    # and the recursion reduces to smoothed == filtered only at t = T; at
    # earlier t the smoother re-weights by the absorbing posterior
    np.testing.assert_allclose(out.smoothed[-1], probs.filtered[-1], atol=1e-12)
    # hand-verified collapse: with P = I, smoothed_t(i) = filt_t(i) * smo_{t+1}(i) / pred_{t+1}(i)
    for t in range(out.n_steps - 2, -1, -1):
        want = probs.filtered[t] * out.smoothed[t + 1] / probs.predicted[t + 1]
        np.testing.assert_allclose(out.smoothed[t], want, atol=1e-12)


def test_filter_underflow_raises(rng):
    params = make_params(
        intercepts=[[0.0], [100.0]],
        coeffs=np.zeros((2, 0, 1, 1)),
        covariances=[[[1e-12]], [[1.0]]],
        transition=np.eye(2),
        initial_dist=[1.0, 0.0],
    )
    data = np.full((5, 1), 100.0)
    with pytest.raises(NumericalError, match="step"):
        hamilton_filter(data, params)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def test_classify_argmax_and_ties():
    smoothed = np.array([[0.1, 0.9], [0.5, 0.5], [0.7, 0.3]])
    np.testing.assert_array_equal(classify(smoothed), [1, 0, 0])


def test_classify_monotone_transform_invariant(rng):
    smoothed = rng.dirichlet(np.ones(4), size=50)
    base = classify(smoothed)
    np.testing.assert_array_equal(classify(smoothed * 7.3), base)
    np.testing.assert_array_equal(classify(np.sqrt(smoothed)), base)


# ---------------------------------------------------------------------------
# durations
# ---------------------------------------------------------------------------


def test_expected_duration_values():
    P = np.array([[0.5, 0.5], [0.06, 0.94]])
    assert expected_duration(P, 0) == pytest.approx(2.0, rel=1e-12)
    assert expected_duration(P, 1) == pytest.approx(1.0 / 0.06, rel=1e-12)
    assert expected_duration(np.array([[0.0, 1.0], [1.0, 0.0]]), 0) == 1.0
    assert expected_duration(np.eye(2), 0) == float("inf")


def test_expected_duration_exactness(rng):
    for _ in range(50):
        p_stay = rng.uniform(0.0, 0.999999)
        P = np.array([[p_stay, 1 - p_stay], [0.5, 0.5]])
        got = expected_duration(P, 0)
        want = 1.0 / (1.0 - p_stay)
        assert abs(got - want) <= 1e-12 * want


def test_duration_pmf_geometric():
    P = np.array([[0.8, 0.2], [0.3, 0.7]])
    total = sum(duration_pmf(P, 0, k) for k in range(1, 200))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert duration_pmf(P, 0, 1) == pytest.approx(0.2)
    assert duration_pmf(P, 0, 3) == pytest.approx(0.8**2 * 0.2)
    mean = sum(k * duration_pmf(P, 0, k) for k in range(1, 500))
    assert mean == pytest.approx(expected_duration(P, 0), rel=1e-10)


# ---------------------------------------------------------------------------
# regime report
# ---------------------------------------------------------------------------


def test_regime_report_hand_counted():
    P = np.array([[0.9, 0.1], [0.2, 0.8]])
    report = regime_report(np.array([0, 0, 1, 0]), P)
    assert report.occurrences.tolist() == [2, 1]
    assert report.observations.tolist() == [3, 1]
    assert report.percentages[0] == pytest.approx(75.0)
    assert report.percentages.sum() == pytest.approx(100.0)


def test_regime_report_single_regime():
    report = regime_report(np.zeros(10, dtype=int), np.array([[0.95, 0.05], [0.5, 0.5]]))
    assert report.occurrences.tolist() == [1, 0]
    assert report.percentages[0] == pytest.approx(100.0)


def test_regime_report_four_regime_format():
    P = np.full((4, 4), 0.1) + 0.6 * np.eye(4)
    labels = np.array([0] * 276 + [1] * 42 + [2] * 34 + [3] * 60)
    report = regime_report(labels, P, sample_interval=1.0)
    d = report.to_dict()
    assert len(d["regimes"]) == 4
    for row in d["regimes"]:
        assert set(row) >= {
            "regime",
            "expected_duration_steps",
            "occurrence",
            "observations",
            "percentage",
            "expected_duration_seconds",
        }
    assert d["regimes"][0]["observations"] == 276
    assert sum(r["observations"] for r in d["regimes"]) == report.n_steps
    assert sum(r["percentage"] for r in d["regimes"]) == pytest.approx(100.0)


def test_probabilities_csv_layout(tmp_path, rng):
    params = random_params(rng, 2, 1, 1)
    data = simulate(params, 20, seed=15).series.data
    probs = filter_smooth(data, params)
    path = tmp_path / "probs.csv"
    write_probabilities_csv(path, probs)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,regime,xi_1,xi_2"
    assert len(lines) == probs.n_steps + 1
    first = lines[1].split(",")
    assert int(first[0]) == probs.offset
