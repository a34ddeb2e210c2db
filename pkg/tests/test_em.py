"""EM estimation: degenerate cases, M-step oracles, monotonicity, recovery."""

import numpy as np
import pytest

from conftest import best_permutation_accuracy, full_spec, ols_var, random_params
from msvar.em import EmConfig, fit_em, m_step
from msvar.errors import ConfigError, InsufficientDataError
from msvar.inference import filter_smooth
from msvar.model import (
    ModelSpec,
    RegressionMode,
    build_design,
    log_likelihood,
    make_params,
    permute_regimes,
    validate,
)
from msvar.simulate import simulate


def _two_regime_params(sep=3.0):
    """Well-separated two-regime bivariate VAR(1)."""
    return make_params(
        intercepts=[[0.0, 0.0], [sep, -sep]],
        coeffs=[[[[0.5, 0.1], [0.0, 0.3]]], [[[-0.4, 0.0], [0.2, 0.6]]]],
        covariances=[np.eye(2) * 0.3, [[1.5, 0.4], [0.4, 1.0]]],
        transition=[[0.95, 0.05], [0.10, 0.90]],
    )


def test_single_regime_reduces_to_ols(rng):
    params = random_params(rng, 1, 2, 1)
    series = simulate(params, 300, seed=21).series
    spec = ModelSpec(n_channels=2, n_regimes=1, lag=1)
    fit = fit_em(series, spec, EmConfig(seed=0, n_restarts=1))
    beta, cov, ll = ols_var(series.data, 1)
    np.testing.assert_allclose(fit.params.intercepts[0], beta[0], atol=1e-8)
    np.testing.assert_allclose(fit.params.coeffs[0, 0], beta[1:].T, atol=1e-8)
    np.testing.assert_allclose(fit.params.covariances[0], cov, atol=1e-8)
    assert fit.log_likelihood == pytest.approx(ll, abs=1e-6)


# ---------------------------------------------------------------------------
# m_step unit behavior
# ---------------------------------------------------------------------------


def test_m_step_all_ones_weights_is_ols(rng):
    params = random_params(rng, 1, 2, 1)
    data = simulate(params, 120, seed=22).series.data
    spec = full_spec(params)
    T_eff = len(data) - 1
    smoothed = np.ones((T_eff, 1))
    pairwise = np.ones((T_eff - 1, 1, 1))
    out = m_step(data, smoothed, pairwise, spec)
    beta, cov, _ = ols_var(data, 1)
    np.testing.assert_allclose(out.intercepts[0], beta[0], atol=1e-10)
    np.testing.assert_allclose(out.coeffs[0, 0], beta[1:].T, atol=1e-10)
    np.testing.assert_allclose(out.covariances[0], cov, atol=1e-10)


def test_m_step_hard_responsibilities_partition_ols(rng):
    params = _two_regime_params()
    sim = simulate(params, 400, seed=23)
    data = sim.series.data
    spec = full_spec(params)
    states = sim.true_states[1:]
    T_eff = len(states)
    smoothed = np.zeros((T_eff, 2))
    smoothed[np.arange(T_eff), states] = 1.0
    pairwise = smoothed[:-1, :, None] * smoothed[1:, None, :]
    out = m_step(data, smoothed, pairwise, spec)

    Y, X = build_design(data, spec)
    for m in range(2):
        rows = states == m
        beta = np.linalg.lstsq(X[rows], Y[rows], rcond=None)[0]
        np.testing.assert_allclose(out.intercepts[m], beta[0], atol=1e-8)
        np.testing.assert_allclose(out.coeffs[m, 0], beta[1:].T, atol=1e-8)
    # transition estimate equals empirical transition frequencies
    counts = np.zeros((2, 2))
    np.add.at(counts, (states[:-1], states[1:]), 1.0)
    np.testing.assert_allclose(
        out.transition, counts / counts.sum(axis=1, keepdims=True), atol=1e-12
    )


def test_m_step_matches_normal_equations_oracle(rng):
    """Weighted LS against an elementwise normal-equations construction."""
    params = _two_regime_params()
    data = simulate(params, 60, seed=24).series.data
    spec = full_spec(params)
    Y, X = build_design(data, spec)
    T_eff = len(Y)
    smoothed = rng.dirichlet(np.ones(2), size=T_eff)
    pairwise = smoothed[:-1, :, None] * smoothed[1:, None, :]
    out = m_step(data, smoothed, pairwise, spec)

    K = X.shape[1]
    for m in range(2):
        A = np.zeros((K, K))
        b = np.zeros((K, 2))
        for t in range(T_eff):
            w = smoothed[t, m]
            for i in range(K):
                for j in range(K):
                    A[i, j] += w * X[t, i] * X[t, j]
                for c in range(2):
                    b[i, c] += w * X[t, i] * Y[t, c]
        beta = np.linalg.solve(A, b)
        np.testing.assert_allclose(out.intercepts[m], beta[0], atol=1e-9)
        np.testing.assert_allclose(out.coeffs[m, 0], beta[1:].T, atol=1e-9)


def test_m_step_shape_guard(rng):
    params = _two_regime_params()
    data = simulate(params, 50, seed=25).series.data
    with pytest.raises(ConfigError):
        m_step(data, np.ones((10, 2)), np.ones((9, 2, 2)), full_spec(params))


def test_m_step_degenerate_regime_pools_covariance(rng):
    params = _two_regime_params()
    data = simulate(params, 100, seed=26).series.data
    spec = full_spec(params)
    T_eff = len(data) - 1
    smoothed = np.column_stack([np.full(T_eff, 1.0 - 1e-9), np.full(T_eff, 1e-9)])
    pairwise = smoothed[:-1, :, None] * smoothed[1:, None, :]
    with pytest.warns(UserWarning, match="pooled"):
        out = m_step(data, smoothed, pairwise, spec)
    assert not validate(out, spec)


# ---------------------------------------------------------------------------
# fit_em behavior
# ---------------------------------------------------------------------------


def test_monotone_loglik_and_fixed_point(rng):
    params = _two_regime_params()
    series = simulate(params, 600, seed=27).series
    spec = full_spec(params)
    cfg = EmConfig(seed=3, n_restarts=2, max_iters=300)
    fit = fit_em(series, spec, cfg)
    lls = np.asarray(fit.trace.log_likelihoods)
    assert np.all(np.diff(lls) >= -1e-8)
    assert fit.converged
    # fixed point: one more M+E round moves the likelihood less than rel_tol
    probs = filter_smooth(series.data, fit.params, spec)
    refined = m_step(
        series.data, probs.smoothed, probs.pairwise_smoothed, spec, prev_params=fit.params
    )
    ll2 = log_likelihood(series.data, refined, spec)
    assert abs(ll2 - fit.log_likelihood) / max(1.0, abs(fit.log_likelihood)) < cfg.rel_tol * 10


def test_fit_deterministic_under_seed(rng):
    params = _two_regime_params()
    series = simulate(params, 300, seed=28).series
    spec = full_spec(params)
    cfg = EmConfig(seed=11, n_restarts=3, max_iters=80)
    a = fit_em(series, spec, cfg)
    b = fit_em(series, spec, cfg)
    assert a.trace.log_likelihoods == b.trace.log_likelihoods
    np.testing.assert_array_equal(a.params.transition, b.params.transition)
    np.testing.assert_array_equal(a.classification, b.classification)


def test_label_permutation_equivalence(rng):
    """EM driven from permuted initial responsibilities ties in likelihood."""
    params = _two_regime_params()
    series = simulate(params, 300, seed=29).series
    spec = full_spec(params)
    data = series.data
    T_eff = len(data) - 1
    resp = rng.dirichlet(np.ones(2), size=T_eff)

    def run(resp0):
        pairwise = resp0[:-1, :, None] * resp0[1:, None, :]
        current = m_step(data, resp0, pairwise, spec)
        ll_prev = -np.inf
        for _ in range(200):
            probs = filter_smooth(data, current, spec)
            if abs(probs.log_likelihood - ll_prev) / max(1.0, abs(ll_prev)) < 1e-9:
                break
            ll_prev = probs.log_likelihood
            current = m_step(
                data, probs.smoothed, probs.pairwise_smoothed, spec, prev_params=current
            )
        return probs.log_likelihood

    ll_a = run(resp)
    ll_b = run(resp[:, ::-1].copy())
    assert ll_a == pytest.approx(ll_b, abs=1e-6)


def test_recovery_two_regimes(rng):
    truth = _two_regime_params()
    sim = simulate(truth, 2000, seed=30)
    spec = ModelSpec(n_channels=2, n_regimes=2, lag=1)
    fit = fit_em(sim.series, spec, EmConfig(seed=5, n_restarts=5))
    assert not validate(fit.params, spec)
    np.testing.assert_allclose(fit.params.transition, truth.transition, atol=0.05)
    np.testing.assert_allclose(fit.params.coeffs, truth.coeffs, atol=0.1)
    acc = best_permutation_accuracy(fit.classification, sim.true_states[1:], 2)
    assert acc >= 0.9


def test_insufficient_data(rng):
    spec = ModelSpec(n_channels=2, n_regimes=3, lag=2)
    with pytest.raises(InsufficientDataError):
        fit_em(np.zeros((12, 2)) + rng.normal(size=(12, 2)), spec, EmConfig(seed=0))


def test_regimes_sorted_by_residual_scale(rng):
    truth = _two_regime_params()
    sim = simulate(truth, 1500, seed=31)
    fit = fit_em(sim.series, ModelSpec(2, 2, 1), EmConfig(seed=6, n_restarts=3))
    scales = np.trace(fit.params.covariances, axis1=1, axis2=2)
    assert np.all(np.diff(scales) >= 0)


def test_nonconvergence_flagged(rng):
    truth = _two_regime_params()
    series = simulate(truth, 400, seed=32).series
    fit = fit_em(series, ModelSpec(2, 2, 1), EmConfig(seed=7, n_restarts=1, max_iters=2))
    assert not fit.converged
    assert any("converge" in w for w in fit.warnings)


# ---------------------------------------------------------------------------
# restricted and shared-parameter specs (general M-step path)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "spec_kw",
    [
        {"switch_intercept": True, "switch_coeffs": False, "switch_cov": True},
        {"switch_intercept": False, "switch_coeffs": False, "switch_cov": True},
        {"switch_intercept": True, "switch_coeffs": True, "switch_cov": False},
        {"diagonal_var": True},
    ],
)
def test_restricted_specs_monotone_and_valid(rng, spec_kw):
    truth = _two_regime_params()
    series = simulate(truth, 500, seed=33).series
    spec = ModelSpec(n_channels=2, n_regimes=2, lag=1, **spec_kw)
    fit = fit_em(series, spec, EmConfig(seed=8, n_restarts=2, max_iters=150))
    lls = np.asarray(fit.trace.log_likelihoods)
    assert np.all(np.diff(lls) >= -1e-8)
    assert not validate(fit.params, spec)
    if spec_kw.get("switch_coeffs") is False:
        np.testing.assert_array_equal(fit.params.coeffs[0], fit.params.coeffs[1])
    if spec_kw.get("switch_intercept") is False:
        np.testing.assert_array_equal(fit.params.intercepts[0], fit.params.intercepts[1])
    if spec_kw.get("switch_cov") is False:
        np.testing.assert_array_equal(fit.params.covariances[0], fit.params.covariances[1])
    if spec_kw.get("diagonal_var"):
        off = fit.params.coeffs * (1 - np.eye(2))
        np.testing.assert_array_equal(off, 0.0)


def test_switching_regression_mode(rng):
    # v[t+1] = phi . (a, dv, h)[t] + regime noise
    T = 800
    states = (rng.random(T) < 0.4).astype(int)
    # persistence
    for t in range(1, T):
        if rng.random() < 0.85:
            states[t] = states[t - 1]
    phis = np.array([[1.2, 1.5, 0.65], [-0.4, 1.26, 0.5]])
    sigmas = np.array([0.5, 1.8])
    reg = rng.normal(size=(T, 3))
    v = np.zeros(T)
    for t in range(1, T):
        s = states[t]
        v[t] = phis[s] @ reg[t - 1] + rng.normal(scale=sigmas[s])
    data = np.column_stack([v, reg])
    spec = ModelSpec(
        n_channels=4,
        n_regimes=2,
        lag=1,
        regression_mode=RegressionMode(target=0, regressors=(1, 2, 3)),
    )
    fit = fit_em(data, spec, EmConfig(seed=9, n_restarts=3))
    assert not validate(fit.params, spec)
    lls = np.asarray(fit.trace.log_likelihoods)
    assert np.all(np.diff(lls) >= -1e-8)
    est_phis = fit.params.coeffs[:, 0, 0, 1:]
    est_sig = np.sqrt(fit.params.covariances[:, 0, 0])
    order = np.argsort(est_sig)
    np.testing.assert_allclose(est_phis[order], phis, atol=0.25)
    np.testing.assert_allclose(est_sig[order], sigmas, atol=0.3)
    acc = best_permutation_accuracy(fit.classification, states[1:], 2)
    assert acc > 0.8
