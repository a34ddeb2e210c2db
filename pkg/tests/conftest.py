"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's recursion code paths:
posterior quantities come from brute-force enumeration over all state paths,
densities from the dense textbook formula with explicit inverses.
"""

import itertools

import numpy as np
import pytest

from msvar.model import ModelParams, ModelSpec, make_params


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_params(rng, M, N, p, separation=1.0, stable_scale=0.9):
    """Random valid parameters with stable per-regime lag polynomials."""
    intercepts = rng.normal(scale=separation, size=(M, N))
    coeffs = rng.normal(scale=0.5, size=(M, p, N, N))
    for m in range(M):
        from msvar.simulate import companion_matrix

        probe = ModelParams(
            intercepts=intercepts,
            coeffs=coeffs,
            covariances=np.repeat(np.eye(N)[None], M, axis=0),
            transition=np.full((M, M), 1.0 / M),
            initial_dist=np.full(M, 1.0 / M),
        )
        F = companion_matrix(probe, m)
        radius = max(np.max(np.abs(np.linalg.eigvals(F))), 1e-6) if p > 0 else 0.0
        if radius >= stable_scale:
            coeffs[m] *= stable_scale / radius
    covs = np.empty((M, N, N))
    for m in range(M):
        A = rng.normal(size=(N, N + 2))
        covs[m] = A @ A.T / (N + 2) + 0.1 * np.eye(N)
    trans = rng.dirichlet(np.full(M, 2.0), size=M)
    # bias toward persistence so sequences have visible regimes
    trans = 0.5 * trans + 0.5 * np.eye(M)
    trans /= trans.sum(axis=1, keepdims=True)
    return make_params(intercepts, coeffs, covs, trans)


def full_spec(params, **kw) -> ModelSpec:
    return ModelSpec(
        n_channels=params.n_channels,
        n_regimes=params.n_regimes,
        lag=params.lag,
        **kw,
    )


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def dense_gaussian_logpdf(y, mean, cov):
    """Textbook multivariate normal log density with explicit inverse."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = len(y)
    diff = y - mean
    quad = diff @ np.linalg.inv(cov) @ diff
    return -0.5 * (n * np.log(2.0 * np.pi) + np.log(np.linalg.det(cov)) + quad)


def enumerate_posterior(table, trans, init):
    """Brute-force posterior over all M^T state paths.

    table is the (T, M) log-density table; returns (loglik, marginals,
    pairwise) where marginals is (T, M) and pairwise is (T-1, M, M).
    """
    table = np.asarray(table, dtype=float)
    trans = np.asarray(trans, dtype=float)
    init = np.asarray(init, dtype=float)
    T, M = table.shape
    paths = np.array(list(itertools.product(range(M), repeat=T)), dtype=int)
    with np.errstate(divide="ignore"):
        log_trans = np.log(trans)
        log_init = np.log(init)
    lp = log_init[paths[:, 0]] + table[np.arange(T), paths].sum(axis=1)
    for t in range(1, T):
        lp += log_trans[paths[:, t - 1], paths[:, t]]
    lp_max = lp.max()
    w = np.exp(lp - lp_max)
    total = w.sum()
    loglik = np.log(total) + lp_max
    post = w / total
    marginals = np.zeros((T, M))
    for t in range(T):
        for m in range(M):
            marginals[t, m] = post[paths[:, t] == m].sum()
    pairwise = np.zeros((T - 1, M, M))
    for t in range(T - 1):
        for i in range(M):
            for j in range(M):
                pairwise[t, i, j] = post[(paths[:, t] == i) & (paths[:, t + 1] == j)].sum()
    return float(loglik), marginals, pairwise


def ols_var(data, p):
    """Closed-form single-regime VAR fit: coefficients, covariance, loglik."""
    data = np.asarray(data, dtype=float)
    T, N = data.shape
    Y = data[p:]
    X = np.hstack([np.ones((T - p, 1))] + [data[p - l : T - l] for l in range(1, p + 1)])
    beta = np.linalg.lstsq(X, Y, rcond=None)[0]  # (K, N)
    resid = Y - X @ beta
    cov = resid.T @ resid / len(Y)
    loglik = sum(dense_gaussian_logpdf(Y[t], X[t] @ beta, cov) for t in range(len(Y)))
    return beta, cov, float(loglik)


def best_permutation_accuracy(estimated, truth, M):
    """Classification accuracy maximized over regime relabelings."""
    best = 0.0
    for perm in itertools.permutations(range(M)):
        mapped = np.asarray(perm)[estimated]
        best = max(best, float(np.mean(mapped == truth)))
    return best
