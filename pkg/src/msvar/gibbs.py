"""Bayesian estimation by Gibbs sampling.

Each sweep alternates two blocks:

* step a — parameters given the state path: transition rows from their
  Dirichlet full conditionals Dir(n_i1 + alpha, ..., n_iM + alpha) built on
  the path's transition counts, the initial distribution from
  Dir(alpha + 1{s_first}), regression coefficients from their Gaussian full
  conditional, and covariances from inverse-Wishart (matrix case) or
  gamma-on-precision (scalar case) full conditionals;
* step b — the state path given parameters, drawn jointly by
  forward-filter backward-sampling, which also yields the log likelihood
  of the current draw.

All conditionals are standard, so every draw is accepted. Kept draws are
relabeled by ascending residual scale before summarization to undo label
switching.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import invwishart

from . import _kernels
from .em import FitResult, _init_responsibilities, min_rows_per_regime
from .errors import ConfigError, InsufficientDataError, NumericalError
from .inference import filter_smooth, hamilton_filter
from .model import (
    ModelParams,
    ModelSpec,
    build_design,
    canonical_order,
    coeff_layout,
    effective_covariances,
    flatten_params,
    log_density_table,
    params_from_design,
    permute_regimes,
    target_width,
    theta_to_coeffs,
    validate,
)


@dataclass(frozen=True)
class GibbsConfig:
    n_samples: int = 5000
    burn_in: int = 1000
    thin: int = 2
    seed: Optional[int] = None
    coeff_prior_mean: float = 0.0
    coeff_prior_sd: float = 10.0
    gamma_shape: float = 2.0
    gamma_rate: float = 1.0
    dirichlet_conc: float = 1.0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_samples:
            raise ConfigError("need 0 <= burn_in < n_samples")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        for name in ("coeff_prior_sd", "gamma_shape", "gamma_rate", "dirichlet_conc"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")

    @property
    def n_kept(self) -> int:
        return (self.n_samples - self.burn_in) // self.thin


@dataclass
class PosteriorSamples:
    """Kept parameter draws plus chain diagnostics."""

    names: list[str]
    flat: np.ndarray  # (n_kept, n_params)
    draws: list[ModelParams]
    log_likelihoods: np.ndarray
    state_frequencies: np.ndarray  # (T_eff, M), relabeled
    offset: int
    acceptance_rate: float = 1.0

    @property
    def n_kept(self) -> int:
        return self.flat.shape[0]

    def mean_params(self, spec: ModelSpec) -> ModelParams:
        intercepts = np.mean([p.intercepts for p in self.draws], axis=0)
        coeffs = np.mean([p.coeffs for p in self.draws], axis=0)
        covs = np.mean([p.covariances for p in self.draws], axis=0)
        trans = np.mean([p.transition for p in self.draws], axis=0)
        pi = np.mean([p.initial_dist for p in self.draws], axis=0)
        return ModelParams(
            intercepts=intercepts,
            coeffs=coeffs,
            covariances=0.5 * (covs + np.transpose(covs, (0, 2, 1))),
            transition=trans / trans.sum(axis=1, keepdims=True),
            initial_dist=pi / pi.sum(),
        )

    def summary(self) -> dict:
        out = {}
        for j, name in enumerate(self.names):
            col = self.flat[:, j]
            out[name] = {
                "mean": float(col.mean()),
                "sd": float(col.std(ddof=1)) if len(col) > 1 else 0.0,
                "q05": float(np.quantile(col, 0.05)),
                "q50": float(np.quantile(col, 0.50)),
                "q95": float(np.quantile(col, 0.95)),
                "ess": float(effective_sample_size(col)),
                "rhat": float(split_rhat(col)),
            }
        return out

    def write_chain_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.names) + "\n")
            for row in self.flat:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# Chain diagnostics
# ---------------------------------------------------------------------------


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    c = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(c, size)
    return np.fft.irfft(f * np.conj(f))[:n] / n


def effective_sample_size(x: np.ndarray) -> float:
    """Geyer initial-positive-sequence ESS estimate for one scalar chain."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.allclose(x, x[0]):
        return float(n)
    acov = _autocovariance(x)
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    tau = 1.0
    k = 1
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        k += 2
    return float(min(max(n / tau, 1.0), n))


def split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction factor (single chain, two halves)."""
    x = np.asarray(x, dtype=float)
    half = len(x) // 2
    if half < 2:
        return float("nan")
    a, b = x[:half], x[len(x) - half :]
    w = 0.5 * (a.var(ddof=1) + b.var(ddof=1))
    bmean = half * np.var([a.mean(), b.mean()], ddof=1)
    if w <= 0:
        return 1.0
    var_plus = (half - 1) / half * w + bmean / half
    return float(np.sqrt(var_plus / w))


# ---------------------------------------------------------------------------
# Full-conditional draws
# ---------------------------------------------------------------------------


def sample_transition_rows(
    states: np.ndarray,
    n_regimes: int,
    concentration: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Draw each transition row from Dir(counts + concentration)."""
    rng = rng if rng is not None else np.random.default_rng()
    states = np.asarray(states, dtype=int)
    counts = np.zeros((n_regimes, n_regimes))
    if len(states) >= 2:
        np.add.at(counts, (states[:-1], states[1:]), 1.0)
    P = np.empty((n_regimes, n_regimes))
    for i in range(n_regimes):
        P[i] = _simplex_draw(counts[i] + concentration, rng)
    return P


def _simplex_draw(alpha, rng) -> np.ndarray:
    """Dirichlet draw with the rounding residual folded into the largest entry,
    so the row sums to 1.0 exactly."""
    row = rng.dirichlet(alpha)
    row[np.argmax(row)] += 1.0 - row.sum()
    return row


def sample_states(
    series,
    params: ModelParams,
    rng: np.random.Generator,
    spec: Optional[ModelSpec] = None,
) -> np.ndarray:
    """Joint draw of the state path by forward filtering, backward sampling."""
    probs = hamilton_filter(series, params, spec)
    uniforms = rng.random(probs.n_steps)
    return _kernels.sample_path(
        np.ascontiguousarray(probs.filtered),
        np.ascontiguousarray(params.transition),
        uniforms,
    )


def _coeff_draw(Y, X, states, spec, omegas, config, rng) -> np.ndarray:
    """Gaussian full-conditional draw of the free coefficient vector."""
    M = spec.n_regimes
    n_free, _, maps = coeff_layout(spec)
    tau2 = config.coeff_prior_sd**2
    A = np.eye(n_free) / tau2
    b = np.full(n_free, config.coeff_prior_mean / tau2)
    for m in range(M):
        rows = states == m
        if not np.any(rows):
            continue
        Xm, Ym = X[rows], Y[rows]
        Sxx = Xm.T @ Xm
        Sxy = Xm.T @ Ym
        kron = np.kron(omegas[m], Sxx)
        rhs = (omegas[m] @ Sxy.T).ravel()
        idx = maps[m]
        mask = idx >= 0
        gi = idx[mask]
        np.add.at(A, (gi[:, None], gi[None, :]), kron[np.ix_(mask, mask)])
        np.add.at(b, gi, rhs[mask])
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("coefficient full-conditional precision not PD") from exc
    mean = np.linalg.solve(A, b)
    z = rng.standard_normal(n_free)
    theta = mean + np.linalg.solve(L.T, z)
    return theta_to_coeffs(theta, spec)


def _cov_draw(Y, X, C, states, spec, config, rng) -> np.ndarray:
    M = spec.n_regimes
    Ny = Y.shape[1]
    df0 = 2.0 * config.gamma_shape + Ny - 1.0
    S0 = 2.0 * config.gamma_rate * np.eye(Ny)
    groups = range(M) if spec.switch_cov else (0,)
    covs = np.empty((M, Ny, Ny))
    for g in groups:
        if spec.switch_cov:
            rows = states == g
            resid = Y[rows] - X[rows] @ C[g].T
        else:
            resid = np.concatenate(
                [Y[states == m] - X[states == m] @ C[m].T for m in range(M)]
            )
        n = resid.shape[0]
        scatter = resid.T @ resid if n else np.zeros((Ny, Ny))
        if Ny == 1:
            precision = rng.gamma(
                config.gamma_shape + 0.5 * n, 1.0 / (config.gamma_rate + 0.5 * float(scatter[0, 0]))
            )
            draw = np.array([[1.0 / precision]])
        else:
            draw = np.atleast_2d(
                invwishart(df=df0 + n, scale=S0 + scatter).rvs(random_state=rng)
            )
        if spec.switch_cov:
            covs[g] = 0.5 * (draw + draw.T)
        else:
            covs[:] = 0.5 * (draw + draw.T)
    return covs


def sample_params(
    series,
    states: np.ndarray,
    spec: ModelSpec,
    config: GibbsConfig,
    rng: np.random.Generator,
    current: Optional[ModelParams] = None,
) -> ModelParams:
    """One step-a sweep: parameters from their full conditionals given states."""
    data = series.data if hasattr(series, "data") else np.asarray(series, dtype=float)
    Y, X = build_design(data, spec)
    states = np.asarray(states, dtype=int)
    if len(states) != Y.shape[0]:
        raise ConfigError(f"state path length {len(states)} != effective sample {Y.shape[0]}")
    M = spec.n_regimes
    Ny = target_width(spec)
    if current is not None:
        covs_eff = effective_covariances(current, spec)
        omegas = np.array([np.linalg.inv(covs_eff[m]) for m in range(M)])
    else:
        omegas = np.repeat(np.eye(Ny)[None], M, axis=0)
    C = _coeff_draw(Y, X, states, spec, omegas, config, rng)
    covs = _cov_draw(Y, X, C, states, spec, config, rng)
    P = sample_transition_rows(states, M, config.dirichlet_conc, rng)
    pi_counts = np.zeros(M)
    pi_counts[states[0]] = 1.0
    pi = _simplex_draw(pi_counts + config.dirichlet_conc, rng)
    return params_from_design(C, covs, P, pi, spec)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def fit_gibbs(
    series,
    spec: ModelSpec,
    config: Optional[GibbsConfig] = None,
) -> tuple[PosteriorSamples, FitResult]:
    """Run the sampler; returns kept draws and a posterior-mean fit."""
    config = config or GibbsConfig()
    data = series.data if hasattr(series, "data") else np.asarray(series, dtype=float)
    Y, X = build_design(data, spec)
    T_eff = Y.shape[0]
    needed = spec.n_regimes * min_rows_per_regime(spec)
    if T_eff < needed:
        raise InsufficientDataError(f"effective sample {T_eff} < {needed} rows")

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    resp = _init_responsibilities(Y, X, spec.n_regimes, rng, "kmeans")
    states = np.argmax(resp, axis=1).astype(np.int64)
    params = None

    M = spec.n_regimes
    names, _ = flatten_params(_zero_params(spec), spec)
    flat = np.empty((config.n_kept, len(names)))
    draws: list[ModelParams] = []
    logliks = np.empty(config.n_kept)
    state_freq = np.zeros((T_eff, M))
    kept = 0

    for it in range(config.n_samples):
        params = sample_params(data, states, spec, config, rng, current=params)
        table = log_density_table(data, params, spec)
        predicted, filtered, ll, fail_t = _kernels.filter_forward(
            np.ascontiguousarray(table),
            np.ascontiguousarray(params.transition),
            np.ascontiguousarray(params.initial_dist),
        )
        if fail_t >= 0 or not np.isfinite(ll):
            raise NumericalError(f"non-finite draw at sweep {it}")
        states = _kernels.sample_path(
            np.ascontiguousarray(filtered),
            np.ascontiguousarray(params.transition),
            rng.random(T_eff),
        )

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0 and kept < config.n_kept:
            perm = canonical_order(params, spec)
            relabeled = permute_regimes(params, perm)
            inv = np.empty(M, dtype=np.int64)
            inv[perm] = np.arange(M)
            _, flat[kept] = flatten_params(relabeled, spec)
            draws.append(relabeled)
            logliks[kept] = ll
            state_freq[np.arange(T_eff), inv[states]] += 1.0
            kept += 1

    bad = [v for p in draws for v in validate(p, spec)]
    if bad:
        warnings.warn("some kept draws violate parameter invariants: " + bad[0])

    samples = PosteriorSamples(
        names=names,
        flat=flat[:kept],
        draws=draws,
        log_likelihoods=logliks[:kept],
        state_frequencies=state_freq,
        offset=spec.effective_lag,
        acceptance_rate=1.0,
    )

    mean_params = samples.mean_params(spec)
    probs = filter_smooth(data, mean_params, spec)
    classification = np.argmax(state_freq, axis=1)
    result = FitResult(
        params=mean_params,
        spec=spec,
        probs=probs,
        classification=classification,
        method="gibbs",
        trace=None,
        warnings=[],
    )
    return samples, result


def _zero_params(spec: ModelSpec) -> ModelParams:
    M, N, p = spec.n_regimes, spec.n_channels, spec.lag
    return ModelParams(
        intercepts=np.zeros((M, N)),
        coeffs=np.zeros((M, p, N, N)),
        covariances=np.repeat(np.eye(N)[None], M, axis=0),
        transition=np.full((M, M), 1.0 / M),
        initial_dist=np.full(M, 1.0 / M),
    )


def write_summary_json(path, samples: PosteriorSamples) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(samples.summary(), fh, indent=2)
        fh.write("\n")
