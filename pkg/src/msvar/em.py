"""Maximum-likelihood estimation by expectation-maximization.

E-step: Hamilton filter plus backward smoother yield smoothed regime
probabilities and pairwise joints. M-step: probability-weighted least squares
for the regression blocks, weighted residual covariances, and the transition
update P[i, j] = sum_t pairwise[t, i, j] / sum_t smoothed[t, i]. The initial
distribution is re-estimated as the first smoothed row, so each sweep is an
exact EM (or, for parameter blocks shared across regimes with switching
covariances, an exact conditional-maximization) step and the likelihood is
monotone.

Regimes of the returned fit are relabeled by ascending residual scale so
reports are comparable across runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.cluster.vq import kmeans2

from . import _kernels
from .errors import ConfigError, InsufficientDataError, NumericalError
from .inference import RegimeProbabilities, classify
from .model import (
    ModelParams,
    ModelSpec,
    build_design,
    canonical_order,
    coeff_layout,
    design_width,
    effective_covariances,
    log_density_table,
    params_from_design,
    permute_regimes,
    target_width,
    theta_to_coeffs,
    validate,
)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    rel_tol: float = 1e-8
    n_restarts: int = 5
    seed: Optional[int] = None
    ridge: float = 1e-8
    init_strategy: str = "kmeans"  # "kmeans" (on one-regime residuals) or "random"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ConfigError("rel_tol must be > 0")
        if self.n_restarts < 1:
            raise ConfigError("n_restarts must be >= 1")
        if self.init_strategy not in ("kmeans", "random"):
            raise ConfigError(f"unknown init_strategy {self.init_strategy!r}")


@dataclass
class EmTrace:
    log_likelihoods: list[float] = field(default_factory=list)
    n_iters: int = 0
    converged: bool = False
    restart: int = 0
    restart_final_logliks: list[Optional[float]] = field(default_factory=list)


@dataclass
class FitResult:
    """Estimated model plus the inference artifacts of the winning run."""

    params: ModelParams
    spec: ModelSpec
    probs: RegimeProbabilities
    classification: np.ndarray
    method: str
    trace: Optional[EmTrace] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return self.probs.log_likelihood

    @property
    def converged(self) -> bool:
        return self.trace.converged if self.trace is not None else True


def min_rows_per_regime(spec: ModelSpec) -> int:
    ny = target_width(spec)
    return max(ny * spec.lag + ny + 1, design_width(spec) + 1)


def _series_data(series) -> np.ndarray:
    return series.data if hasattr(series, "data") else np.asarray(series, dtype=float)


# ---------------------------------------------------------------------------
# M-step
# ---------------------------------------------------------------------------


def _ensure_pd(S: np.ndarray, ridge: float) -> np.ndarray:
    S = 0.5 * (S + S.T)
    min_eig = float(np.linalg.eigvalsh(S)[0])
    if min_eig <= 0.0:
        scale = max(np.trace(S) / S.shape[0], 1.0)
        S = S + (abs(min_eig) + max(ridge * scale, 1e-12)) * np.eye(S.shape[0])
    return S


def _solve_psd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, b, rcond=None)[0]


def _per_regime_full(spec: ModelSpec) -> bool:
    """True when every regime has its own unrestricted coefficient block."""
    if spec.n_regimes == 1:
        return spec.regression_mode is not None or not spec.diagonal_var
    if spec.regression_mode is not None:
        return spec.switch_coeffs and (spec.switch_intercept or not spec.regression_mode.intercept)
    return spec.switch_intercept and spec.switch_coeffs and not spec.diagonal_var


def _coeff_update(Y, X, weights, spec, omegas) -> np.ndarray:
    """Weighted-least-squares coefficient update; returns C with shape (M, Ny, K).

    In the unrestricted per-regime case the solution is independent of the
    covariances. Shared or restricted blocks solve the stacked normal
    equations weighted by the inverse covariances ``omegas``.
    """
    M = spec.n_regimes
    K = design_width(spec)
    Ny = target_width(spec)
    Sxx = np.einsum("tm,ti,tj->mij", weights, X, X)
    Sxy = np.einsum("tm,ti,tj->mij", weights, X, Y)  # (M, K, Ny)

    if _per_regime_full(spec):
        C = np.empty((M, Ny, K))
        for m in range(M):
            C[m] = _solve_psd(Sxx[m], Sxy[m]).T
        return C

    n_free, _, maps = coeff_layout(spec)
    A = np.zeros((n_free, n_free))
    b = np.zeros(n_free)
    for m in range(M):
        kron = np.kron(omegas[m], Sxx[m])
        rhs = (omegas[m] @ Sxy[m].T).ravel()
        idx = maps[m]
        mask = idx >= 0
        gi = idx[mask]
        np.add.at(A, (gi[:, None], gi[None, :]), kron[np.ix_(mask, mask)])
        np.add.at(b, gi, rhs[mask])
    return theta_to_coeffs(_solve_psd(A, b), spec)


def _cov_update(Y, X, C, weights, spec, ridge, min_weight, warn_sink) -> np.ndarray:
    M, Ny = spec.n_regimes, Y.shape[1]
    sums = weights.sum(axis=0)
    per_regime = np.empty((M, Ny, Ny))
    for m in range(M):
        resid = Y - X @ C[m].T
        per_regime[m] = (resid * weights[:, m : m + 1]).T @ resid
        if np.trace(per_regime[m]) <= 1e-12 * max(sums[m], 1.0):
            warn_sink.append(
                f"regime {m} residual covariance is numerically zero (degenerate fit)"
            )
    if not spec.switch_cov:
        pooled = _ensure_pd(per_regime.sum(axis=0) / sums.sum(), ridge)
        return np.repeat(pooled[None], M, axis=0)
    covs = np.empty((M, Ny, Ny))
    pooled = per_regime.sum(axis=0) / sums.sum()
    for m in range(M):
        if sums[m] < min_weight:
            warn_sink.append(
                f"regime {m} effective weight {sums[m]:.2f} below {min_weight}; "
                "covariance fell back to the pooled estimate"
            )
            covs[m] = _ensure_pd(pooled, ridge)
        else:
            covs[m] = _ensure_pd(per_regime[m] / sums[m], ridge)
    return covs


def _transition_update(smoothed, pairwise, warn_sink) -> tuple[np.ndarray, np.ndarray]:
    M = smoothed.shape[1]
    if pairwise.shape[0] == 0:
        return np.full((M, M), 1.0 / M), smoothed[0].copy()
    numer = pairwise.sum(axis=0)
    denom = smoothed[:-1].sum(axis=0)
    P = np.empty((M, M))
    for i in range(M):
        if denom[i] <= 1e-300:
            warn_sink.append(f"regime {i} has vanishing occupancy; transition row reset to uniform")
            P[i] = 1.0 / M
        else:
            P[i] = numer[i] / denom[i]
    P = np.clip(P, 0.0, None)
    P /= P.sum(axis=1, keepdims=True)
    pi = np.clip(smoothed[0], 0.0, None)
    pi /= pi.sum()
    return P, pi


def _m_step_arrays(
    Y,
    X,
    smoothed,
    pairwise,
    spec,
    prev_params: Optional[ModelParams],
    ridge: float,
    warn_sink: list,
) -> ModelParams:
    M = spec.n_regimes
    Ny = Y.shape[1]
    if prev_params is not None and not _per_regime_full(spec):
        covs = effective_covariances(prev_params, spec)
        omegas = np.array([np.linalg.inv(_ensure_pd(covs[m], ridge)) for m in range(M)])
    else:
        omegas = np.repeat(np.eye(Ny)[None], M, axis=0)
    C = _coeff_update(Y, X, smoothed, spec, omegas)
    covs = _cov_update(Y, X, C, smoothed, spec, ridge, min_rows_per_regime(spec), warn_sink)
    P, pi = _transition_update(smoothed, pairwise, warn_sink)
    return params_from_design(C, covs, P, pi, spec)


def m_step(
    series,
    smoothed: np.ndarray,
    pairwise: np.ndarray,
    spec: ModelSpec,
    prev_params: Optional[ModelParams] = None,
    ridge: float = 1e-8,
) -> ModelParams:
    """One maximization step given smoothed probabilities (exposed for tests).

    ``prev_params`` supplies the covariances that weight the normal equations
    when coefficient blocks are shared across regimes or restricted; without
    it those cases fall back to identity weighting (exact only for spherical
    noise). The fully switching, unrestricted case needs no weighting.
    """
    data = _series_data(series)
    Y, X = build_design(data, spec)
    if smoothed.shape != (Y.shape[0], spec.n_regimes):
        raise ConfigError(
            f"smoothed table shape {smoothed.shape} does not match effective sample "
            f"({Y.shape[0]}, {spec.n_regimes})"
        )
    sink: list[str] = []
    out = _m_step_arrays(Y, X, smoothed, pairwise, spec, prev_params, ridge, sink)
    for msg in sink:
        warnings.warn(msg)
    return out


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _init_responsibilities(Y, X, M, rng, strategy) -> np.ndarray:
    T_eff = Y.shape[0]
    if M == 1:
        return np.ones((T_eff, 1))
    if strategy == "kmeans":
        beta = _solve_psd(X.T @ X, X.T @ Y)
        resid = Y - X @ beta
        scale = resid.std(axis=0)
        scale[scale == 0] = 1.0
        _, labels = kmeans2(resid / scale, M, minit="++", rng=rng)
        resp = np.full((T_eff, M), 0.1 / max(M - 1, 1))
        resp[np.arange(T_eff), labels] = 0.9
        # guard against empty clusters
        counts = resp.sum(axis=0)
        if np.any(counts < 1.0):
            resp = 0.5 * resp + 0.5 * rng.dirichlet(np.ones(M), size=T_eff)
    else:
        resp = rng.dirichlet(np.ones(M), size=T_eff)
    return resp / resp.sum(axis=1, keepdims=True)


def _pairwise_from_resp(resp: np.ndarray) -> np.ndarray:
    return resp[:-1, :, None] * resp[1:, None, :]


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass
class _RunOutcome:
    params: ModelParams
    probs: RegimeProbabilities
    loglik: float
    trace_lls: list[float]
    converged: bool
    restart: int
    warnings: list[str]


def _filter_smooth_arrays(table, params, offset) -> RegimeProbabilities:
    predicted, filtered, loglik, fail_t = _kernels.filter_forward(
        np.ascontiguousarray(table),
        np.ascontiguousarray(params.transition),
        np.ascontiguousarray(params.initial_dist),
    )
    if fail_t >= 0:
        raise NumericalError(f"filter underflow at effective step {fail_t}")
    smoothed, pairwise, _ = _kernels.smooth_backward(predicted, filtered, params.transition)
    return RegimeProbabilities(
        filtered=filtered,
        predicted=predicted,
        log_likelihood=float(loglik),
        offset=offset,
        smoothed=smoothed,
        pairwise_smoothed=pairwise,
    )


def _run_restart(data, Y, X, spec, config, rng, restart) -> _RunOutcome:
    strategy = config.init_strategy if restart == 0 else "random"
    resp = _init_responsibilities(Y, X, spec.n_regimes, rng, strategy)
    sink: list[str] = []
    params = _m_step_arrays(Y, X, resp, _pairwise_from_resp(resp), spec, None, config.ridge, sink)
    offset = spec.effective_lag

    trace_lls: list[float] = []
    converged = False
    probs = None
    prev_ll = -np.inf

    def e_step(current) -> RegimeProbabilities:
        table = log_density_table(data, current, spec)
        out = _filter_smooth_arrays(table, current, offset)
        trace_lls.append(out.log_likelihood)
        if out.log_likelihood < prev_ll - 1e-8:
            sink.append(
                f"log-likelihood decreased by {prev_ll - out.log_likelihood:.3e} "
                f"on iteration {len(trace_lls)}"
            )
        return out

    for _ in range(config.max_iters):
        probs = e_step(params)
        ll = probs.log_likelihood
        if np.isfinite(prev_ll) and abs(ll - prev_ll) / max(1.0, abs(prev_ll)) < config.rel_tol:
            converged = True
            break
        prev_ll = ll
        params = _m_step_arrays(
            Y, X, probs.smoothed, probs.pairwise_smoothed, spec, params, config.ridge, sink
        )
    if not converged:
        # the loop exhausted after an M-step; evaluate the final parameters
        probs = e_step(params)
    return _RunOutcome(
        params=params,
        probs=probs,
        loglik=trace_lls[-1],
        trace_lls=trace_lls,
        converged=converged,
        restart=restart,
        warnings=sink,
    )


def fit_em(series, spec: ModelSpec, config: Optional[EmConfig] = None) -> FitResult:
    """Fit by EM with restarts; returns the best run relabeled canonically."""
    config = config or EmConfig()
    data = _series_data(series)
    Y, X = build_design(data, spec)
    needed = spec.n_regimes * min_rows_per_regime(spec)
    if Y.shape[0] < needed:
        raise InsufficientDataError(
            f"effective sample {Y.shape[0]} < {needed} rows "
            f"({min_rows_per_regime(spec)} per regime x {spec.n_regimes} regimes)"
        )

    children = np.random.SeedSequence(config.seed).spawn(config.n_restarts)
    outcomes: list[_RunOutcome] = []
    failures: list[str] = []
    finals: list[Optional[float]] = []
    for r in range(config.n_restarts):
        rng = np.random.default_rng(children[r])
        try:
            out = _run_restart(data, Y, X, spec, config, rng, r)
            outcomes.append(out)
            finals.append(out.loglik)
        except NumericalError as exc:
            failures.append(f"restart {r}: {exc}")
            finals.append(None)
    if not outcomes:
        raise NumericalError("every EM restart failed: " + "; ".join(failures))

    best = max(outcomes, key=lambda o: (o.loglik, -o.restart))
    params, probs = best.params, best.probs

    perm = canonical_order(params, spec)
    if not np.array_equal(perm, np.arange(spec.n_regimes)):
        params = permute_regimes(params, perm)
        probs = RegimeProbabilities(
            filtered=probs.filtered[:, perm],
            predicted=probs.predicted[:, perm],
            log_likelihood=probs.log_likelihood,
            offset=probs.offset,
            smoothed=probs.smoothed[:, perm],
            pairwise_smoothed=probs.pairwise_smoothed[np.ix_(np.arange(probs.n_steps - 1), perm, perm)],
        )

    notes = list(dict.fromkeys(best.warnings + failures))
    if not best.converged:
        notes.append(f"EM did not converge in {config.max_iters} iterations (best restart {best.restart})")
    if not any(o.converged for o in outcomes):
        notes.append("no restart converged")
    bad = validate(params, spec)
    if bad:
        raise NumericalError("M-step produced invalid parameters: " + "; ".join(bad))

    trace = EmTrace(
        log_likelihoods=best.trace_lls,
        n_iters=len(best.trace_lls),
        converged=best.converged,
        restart=best.restart,
        restart_final_logliks=finals,
    )
    return FitResult(
        params=params,
        spec=spec,
        probs=probs,
        classification=classify(probs.smoothed),
        method="em",
        trace=trace,
        warnings=notes,
    )
