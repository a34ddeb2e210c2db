"""Markov-switching VAR model family.

The reduced form is

    y_t = A0[s_t] + sum_{l=1..p} A_l[s_t] @ y_{t-l} + u_t,   u_t ~ N(0, Sigma[s_t])

with a latent first-order Markov chain s_t on M regimes. Any of the intercept,
the lag coefficients, and the covariance may switch with the regime. Two
structural restrictions are supported:

* ``diagonal_var``: each channel loads only on its own lags (the lag matrices
  are diagonal); the covariance stays full, so cross-channel correlation is
  still modeled.
* ``regression_mode``: a one-step-ahead switching regression of one target
  channel on the previous row of a set of regressor channels, with a
  per-regime scalar noise variance. Only the target channel enters the
  likelihood; the regressors are treated as exogenous.

Transition convention
---------------------
``transition`` is stored row-stochastic: ``transition[i, j] = Pr(s_t = j |
s_{t-1} = i)``, rows sum to one. Column-stochastic matrices (the other common
printing convention) must be transposed on ingest; see README.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, InsufficientDataError, NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))

_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class RegressionMode:
    """One-step-ahead switching regression: target[t] on regressors[t-1].

    ``target`` and ``regressors`` are channel indices into the observation
    series. ``intercept`` adds a per-regime constant (off by default; the
    canonical car-following form has none).
    """

    target: int
    regressors: tuple[int, ...]
    intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(int(r) for r in self.regressors))
        if self.target in self.regressors:
            raise ConfigError("regression target cannot be among regressors")
        if len(self.regressors) == 0:
            raise ConfigError("regression mode needs at least one regressor")


@dataclass(frozen=True)
class ModelSpec:
    """Structural description of an MSVAR model (shapes and switch flags)."""

    n_channels: int
    n_regimes: int
    lag: int
    switch_intercept: bool = True
    switch_coeffs: bool = True
    switch_cov: bool = True
    diagonal_var: bool = False
    regression_mode: Optional[RegressionMode] = None

    def __post_init__(self):
        if self.n_channels < 1:
            raise ConfigError("n_channels must be >= 1")
        if self.n_regimes < 1:
            raise ConfigError("n_regimes must be >= 1")
        if self.lag < 0:
            raise ConfigError("lag must be >= 0")
        if self.n_regimes > 1 and not (
            self.switch_intercept or self.switch_coeffs or self.switch_cov
        ):
            raise ConfigError("at least one switch flag must be set when n_regimes > 1")
        rm = self.regression_mode
        if rm is not None:
            if self.lag != 1:
                raise ConfigError("regression mode conditions on the previous row; lag must be 1")
            idx = (rm.target,) + rm.regressors
            if any(i < 0 or i >= self.n_channels for i in idx):
                raise ConfigError("regression channel index out of range")

    @property
    def effective_lag(self) -> int:
        """Rows consumed as conditioning data at the start of the sample."""
        return 1 if self.regression_mode is not None else self.lag

    def to_dict(self) -> dict:
        d = {
            "n_channels": self.n_channels,
            "n_regimes": self.n_regimes,
            "lag": self.lag,
            "switch_intercept": self.switch_intercept,
            "switch_coeffs": self.switch_coeffs,
            "switch_cov": self.switch_cov,
            "diagonal_var": self.diagonal_var,
        }
        if self.regression_mode is not None:
            d["regression_mode"] = {
                "target": self.regression_mode.target,
                "regressors": list(self.regression_mode.regressors),
                "intercept": self.regression_mode.intercept,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        rm = d.get("regression_mode")
        return cls(
            n_channels=d["n_channels"],
            n_regimes=d["n_regimes"],
            lag=d["lag"],
            switch_intercept=d.get("switch_intercept", True),
            switch_coeffs=d.get("switch_coeffs", True),
            switch_cov=d.get("switch_cov", True),
            diagonal_var=d.get("diagonal_var", False),
            regression_mode=RegressionMode(
                target=rm["target"],
                regressors=tuple(rm["regressors"]),
                intercept=rm.get("intercept", False),
            )
            if rm
            else None,
        )


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ModelParams:
    """Numeric parameters of an MSVAR model. Immutable after construction.

    intercepts : (M, N)
    coeffs : (M, p, N, N), ``coeffs[m, l-1]`` is the lag-l matrix A_l of regime m
    covariances : (M, N, N) symmetric positive definite
    transition : (M, M) row-stochastic, ``transition[i, j] = Pr(s_t=j | s_{t-1}=i)``
    initial_dist : (M,) distribution of the first in-sample regime
    """

    intercepts: np.ndarray
    coeffs: np.ndarray
    covariances: np.ndarray
    transition: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "intercepts", _frozen(self.intercepts))
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))
        object.__setattr__(self, "covariances", _frozen(self.covariances))
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "initial_dist", _frozen(self.initial_dist))
        M, N = self.intercepts.shape
        if self.coeffs.ndim != 4 or self.coeffs.shape[0] != M or self.coeffs.shape[2:] != (N, N):
            raise ConfigError(f"coeffs must have shape (M, p, N, N); got {self.coeffs.shape}")
        if self.covariances.shape != (M, N, N):
            raise ConfigError(f"covariances must have shape (M, N, N); got {self.covariances.shape}")
        if self.transition.shape != (M, M):
            raise ConfigError(f"transition must have shape (M, M); got {self.transition.shape}")
        if self.initial_dist.shape != (M,):
            raise ConfigError(f"initial_dist must have shape (M,); got {self.initial_dist.shape}")

    @property
    def n_regimes(self) -> int:
        return self.intercepts.shape[0]

    @property
    def n_channels(self) -> int:
        return self.intercepts.shape[1]

    @property
    def lag(self) -> int:
        return self.coeffs.shape[1]


def ergodic_distribution(transition: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic chain; uniform if reducible."""
    P = np.asarray(transition, dtype=float)
    M = P.shape[0]
    vals, vecs = np.linalg.eig(P.T)
    close = np.isclose(vals, 1.0, atol=1e-8)
    if close.sum() != 1:
        return np.full(M, 1.0 / M)
    v = np.real(vecs[:, close.argmax()])
    if np.all(v <= 1e-12):
        v = -v
    if np.any(v < -1e-8):
        return np.full(M, 1.0 / M)
    v = np.clip(v, 0.0, None)
    s = v.sum()
    if s <= 0:
        return np.full(M, 1.0 / M)
    return v / s


def make_params(
    intercepts,
    coeffs,
    covariances,
    transition,
    initial_dist=None,
) -> ModelParams:
    """Build ModelParams, defaulting the initial distribution to the ergodic one."""
    transition = np.asarray(transition, dtype=float)
    if initial_dist is None:
        initial_dist = ergodic_distribution(transition)
    return ModelParams(
        intercepts=np.asarray(intercepts, dtype=float),
        coeffs=np.asarray(coeffs, dtype=float),
        covariances=np.asarray(covariances, dtype=float),
        transition=transition,
        initial_dist=np.asarray(initial_dist, dtype=float),
    )


def permute_regimes(params: ModelParams, perm: Sequence[int]) -> ModelParams:
    """Relabel regimes: new regime k takes the blocks of old regime perm[k]."""
    perm = np.asarray(perm, dtype=int)
    return ModelParams(
        intercepts=params.intercepts[perm],
        coeffs=params.coeffs[perm],
        covariances=params.covariances[perm],
        transition=params.transition[np.ix_(perm, perm)],
        initial_dist=params.initial_dist[perm],
    )


def regime_scale(params: ModelParams, spec: Optional[ModelSpec] = None) -> np.ndarray:
    """Per-regime residual scale used for canonical label ordering."""
    if spec is not None and spec.regression_mode is not None:
        t = spec.regression_mode.target
        return params.covariances[:, t, t]
    return np.trace(params.covariances, axis1=1, axis2=2)


def canonical_order(params: ModelParams, spec: Optional[ModelSpec] = None) -> np.ndarray:
    """Permutation sorting regimes by ascending residual scale (stable)."""
    return np.argsort(regime_scale(params, spec), kind="stable")


# ---------------------------------------------------------------------------
# Design matrices and coefficient layout
# ---------------------------------------------------------------------------


def build_design(data: np.ndarray, spec: ModelSpec):
    """Return (Y, X) for the effective sample t = offset..T-1.

    Full mode: Y[k] = y_{p+k}, X[k] = [1, y_{p+k-1}, ..., y_{p+k-p}].
    Regression mode: Y[k] = target[1+k], X[k] = [1?, regressors at row k].
    """
    data = np.asarray(data, dtype=float)
    T = data.shape[0]
    rm = spec.regression_mode
    if rm is not None:
        if T < 2:
            raise InsufficientDataError("regression mode needs at least 2 rows")
        Y = data[1:, [rm.target]]
        cols = [data[:-1, list(rm.regressors)]]
        if rm.intercept:
            cols.insert(0, np.ones((T - 1, 1)))
        X = np.hstack(cols)
        return Y, X
    p = spec.lag
    if T <= p:
        raise InsufficientDataError(f"series has {T} rows; lag {p} leaves no effective sample")
    Y = data[p:]
    blocks = [np.ones((T - p, 1))]
    for l in range(1, p + 1):
        blocks.append(data[p - l : T - l])
    X = np.hstack(blocks)
    return Y, X


def design_width(spec: ModelSpec) -> int:
    rm = spec.regression_mode
    if rm is not None:
        return len(rm.regressors) + (1 if rm.intercept else 0)
    return 1 + spec.n_channels * spec.lag


def target_width(spec: ModelSpec) -> int:
    return 1 if spec.regression_mode is not None else spec.n_channels


def coeff_matrices(params: ModelParams, spec: ModelSpec) -> np.ndarray:
    """Stacked regression matrices C with shape (M, Ny, K): mean = C_m @ x_t."""
    M, N, p = params.n_regimes, params.n_channels, params.lag
    rm = spec.regression_mode
    if rm is not None:
        K = design_width(spec)
        C = np.empty((M, 1, K))
        col = 0
        if rm.intercept:
            C[:, 0, 0] = params.intercepts[:, rm.target]
            col = 1
        C[:, 0, col:] = params.coeffs[:, 0, rm.target, list(rm.regressors)]
        return C
    C = np.empty((M, N, 1 + N * p))
    C[:, :, 0] = params.intercepts
    for l in range(p):
        C[:, :, 1 + l * N : 1 + (l + 1) * N] = params.coeffs[:, l]
    return C


def effective_covariances(params: ModelParams, spec: ModelSpec) -> np.ndarray:
    """Per-regime covariance of the modeled block, shape (M, Ny, Ny)."""
    rm = spec.regression_mode
    if rm is not None:
        t = rm.target
        return params.covariances[:, t : t + 1, t : t + 1]
    return params.covariances


def params_from_design(
    C: np.ndarray,
    covs: np.ndarray,
    transition: np.ndarray,
    initial_dist: np.ndarray,
    spec: ModelSpec,
) -> ModelParams:
    """Inverse of coeff_matrices/effective_covariances: embed back into full shapes."""
    M, N, p = spec.n_regimes, spec.n_channels, spec.lag
    rm = spec.regression_mode
    intercepts = np.zeros((M, N))
    coeffs = np.zeros((M, p, N, N))
    covariances = np.zeros((M, N, N))
    if rm is not None:
        col = 0
        if rm.intercept:
            intercepts[:, rm.target] = C[:, 0, 0]
            col = 1
        coeffs[:, 0, rm.target, list(rm.regressors)] = C[:, 0, col:]
        covariances[:] = np.eye(N)
        covariances[:, rm.target, rm.target] = covs[:, 0, 0]
    else:
        intercepts[:] = C[:, :, 0]
        for l in range(p):
            coeffs[:, l] = C[:, :, 1 + l * N : 1 + (l + 1) * N]
        covariances[:] = covs
    return ModelParams(
        intercepts=intercepts,
        coeffs=coeffs,
        covariances=covariances,
        transition=transition,
        initial_dist=initial_dist,
    )


def coeff_layout(spec: ModelSpec):
    """Free-parameter layout of the stacked coefficient system.

    Returns (n_free, names, maps). maps[m] is an integer array of length
    Ny*K giving, for each entry of the row-major vec of C_m, the global free
    parameter index, or -1 for entries fixed at zero (diagonal restriction).
    Shared (non-switching) blocks map every regime onto the same indices.
    """
    M, N, p = spec.n_regimes, spec.n_channels, spec.lag
    Ny, K = target_width(spec), design_width(spec)
    rm = spec.regression_mode
    index: dict = {}
    names: list[str] = []

    def at(key, name):
        if key not in index:
            index[key] = len(names)
            names.append(name)
        return index[key]

    maps = []
    for m in range(M):
        mi = m if spec.switch_intercept else 0
        mc = m if spec.switch_coeffs else 0
        tag_i = str(mi) if spec.switch_intercept else "*"
        tag_c = str(mc) if spec.switch_coeffs else "*"
        vec = np.full(Ny * K, -1, dtype=int)
        if rm is not None:
            col = 0
            if rm.intercept:
                vec[0] = at(("c", mi), f"A0[{tag_i}]")
                col = 1
            for r, ch in enumerate(rm.regressors):
                vec[col + r] = at(("b", mc, r), f"phi{r + 1}[{tag_c}]")
        else:
            for i in range(N):
                vec[i * K] = at(("c", mi, i), f"A0[{tag_i}][{i}]")
                for l in range(p):
                    for j in range(N):
                        if spec.diagonal_var and i != j:
                            continue
                        vec[i * K + 1 + l * N + j] = at(
                            ("b", mc, l, i, j), f"A{l + 1}[{tag_c}][{i}][{j}]"
                        )
        maps.append(vec)
    return len(names), names, maps


def coeffs_to_theta(C: np.ndarray, spec: ModelSpec) -> np.ndarray:
    n_free, _, maps = coeff_layout(spec)
    theta = np.zeros(n_free)
    for m in range(spec.n_regimes):
        vec = C[m].ravel()
        mask = maps[m] >= 0
        theta[maps[m][mask]] = vec[mask]
    return theta


def theta_to_coeffs(theta: np.ndarray, spec: ModelSpec) -> np.ndarray:
    _, _, maps = coeff_layout(spec)
    Ny, K = target_width(spec), design_width(spec)
    C = np.zeros((spec.n_regimes, Ny, K))
    for m in range(spec.n_regimes):
        vec = np.zeros(Ny * K)
        mask = maps[m] >= 0
        vec[mask] = theta[maps[m][mask]]
        C[m] = vec.reshape(Ny, K)
    return C


def flatten_params(params: ModelParams, spec: ModelSpec) -> tuple[list[str], np.ndarray]:
    """Flatten the free parameters into a named vector (chain export order).

    Order: coefficient block (coeff_layout order), covariance entries (upper
    triangle per switching regime, one shared block otherwise), transition
    rows, initial distribution.
    """
    M = spec.n_regimes
    _, names, _ = coeff_layout(spec)
    names = list(names)
    values = list(coeffs_to_theta(coeff_matrices(params, spec), spec))
    covs = effective_covariances(params, spec)
    Ny = covs.shape[1]
    blocks = range(M) if (spec.switch_cov or M == 1) else (0,)
    for m in blocks:
        tag = str(m) if (spec.switch_cov or M == 1) else "*"
        for i in range(Ny):
            for j in range(i, Ny):
                names.append(f"Sigma[{tag}][{i}][{j}]" if Ny > 1 else f"sigma2[{tag}]")
                values.append(float(covs[m, i, j]))
    for i in range(M):
        for j in range(M):
            names.append(f"P[{i}][{j}]")
            values.append(float(params.transition[i, j]))
    for i in range(M):
        names.append(f"pi[{i}]")
        values.append(float(params.initial_dist[i]))
    return names, np.asarray(values)


def param_count(spec: ModelSpec) -> int:
    """Number of free parameters k for information criteria.

    Counts intercepts, lag (or regression) coefficients, distinct covariance
    entries, and the M(M-1) free transition probabilities; the initial
    distribution is not counted.
    """
    M, N, p = spec.n_regimes, spec.n_channels, spec.lag
    rm = spec.regression_mode
    mi = M if spec.switch_intercept else 1
    mc = M if spec.switch_coeffs else 1
    mv = M if spec.switch_cov else 1
    if rm is not None:
        k = mc * len(rm.regressors) + mv
        if rm.intercept:
            k += mi
    else:
        per_lag = N if spec.diagonal_var else N * N
        k = mi * N + mc * p * per_lag + mv * N * (N + 1) // 2
    return k + M * (M - 1)


# ---------------------------------------------------------------------------
# Densities and likelihood
# ---------------------------------------------------------------------------


def cholesky_with_ridge(S: np.ndarray, ridge: float = 1e-8, label: str = "") -> np.ndarray:
    """Lower Cholesky factor; adds ridge*trace/N to the diagonal on failure."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    n = S.shape[0]
    bump = ridge * max(np.trace(S) / n, np.finfo(float).tiny)
    warnings.warn(f"covariance{label} not positive definite; adding ridge {bump:.3e}")
    try:
        return np.linalg.cholesky(S + bump * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance{label} not positive definite even with ridge") from exc


def log_density_table(data: np.ndarray, params: ModelParams, spec: Optional[ModelSpec] = None) -> np.ndarray:
    """(T_eff, M) table of per-regime conditional Gaussian log densities.

    Row k corresponds to series row offset+k where offset is the effective
    lag; entries are finite for any valid inputs (log-space Cholesky path).
    """
    spec = spec or infer_spec(params)
    Y, X = build_design(data, spec)
    C = coeff_matrices(params, spec)
    covs = effective_covariances(params, spec)
    M = params.n_regimes
    Ny = Y.shape[1]
    out = np.empty((Y.shape[0], M))
    for m in range(M):
        resid = Y - X @ C[m].T
        L = cholesky_with_ridge(covs[m], label=f" of regime {m}")
        z = solve_triangular(L, resid.T, lower=True)
        out[:, m] = (
            -0.5 * Ny * LOG_2PI - np.log(np.diagonal(L)).sum() - 0.5 * np.sum(z * z, axis=0)
        )
    return out


def conditional_log_density(
    data: np.ndarray,
    params: ModelParams,
    t: int,
    regime: int,
    spec: Optional[ModelSpec] = None,
) -> float:
    """Log density of row t given its lags, under one regime (0-based indices)."""
    spec = spec or infer_spec(params)
    off = spec.effective_lag
    T = np.asarray(data).shape[0]
    if t < off or t >= T:
        raise IndexError(f"t={t} outside effective sample [{off}, {T})")
    if regime < 0 or regime >= params.n_regimes:
        raise IndexError(f"regime {regime} out of range")
    window = np.asarray(data, dtype=float)[t - off : t + 1]
    return float(log_density_table(window, params, spec)[0, regime])


def infer_spec(params: ModelParams) -> ModelSpec:
    """Default fully-switching spec matching the parameter shapes."""
    return ModelSpec(
        n_channels=params.n_channels,
        n_regimes=params.n_regimes,
        lag=params.lag,
        switch_intercept=True,
        switch_coeffs=True,
        switch_cov=True,
    )


def log_likelihood(data: np.ndarray, params: ModelParams, spec: Optional[ModelSpec] = None) -> float:
    """Observed-data log likelihood via the filter's prediction-error decomposition.

    The first ``effective_lag`` rows condition the recursion and contribute no
    terms.
    """
    from . import _kernels

    spec = spec or infer_spec(params)
    table = log_density_table(data, params, spec)
    _, _, ll, fail_t = _kernels.filter_forward(
        np.ascontiguousarray(table),
        np.ascontiguousarray(params.transition),
        np.ascontiguousarray(params.initial_dist),
    )
    if fail_t >= 0:
        raise NumericalError(f"filter underflow at effective step {fail_t}")
    return float(ll)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(params: ModelParams, spec: Optional[ModelSpec] = None) -> list[str]:
    """Check every ModelParams invariant; returns all violations found."""
    violations: list[str] = []
    M, N, p = params.n_regimes, params.n_channels, params.lag
    if spec is not None:
        if (spec.n_regimes, spec.n_channels, spec.lag) != (M, N, p):
            violations.append(
                f"shape mismatch: spec wants (M={spec.n_regimes}, N={spec.n_channels}, "
                f"p={spec.lag}), params have (M={M}, N={N}, p={p})"
            )
            return violations

    P = params.transition
    for i, row_sum in enumerate(P.sum(axis=1)):
        if abs(row_sum - 1.0) > _SIMPLEX_TOL:
            violations.append(f"transition row {i} sums to {row_sum!r}, not 1")
    if np.any(P < -_SIMPLEX_TOL) or np.any(P > 1.0 + _SIMPLEX_TOL):
        violations.append("transition entries outside [0, 1]")

    pi = params.initial_dist
    if abs(pi.sum() - 1.0) > _SIMPLEX_TOL:
        violations.append(f"initial_dist sums to {pi.sum()!r}, not 1")
    if np.any(pi < -_SIMPLEX_TOL):
        violations.append("initial_dist has negative entries")

    for m in range(M):
        S = params.covariances[m]
        if not np.allclose(S, S.T, atol=1e-10, rtol=0.0):
            violations.append(f"covariance of regime {m} not symmetric")
            continue
        smallest = float(np.linalg.eigvalsh(S)[0])
        if smallest <= 0.0:
            violations.append(
                f"covariance of regime {m} not positive definite (min eigenvalue {smallest:.3e})"
            )

    if spec is not None and spec.diagonal_var and spec.regression_mode is None:
        off_diag = params.coeffs * (1.0 - np.eye(N))
        if np.any(off_diag != 0.0):
            violations.append("diagonal_var spec requires off-diagonal lag coefficients to be 0")

    if spec is not None and spec.regression_mode is not None:
        rm = spec.regression_mode
        mask = np.ones((M, p, N, N), dtype=bool)
        mask[:, 0, rm.target, list(rm.regressors)] = False
        if np.any(params.coeffs[mask] != 0.0):
            violations.append("regression mode requires zero coefficients off the target row")
        if not rm.intercept and np.any(params.intercepts != 0.0):
            violations.append("regression mode without intercept requires zero intercepts")
    return violations


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def params_to_dict(params: ModelParams, spec: ModelSpec, metadata: Optional[dict] = None) -> dict:
    return {
        "spec": spec.to_dict(),
        "intercepts": params.intercepts.tolist(),
        "coeffs": params.coeffs.tolist(),
        "covariances": params.covariances.tolist(),
        "transition": params.transition.tolist(),
        "transition_convention": "row_stochastic",
        "initial_dist": params.initial_dist.tolist(),
        "metadata": metadata or {},
    }


def params_from_dict(d: dict) -> tuple[ModelParams, ModelSpec, dict]:
    spec = ModelSpec.from_dict(d["spec"])
    conv = d.get("transition_convention", "row_stochastic")
    trans = np.asarray(d["transition"], dtype=float)
    if conv == "column_stochastic":
        trans = trans.T
    elif conv != "row_stochastic":
        raise ConfigError(f"unknown transition convention {conv!r}")
    params = ModelParams(
        intercepts=np.asarray(d["intercepts"], dtype=float),
        coeffs=np.asarray(d["coeffs"], dtype=float),
        covariances=np.asarray(d["covariances"], dtype=float),
        transition=trans,
        initial_dist=np.asarray(d["initial_dist"], dtype=float),
    )
    return params, spec, d.get("metadata", {})


def save_model(path, params: ModelParams, spec: ModelSpec, metadata: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, spec, metadata), fh, indent=2)
        fh.write("\n")


def load_model(path) -> tuple[ModelParams, ModelSpec, dict]:
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
