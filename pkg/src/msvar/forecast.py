"""Multi-step forecasting as a per-horizon mixture of Gaussians.

Regime weights propagate through powers of the transition matrix applied to
the final filtered distribution; per-regime means iterate the regime's VAR
recursion on a plug-in path that feeds the mixture point forecast back as
lagged input. Covariances accumulate through the regime's companion form.
The point forecast is always the weight-combined mean, so it coincides with
the filter's one-step predictive mean at horizon one.

An exact mode (horizons up to 6) enumerates all regime paths instead and
moment-matches them per terminal regime; the default plug-in path is the
cheaper approximation documented in the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .dataio import ObservationSeries
from .errors import ConfigError, NumericalError
from .inference import hamilton_filter
from .model import ModelParams, ModelSpec, infer_spec
from .simulate import companion_matrix

MAX_EXACT_HORIZON = 6

TABLE_CHANNEL_ORDER = ("a", "dv", "h", "v")


@dataclass(frozen=True)
class Forecast:
    """Per-horizon mixture forecast. Arrays are indexed [horizon-1, ...]."""

    horizon: int
    channels: tuple[str, ...]
    weights: np.ndarray  # (H, M)
    means: np.ndarray  # (H, M, N)
    covariances: np.ndarray  # (H, M, N, N)
    point: np.ndarray  # (H, N)
    intervals: Optional[np.ndarray] = None  # (H, N, 2)
    interval_level: Optional[float] = None


def _check_forecastable(spec: ModelSpec) -> None:
    if spec.regression_mode is not None:
        raise ConfigError(
            "multi-step forecasting needs the full VAR form; the switching "
            "regression conditions on exogenous channels that are not modeled"
        )


def forecast(
    series,
    params: ModelParams,
    horizon: int,
    spec: Optional[ModelSpec] = None,
    interval_level: Optional[float] = 0.9,
    exact: bool = False,
) -> Forecast:
    """Forecast `horizon` steps past the end of the series."""
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    spec = spec or infer_spec(params)
    _check_forecastable(spec)
    data = series.data if isinstance(series, ObservationSeries) else np.asarray(series, dtype=float)
    channels = (
        series.channels
        if isinstance(series, ObservationSeries)
        else tuple(f"y{i + 1}" for i in range(params.n_channels))
    )
    probs = hamilton_filter(data, params, spec)
    xi_T = probs.filtered[-1]

    if exact:
        if horizon > MAX_EXACT_HORIZON:
            raise ConfigError(f"exact mixture enumeration supports horizon <= {MAX_EXACT_HORIZON}")
        weights, means, covs, point = _exact_mixture(data, params, horizon, xi_T)
    else:
        weights, means, covs, point = _plugin_mixture(data, params, horizon, xi_T)

    if not np.isfinite(point).all():
        raise NumericalError("forecast diverged to non-finite values")

    intervals = None
    if interval_level is not None:
        intervals = _mixture_intervals(weights, means, covs, interval_level)
    return Forecast(
        horizon=horizon,
        channels=tuple(channels),
        weights=weights,
        means=means,
        covariances=covs,
        point=point,
        intervals=intervals,
        interval_level=interval_level,
    )


def _plugin_mixture(data, params, horizon, xi_T):
    M, N, p = params.n_regimes, params.n_channels, params.lag
    lags = [data[-l] for l in range(1, p + 1)]  # lags[k] = y_{T-k}
    weights = np.empty((horizon, M))
    means = np.empty((horizon, M, N))
    covs = np.empty((horizon, M, N, N))
    point = np.empty((horizon, N))

    F = [companion_matrix(params, m) for m in range(M)]
    sig = [np.zeros_like(F[m]) for m in range(M)]
    for m in range(M):
        sig[m][:N, :N] = params.covariances[m]
    V = [np.zeros_like(F[m]) for m in range(M)]

    w = xi_T.copy()
    for h in range(horizon):
        w = params.transition.T @ w
        weights[h] = w
        for m in range(M):
            mean = params.intercepts[m].copy()
            for l in range(1, p + 1):
                mean += params.coeffs[m, l - 1] @ lags[l - 1]
            means[h, m] = mean
            V[m] = sig[m] + F[m] @ V[m] @ F[m].T
            covs[h, m] = V[m][:N, :N]
        point[h] = weights[h] @ means[h]
        if p > 0:
            lags = [point[h]] + lags[: p - 1]
    return weights, means, covs, point


def _exact_mixture(data, params, horizon, xi_T):
    M, N, p = params.n_regimes, params.n_channels, params.lag
    nc = N * max(p, 1)
    F = [companion_matrix(params, m) for m in range(M)]
    sig = []
    for m in range(M):
        s = np.zeros((nc, nc))
        s[:N, :N] = params.covariances[m]
        sig.append(s)

    # path state: (log-free prob, terminal regime, lag stack, companion covariance)
    init_lags = [data[-l] for l in range(1, p + 1)]
    paths = [(float(xi_T[i]), i, list(init_lags), np.zeros((nc, nc))) for i in range(M)]
    # the initial entries carry the regime at time T; branch into time T+1..T+h
    weights = np.empty((horizon, M))
    means = np.empty((horizon, M, N))
    covs = np.empty((horizon, M, N, N))
    point = np.empty((horizon, N))

    for h in range(horizon):
        new_paths = []
        for prob, last, lags, V in paths:
            for j in range(M):
                pj = prob * params.transition[last, j]
                if pj == 0.0:
                    continue
                mean = params.intercepts[j].copy()
                for l in range(1, p + 1):
                    mean += params.coeffs[j, l - 1] @ lags[l - 1]
                Vj = sig[j] + F[j] @ V @ F[j].T
                nl = [mean] + lags[: p - 1] if p > 0 else []
                new_paths.append((pj, j, nl, Vj, mean))
        # group by terminal regime with moment matching
        for j in range(M):
            group = [q for q in new_paths if q[1] == j]
            wj = sum(q[0] for q in group)
            weights[h, j] = wj
            if wj == 0.0:
                means[h, j] = 0.0
                covs[h, j] = params.covariances[j]
                continue
            mu = sum(q[0] * q[4] for q in group) / wj
            means[h, j] = mu
            second = sum(q[0] * (q[3][:N, :N] + np.outer(q[4] - mu, q[4] - mu)) for q in group) / wj
            covs[h, j] = second
        point[h] = weights[h] @ means[h]
        paths = [(q[0], q[1], q[2], q[3]) for q in new_paths]
    return weights, means, covs, point


def _mixture_intervals(weights, means, covs, level):
    H, M, N = means.shape
    lo_q = 0.5 * (1.0 - level)
    hi_q = 1.0 - lo_q
    out = np.empty((H, N, 2))
    for h in range(H):
        for c in range(N):
            mus = means[h, :, c]
            sds = np.sqrt(np.maximum(covs[h, :, c, c], 1e-300))
            w = weights[h]
            out[h, c, 0] = _mixture_quantile(w, mus, sds, lo_q)
            out[h, c, 1] = _mixture_quantile(w, mus, sds, hi_q)
    return out


def _mixture_quantile(w, mus, sds, q):
    def cdf(x):
        return float(np.dot(w, ndtr((x - mus) / sds)))

    lo = float(np.min(mus - 10.0 * sds))
    hi = float(np.max(mus + 10.0 * sds))
    if cdf(lo) > q:
        return lo
    if cdf(hi) < q:
        return hi
    return float(brentq(lambda x: cdf(x) - q, lo, hi, xtol=1e-10))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def table_order(channels: Sequence[str]) -> list[str]:
    """Report order (a, dv, h, v) when those are exactly the channels."""
    if set(channels) == set(TABLE_CHANNEL_ORDER):
        return list(TABLE_CHANNEL_ORDER)
    return list(channels)


def evaluate_mse(fc: Forecast, actual_tail: np.ndarray, channels: Optional[Sequence[str]] = None) -> dict:
    """Per-channel mean squared point-forecast error across all horizons."""
    channels = tuple(channels) if channels is not None else fc.channels
    actual = np.asarray(actual_tail, dtype=float)
    if actual.shape != fc.point.shape:
        raise ConfigError(f"actual tail shape {actual.shape} != forecast shape {fc.point.shape}")
    if tuple(channels) != fc.channels:
        raise ConfigError(f"channel mismatch: {channels} vs forecast {fc.channels}")
    err = (actual - fc.point) ** 2
    per_channel = err.mean(axis=0)
    return {ch: float(per_channel[fc.channels.index(ch)]) for ch in table_order(fc.channels)}


def compare_models(
    series,
    models: Sequence[tuple[str, ModelParams, Optional[ModelSpec]]],
    horizon: int,
) -> list[dict]:
    """Hold out the final `horizon` rows, forecast each model on the prefix,
    and tabulate per-channel MSE; rows are ranked by total MSE."""
    if len(models) < 2:
        raise ConfigError("need at least two models to compare")
    data = series.data if isinstance(series, ObservationSeries) else np.asarray(series, dtype=float)
    channels = (
        series.channels
        if isinstance(series, ObservationSeries)
        else tuple(f"y{i + 1}" for i in range(data.shape[1]))
    )
    max_lag = max((m[1].lag for m in models), default=1)
    if horizon >= data.shape[0] - max_lag:
        raise ConfigError(f"horizon {horizon} leaves no estimation prefix")
    prefix, tail = data[:-horizon], data[-horizon:]
    rows = []
    for name, params, spec in models:
        fc = forecast(
            ObservationSeries(
                channels=channels,
                data=prefix,
                sample_interval=getattr(series, "sample_interval", 1.0),
            ),
            params,
            horizon,
            spec=spec,
            interval_level=None,
        )
        mse = evaluate_mse(fc, tail)
        rows.append({"model": name, "mse": mse, "total": float(sum(mse.values()))})
    rows.sort(key=lambda r: r["total"])
    return rows


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def write_forecast_csv(path, fc: Forecast) -> None:
    """CSV `h,channel,point,lo,hi` (lo/hi empty without intervals)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("h,channel,point,lo,hi\n")
        for h in range(fc.horizon):
            for c, ch in enumerate(fc.channels):
                lo = repr(float(fc.intervals[h, c, 0])) if fc.intervals is not None else ""
                hi = repr(float(fc.intervals[h, c, 1])) if fc.intervals is not None else ""
                fh.write(f"{h + 1},{ch},{float(fc.point[h, c])!r},{lo},{hi}\n")


def forecast_to_dict(fc: Forecast) -> dict:
    out = {
        "horizon": fc.horizon,
        "channels": list(fc.channels),
        "weights": fc.weights.tolist(),
        "means": fc.means.tolist(),
        "covariances": fc.covariances.tolist(),
        "point": fc.point.tolist(),
    }
    if fc.intervals is not None:
        out["intervals"] = fc.intervals.tolist()
        out["interval_level"] = fc.interval_level
    return out


def write_forecast_json(path, fc: Forecast) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(forecast_to_dict(fc), fh, indent=2)
        fh.write("\n")


def write_mse_csv(path, rows: list[dict], channels: Sequence[str]) -> None:
    """Comparison table: one row per model, one column per channel."""
    order = table_order(channels)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model," + ",".join(order) + ",total\n")
        for row in rows:
            cells = ",".join(repr(row["mse"][ch]) for ch in order)
            fh.write(f"{row['model']},{cells},{row['total']!r}\n")
