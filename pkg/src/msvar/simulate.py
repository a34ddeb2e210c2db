"""Synthetic data generation from known parameters, with ground-truth states.

Used throughout the test suite for parameter-recovery and selection studies;
also exposed on the CLI for building reproducible demo datasets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataio import ObservationSeries
from .errors import SimulationError
from .model import ModelParams, cholesky_with_ridge

_OVERFLOW_LIMIT = 1e12


@dataclass(frozen=True)
class SimOutput:
    series: ObservationSeries
    true_states: np.ndarray
    params: ModelParams


def companion_matrix(params: ModelParams, regime: int) -> np.ndarray:
    """Companion form of the regime's lag polynomial ((N*p) x (N*p))."""
    N, p = params.n_channels, params.lag
    if p == 0:
        return np.zeros((N, N))
    F = np.zeros((N * p, N * p))
    for l in range(p):
        F[:N, l * N : (l + 1) * N] = params.coeffs[regime, l]
    if p > 1:
        F[N:, : N * (p - 1)] = np.eye(N * (p - 1))
    return F


def spectral_check(params: ModelParams) -> list[bool]:
    """Per-regime stability: companion spectral radius < 1."""
    out = []
    for m in range(params.n_regimes):
        radius = float(np.max(np.abs(np.linalg.eigvals(companion_matrix(params, m)))))
        out.append(radius < 1.0)
    return out


def simulate(
    params: ModelParams,
    n_rows: int,
    seed=None,
    burn_in: int = 100,
    channels: Optional[Sequence[str]] = None,
    sample_interval: float = 1.0,
) -> SimOutput:
    """Draw a state path from the chain and observations from the regime VARs.

    The first state is drawn from the initial distribution; burn_in leading
    rows are generated and discarded to wash out the zero initialization of
    the lag window.
    """
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    M, N, p = params.n_regimes, params.n_channels, params.lag
    chol = [cholesky_with_ridge(params.covariances[m], label=f" of regime {m}") for m in range(M)]

    total = burn_in + n_rows
    states = np.empty(total, dtype=np.int64)
    data = np.zeros((total + p, N))
    states[0] = rng.choice(M, p=params.initial_dist / params.initial_dist.sum())
    trans = params.transition / params.transition.sum(axis=1, keepdims=True)
    for t in range(1, total):
        states[t] = rng.choice(M, p=trans[states[t - 1]])

    for t in range(total):
        m = states[t]
        mean = params.intercepts[m].copy()
        for l in range(1, p + 1):
            mean += params.coeffs[m, l - 1] @ data[p + t - l]
        draw = mean + chol[m] @ rng.standard_normal(N)
        if np.any(np.abs(draw) > _OVERFLOW_LIMIT):
            raise SimulationError(
                f"simulated values exceeded {_OVERFLOW_LIMIT:g} at step {t}; "
                "check coefficient stability with spectral_check()"
            )
        data[p + t] = draw

    series = ObservationSeries(
        channels=tuple(channels) if channels else tuple(f"y{i + 1}" for i in range(N)),
        data=data[p + burn_in :].copy(),
        sample_interval=sample_interval,
        t0=0.0,
        units={},
        source="simulate",
    )
    return SimOutput(series=series, true_states=states[burn_in:].copy(), params=params)


def simulate_given_states(
    params: ModelParams,
    states: np.ndarray,
    rng: np.random.Generator,
    init_rows: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Generate observations along a fixed regime path.

    Returns (p + len(states)) x N data whose first p rows are the lag
    initialization (zeros unless given); row p+k is drawn from regime
    states[k]. Used by the sampler-correctness tests.
    """
    states = np.asarray(states, dtype=int)
    M, N, p = params.n_regimes, params.n_channels, params.lag
    chol = [cholesky_with_ridge(params.covariances[m], label=f" of regime {m}") for m in range(M)]
    data = np.zeros((p + len(states), N))
    if init_rows is not None:
        data[:p] = init_rows
    for k, m in enumerate(states):
        mean = params.intercepts[m].copy()
        for l in range(1, p + 1):
            mean += params.coeffs[m, l - 1] @ data[p + k - l]
        data[p + k] = mean + chol[m] @ rng.standard_normal(N)
    return data


def write_states_csv(path, states: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,state\n")
        for t, s in enumerate(states):
            fh.write(f"{t},{int(s) + 1}\n")
