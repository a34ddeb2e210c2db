"""Regime inference for fixed parameters: filtering, smoothing, classification.

The forward filter runs in scaled linear space with per-step normalization,
accumulating log normalizers for the likelihood (underflow floors at 1e-300
escalate to NumericalError rather than propagating NaN). The smoother is the
single backward recursion

    P(s_t | Y_T) = sum_{s_{t+1}} P(s_{t+1}|s_t) P(s_t|Y_t) / P(s_{t+1}|Y_t) * P(s_{t+1}|Y_T)

anchored at the last filtered row. Probability tables cover the effective
sample only: row k is series row ``offset + k`` where offset is the model's
effective lag (the conditioning rows carry no probabilities).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels
from .dataio import ObservationSeries
from .errors import NumericalError
from .model import ModelParams, ModelSpec, infer_spec, log_density_table

_STEPS_PER_ROW_SUM = 1e-10


@dataclass(frozen=True)
class RegimeProbabilities:
    """Filtered/predicted (and optionally smoothed) regime probabilities.

    All tables have shape (T_eff, M) with T_eff = T - offset;
    pairwise_smoothed[k] is the joint Pr(s at row k, s at row k+1 | all data).
    """

    filtered: np.ndarray
    predicted: np.ndarray
    log_likelihood: float
    offset: int
    smoothed: Optional[np.ndarray] = None
    pairwise_smoothed: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return self.filtered.shape[0]

    @property
    def n_regimes(self) -> int:
        return self.filtered.shape[1]


def _series_data(series) -> np.ndarray:
    return series.data if isinstance(series, ObservationSeries) else np.asarray(series, dtype=float)


def hamilton_filter(series, params: ModelParams, spec: Optional[ModelSpec] = None) -> RegimeProbabilities:
    """Forward filter over the effective sample; also yields the log likelihood."""
    spec = spec or infer_spec(params)
    data = _series_data(series)
    table = log_density_table(data, params, spec)
    predicted, filtered, loglik, fail_t = _kernels.filter_forward(
        np.ascontiguousarray(table),
        np.ascontiguousarray(params.transition),
        np.ascontiguousarray(params.initial_dist),
    )
    if fail_t >= 0:
        raise NumericalError(
            f"all regime densities underflowed at effective step {fail_t} "
            f"(series row {fail_t + spec.effective_lag})"
        )
    return RegimeProbabilities(
        filtered=filtered,
        predicted=predicted,
        log_likelihood=float(loglik),
        offset=spec.effective_lag,
    )


def smooth(probs: RegimeProbabilities, params: ModelParams) -> RegimeProbabilities:
    """Backward smoothing pass; returns a copy with smoothed and pairwise tables."""
    smoothed, pairwise, n_floored = _kernels.smooth_backward(
        np.ascontiguousarray(probs.predicted),
        np.ascontiguousarray(probs.filtered),
        np.ascontiguousarray(params.transition),
    )
    if n_floored:
        warnings.warn(
            f"smoother clamped {n_floored} predicted probabilities at the underflow floor"
        )
    return replace(probs, smoothed=smoothed, pairwise_smoothed=pairwise)


def filter_smooth(series, params: ModelParams, spec: Optional[ModelSpec] = None) -> RegimeProbabilities:
    return smooth(hamilton_filter(series, params, spec), params)


def classify(smoothed: np.ndarray) -> np.ndarray:
    """Hard assignment: argmax regime per row, ties broken by lowest index."""
    return np.argmax(np.asarray(smoothed), axis=1)


def expected_duration(transition: np.ndarray, regime: int) -> float:
    """Mean dwell time 1/(1 - P_ii) in steps; inf when P_ii = 1."""
    p_stay = float(np.asarray(transition)[regime, regime])
    if p_stay >= 1.0:
        return float("inf")
    return 1.0 / (1.0 - p_stay)


def duration_pmf(transition: np.ndarray, regime: int, k: int) -> float:
    """Geometric dwell distribution Pr(D = k) = P_ii^(k-1) (1 - P_ii), k >= 1."""
    if k < 1:
        return 0.0
    p_stay = float(np.asarray(transition)[regime, regime])
    return p_stay ** (k - 1) * (1.0 - p_stay)


@dataclass(frozen=True)
class RegimeReport:
    """Per-regime summary: dwell time, run counts, occupancy."""

    n_regimes: int
    n_steps: int
    sample_interval: Optional[float]
    expected_duration_steps: np.ndarray
    occurrences: np.ndarray
    observations: np.ndarray
    percentages: np.ndarray

    def to_dict(self) -> dict:
        rows = []
        for m in range(self.n_regimes):
            row = {
                "regime": m + 1,
                "expected_duration_steps": float(self.expected_duration_steps[m]),
                "occurrence": int(self.occurrences[m]),
                "observations": int(self.observations[m]),
                "percentage": float(self.percentages[m]),
            }
            if self.sample_interval is not None:
                row["expected_duration_seconds"] = (
                    float(self.expected_duration_steps[m]) * self.sample_interval
                )
            rows.append(row)
        out = {"n_steps": self.n_steps, "regimes": rows}
        if self.sample_interval is not None:
            out["sample_interval"] = self.sample_interval
            out["duration_note"] = (
                "expected durations are in filter steps; multiply by sample_interval "
                "for seconds"
            )
        return out


def regime_report(
    classification: np.ndarray,
    transition: np.ndarray,
    sample_interval: Optional[float] = None,
) -> RegimeReport:
    """Table of regime characteristics from a hard classification.

    occurrence counts maximal constant runs of each regime; observations is
    the total number of classified steps; percentage is observations over the
    effective sample size.
    """
    classification = np.asarray(classification, dtype=int)
    M = np.asarray(transition).shape[0]
    T_eff = len(classification)
    observations = np.bincount(classification, minlength=M)[:M]
    occurrences = np.zeros(M, dtype=int)
    if T_eff:
        occurrences[classification[0]] += 1
        changes = classification[1:][classification[1:] != classification[:-1]]
        for s in changes:
            occurrences[s] += 1
    durations = np.array([expected_duration(transition, m) for m in range(M)])
    percentages = 100.0 * observations / max(T_eff, 1)
    return RegimeReport(
        n_regimes=M,
        n_steps=T_eff,
        sample_interval=sample_interval,
        expected_duration_steps=durations,
        occurrences=occurrences,
        observations=observations,
        percentages=percentages,
    )


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def write_probabilities_csv(path, probs: RegimeProbabilities, classification=None) -> None:
    """CSV export `t,regime,xi_1..xi_M` of the smoothed (or filtered) table."""
    table = probs.smoothed if probs.smoothed is not None else probs.filtered
    if classification is None:
        classification = classify(table)
    M = probs.n_regimes
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,regime," + ",".join(f"xi_{m + 1}" for m in range(M)) + "\n")
        for k in range(probs.n_steps):
            cells = ",".join(repr(float(x)) for x in table[k])
            fh.write(f"{probs.offset + k},{int(classification[k]) + 1},{cells}\n")


def write_report_json(path, report: RegimeReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
