"""Model-order search over lag and regime count, scored by AIC/BIC/HQC.

All cells of a grid are estimated on the same trimmed sample (the first
max-lag rows are dropped for every cell) so the maximized log likelihoods are
directly comparable.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dataio import ObservationSeries
from .em import EmConfig, FitResult, fit_em
from .errors import ConfigError, MsvarError
from .model import ModelSpec, param_count


def criteria(log_lik: float, k: int, t_eff: float) -> dict[str, float]:
    """Standard information criteria: AIC, BIC, HQC."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    if t_eff <= 0:
        raise ConfigError("t_eff must be positive")
    if t_eff <= math.e:
        raise ConfigError(f"HQC undefined for t_eff={t_eff} (needs t_eff > e)")
    return {
        "aic": 2.0 * k - 2.0 * log_lik,
        "bic": k * math.log(t_eff) - 2.0 * log_lik,
        "hqc": 2.0 * k * math.log(math.log(t_eff)) - 2.0 * log_lik,
    }


@dataclass
class GridCell:
    lag: int
    n_regimes: int
    status: str = "pending"  # "ok" | "failed:<reason>"
    log_lik: Optional[float] = None
    k: Optional[int] = None
    aic: Optional[float] = None
    bic: Optional[float] = None
    hqc: Optional[float] = None
    converged: Optional[bool] = None
    warning: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SelectionGrid:
    cells: list[GridCell]
    lag_range: tuple[int, ...]
    regime_range: tuple[int, ...]
    t_eff: int
    warnings: list[str] = field(default_factory=list)

    def cell(self, lag: int, n_regimes: int) -> GridCell:
        for c in self.cells:
            if c.lag == lag and c.n_regimes == n_regimes:
                return c
        raise KeyError((lag, n_regimes))

    def best(self, criterion: str = "bic") -> GridCell:
        ok = [c for c in self.cells if c.ok]
        if not ok:
            raise MsvarError("no grid cell fitted successfully")
        if criterion == "loglik":
            return max(ok, key=lambda c: (c.log_lik, -c.lag, -c.n_regimes))
        if criterion not in ("aic", "bic", "hqc"):
            raise ConfigError(f"unknown criterion {criterion!r}")
        return min(ok, key=lambda c: (getattr(c, criterion), c.lag, c.n_regimes))


def _spec_for(template: ModelSpec, lag: int, n_regimes: int) -> ModelSpec:
    if n_regimes == 1:
        # switching flags are meaningless with one regime; keep the structure flags
        return replace(template, lag=lag, n_regimes=1)
    return replace(template, lag=lag, n_regimes=n_regimes)


def grid_search(
    series,
    lag_range: Sequence[int],
    regime_range: Sequence[int],
    spec_template: ModelSpec,
    em_config: Optional[EmConfig] = None,
    jobs: int = 1,
) -> SelectionGrid:
    """Fit every (lag, regimes) cell by EM and score it.

    Individual cell failures are recorded in the cell status; the grid always
    completes. Cells are seeded deterministically from the EM config seed, so
    results do not depend on the worker count.
    """
    lag_range = tuple(sorted(set(int(p) for p in lag_range)))
    regime_range = tuple(sorted(set(int(m) for m in regime_range)))
    if not lag_range or not regime_range:
        raise ConfigError("empty lag or regime range")
    if min(lag_range) < 0 or min(regime_range) < 1:
        raise ConfigError("lags must be >= 0 and regimes >= 1")
    em_config = em_config or EmConfig()
    if spec_template.regression_mode is not None and lag_range != (1,):
        raise ConfigError("regression mode fixes the lag at 1; grid over regimes only")

    data = series.data if isinstance(series, ObservationSeries) else np.asarray(series, dtype=float)
    max_lag = max(lag_range) if spec_template.regression_mode is None else 1
    t_eff = data.shape[0] - max_lag
    if t_eff <= math.e:
        raise ConfigError("series too short for information criteria on this grid")

    tasks = [(lag, m) for lag in lag_range for m in regime_range]
    children = np.random.SeedSequence(em_config.seed).spawn(len(tasks))

    def run(idx: int) -> GridCell:
        lag, m = tasks[idx]
        cell = GridCell(lag=lag, n_regimes=m)
        try:
            spec = _spec_for(spec_template, lag, m)
            trimmed = data[max_lag - spec.effective_lag :]
            cfg = replace(em_config, seed=int(children[idx].generate_state(1, np.uint64)[0]))
            fit = fit_em(trimmed, spec, cfg)
            cell.log_lik = fit.log_likelihood
            cell.k = param_count(spec)
            scores = criteria(cell.log_lik, cell.k, t_eff)
            cell.aic, cell.bic, cell.hqc = scores["aic"], scores["bic"], scores["hqc"]
            cell.converged = fit.converged
            if fit.warnings:
                cell.warning = "; ".join(fit.warnings)
            cell.status = "ok"
        except MsvarError as exc:
            cell.status = f"failed:{exc}"
        return cell

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(run, range(len(tasks))))
    else:
        cells = [run(i) for i in range(len(tasks))]

    grid = SelectionGrid(
        cells=cells,
        lag_range=lag_range,
        regime_range=regime_range,
        t_eff=t_eff,
    )
    _attach_monotonicity_warnings(grid)
    return grid


def _attach_monotonicity_warnings(grid: SelectionGrid) -> None:
    """More regimes should not lose likelihood on the same sample (up to EM
    local optima); flag cells that fall more than 1e-6 below their M-1 peer."""
    for lag in grid.lag_range:
        prev = None
        for m in grid.regime_range:
            try:
                cell = grid.cell(lag, m)
            except KeyError:
                continue
            if cell.ok and prev is not None and prev.ok:
                if cell.log_lik < prev.log_lik - 1e-6:
                    cell.warning = (
                        f"log-likelihood below the {prev.n_regimes}-regime fit; "
                        "likely an EM local optimum"
                    )
                    grid.warnings.append(f"cell (p={lag}, M={m}): {cell.warning}")
            prev = cell


def lag_curve(
    series,
    lag_range: Sequence[int],
    n_regimes: int,
    spec_template: ModelSpec,
    em_config: Optional[EmConfig] = None,
    jobs: int = 1,
) -> SelectionGrid:
    """Criteria across lags at a fixed regime count (plot-ready)."""
    return grid_search(series, lag_range, [n_regimes], spec_template, em_config, jobs=jobs)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def write_grid_csv(path, grid: SelectionGrid) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("p,M,loglik,aic,bic,hqc,k,status\n")
        for c in sorted(grid.cells, key=lambda c: (c.lag, c.n_regimes)):
            if c.ok:
                fh.write(
                    f"{c.lag},{c.n_regimes},{c.log_lik!r},{c.aic!r},{c.bic!r},"
                    f"{c.hqc!r},{c.k},ok\n"
                )
            else:
                fh.write(f"{c.lag},{c.n_regimes},,,,,,{c.status}\n")


def write_lag_curve_csv(path, grid: SelectionGrid, criterion: str) -> None:
    if criterion not in ("aic", "bic", "hqc"):
        raise ConfigError(f"unknown criterion {criterion!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"p,{criterion}\n")
        for c in sorted(grid.cells, key=lambda c: c.lag):
            if c.ok:
                fh.write(f"{c.lag},{getattr(c, criterion)!r}\n")
            else:
                fh.write(f"{c.lag},\n")


def write_best_json(path, grid: SelectionGrid, criterion: str = "bic") -> None:
    best = grid.best(criterion)
    payload = {
        "criterion": criterion,
        "lag": best.lag,
        "n_regimes": best.n_regimes,
        "log_lik": best.log_lik,
        "aic": best.aic,
        "bic": best.bic,
        "hqc": best.hqc,
        "k": best.k,
        "t_eff": grid.t_eff,
        "warnings": grid.warnings,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
