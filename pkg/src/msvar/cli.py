"""Command-line pipeline: ingest, simulate, fit, classify, report, forecast, select.

Every run is driven by flags plus an optional TOML config (flags win), is
deterministic under a fixed seed (CLI --seed, else the REGIME_SWITCH_SEED
environment variable, else 0), and writes a manifest.json recording the
resolved configuration, input checksums, and tool version next to its
outputs. Machine-readable files carry full 17-significant-digit floats;
console summaries print 4.

Exit codes: 0 success, 2 input or configuration error, 3 non-convergence
(artifacts are still written), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .dataio import (
    AlignConfig,
    ObservationSeries,
    ingest_fcd_csv,
    ingest_smartphone_pair,
    read_series,
    series_violations,
    write_series,
)
from .em import EmConfig, fit_em
from .errors import ConfigError, IngestionError, InsufficientDataError, MsvarError, NumericalError
from .forecast import (
    compare_models,
    evaluate_mse,
    forecast as run_forecast,
    table_order,
    write_forecast_csv,
    write_forecast_json,
    write_mse_csv,
)
from .gibbs import GibbsConfig, fit_gibbs, write_summary_json
from .inference import (
    classify,
    filter_smooth,
    regime_report,
    write_probabilities_csv,
    write_report_json,
)
from .model import ModelSpec, RegressionMode, load_model, save_model
from .selection import grid_search, write_best_json, write_grid_csv, write_lag_curve_csv
from .simulate import simulate, write_states_csv

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_NUMERICAL = 4

SEED_ENV_VAR = "REGIME_SWITCH_SEED"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_config(path):
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


class Run:
    """Resolved options for one subcommand plus manifest bookkeeping."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))
        self.resolved: dict = {}
        self.inputs: dict[str, str] = {}
        self.out = Path(self.get("out", "."))
        self.out.mkdir(parents=True, exist_ok=True)

    def get(self, key: str, default=None):
        flag = getattr(self.args, key, None)
        value = flag if flag is not None else self.config.get(key, default)
        self.resolved[key] = value
        return value

    def seed(self) -> int:
        value = self.get("seed")
        if value is None:
            env = os.environ.get(SEED_ENV_VAR)
            value = int(env) if env else 0
        self.resolved["seed"] = int(value)
        return int(value)

    def track_input(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise IngestionError(f"input file not found: {path}")
        self.inputs[str(path)] = _sha256(path)
        return path

    def write_manifest(self, subcommand: str) -> None:
        manifest = {
            "tool": "msvar",
            "version": __version__,
            "subcommand": subcommand,
            "argv": sys.argv[1:],
            "resolved": {k: v for k, v in sorted(self.resolved.items())},
            "inputs": self.inputs,
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")


def _parse_range(text: str) -> list[int]:
    """Accept '3', '1..5', or '1,3,5'."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in text:
        return [int(x) for x in text.split(",") if x.strip()]
    return [int(text)]


def _spec_from_run(run: Run, series: ObservationSeries, lag: int, regimes: int) -> ModelSpec:
    regression_target = run.get("regression_target")
    rm = None
    if regression_target is not None:
        inputs = run.get("regression_inputs")
        if not inputs:
            raise ConfigError("--regression-target needs --regression-inputs")
        names = [s.strip() for s in str(inputs).split(",") if s.strip()]
        rm = RegressionMode(
            target=series.channel_index(str(regression_target)),
            regressors=tuple(series.channel_index(n) for n in names),
            intercept=bool(run.get("regression_intercept", False)),
        )
        lag = 1
    return ModelSpec(
        n_channels=series.n_channels,
        n_regimes=regimes,
        lag=lag,
        switch_intercept=not bool(run.get("no_switch_intercept", False)),
        switch_coeffs=not bool(run.get("no_switch_coeffs", False)),
        switch_cov=not bool(run.get("no_switch_cov", False)),
        diagonal_var=bool(run.get("diagonal_var", False)),
        regression_mode=rm,
    )


def _print_series_summary(series: ObservationSeries, flags: list[str]) -> None:
    print(
        f"series: {series.n_rows} rows x {series.n_channels} channels "
        f"({', '.join(series.channels)}) at {series.sample_interval:.4g}s"
    )
    for name in series.channels:
        col = series.channel(name)
        print(f"  {name}: mean {col.mean():.4g}, sd {col.std():.4g}, "
              f"min {col.min():.4g}, max {col.max():.4g}")
    for flag in flags:
        print(f"  note: {flag}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(run: Run) -> int:
    fmt = run.get("format")
    if fmt not in ("fcd", "smartphone"):
        raise ConfigError("--format must be fcd or smartphone")
    if fmt == "fcd":
        path = run.track_input(run.get("input"))
        schema = None
        schema_path = run.get("schema")
        if schema_path:
            schema_file = run.track_input(schema_path)
            if schema_file.suffix == ".json":
                schema = json.loads(schema_file.read_text())
            else:
                with open(schema_file, "rb") as fh:
                    schema = tomllib.load(fh)
        series = ingest_fcd_csv(path, schema)
        flags = series_violations(series)
    else:
        leader = run.track_input(run.get("leader"))
        follower = run.track_input(run.get("follower"))
        cfg = AlignConfig(
            tolerance=float(run.get("tolerance", 0.5)),
            rate=float(run.get("rate", 1.0)),
            smooth_window=int(run.get("smooth_window", 1)),
        )
        series, flags = ingest_smartphone_pair(leader, follower, cfg)
    write_series(series, run.out / "series.csv", run.out / "series.json")
    _print_series_summary(series, flags)
    run.write_manifest("ingest")
    return EXIT_OK


def cmd_simulate(run: Run) -> int:
    params, spec, _ = load_model(run.track_input(run.get("model")))
    if spec.regression_mode is not None:
        raise ConfigError("cannot simulate from a switching-regression model")
    out = simulate(
        params,
        int(run.get("rows", 1000)),
        seed=run.seed(),
        burn_in=int(run.get("burn_in", 100)),
    )
    write_series(out.series, run.out / "series.csv", run.out / "series.json")
    write_states_csv(run.out / "true_states.csv", out.true_states)
    _print_series_summary(out.series, [])
    run.write_manifest("simulate")
    return EXIT_OK


def _load_series(run: Run) -> ObservationSeries:
    csv_path = run.track_input(run.get("input"))
    meta = csv_path.with_suffix(".json")
    if meta.exists():
        run.track_input(meta)
    return read_series(csv_path, meta if meta.exists() else None)


def cmd_fit(run: Run) -> int:
    series = _load_series(run)
    method = run.get("method", "em")
    spec = _spec_from_run(
        run, series, int(run.get("lags", 1)), int(run.get("regimes", 2))
    )
    seed = run.seed()
    violations = series_violations(series)
    if violations:
        raise IngestionError("; ".join(violations))

    exit_code = EXIT_OK
    if method == "em":
        cfg = EmConfig(
            max_iters=int(run.get("max_iters", 500)),
            rel_tol=float(run.get("tol", 1e-8)),
            n_restarts=int(run.get("restarts", 5)),
            seed=seed,
            init_strategy=str(run.get("init", "kmeans")),
        )
        fit = fit_em(series, spec, cfg)
        trace_payload = {
            "log_likelihoods": fit.trace.log_likelihoods,
            "n_iters": fit.trace.n_iters,
            "converged": fit.trace.converged,
            "restart": fit.trace.restart,
            "restart_final_logliks": fit.trace.restart_final_logliks,
            "warnings": fit.warnings,
        }
        with open(run.out / "trace.json", "w", encoding="utf-8") as fh:
            json.dump(trace_payload, fh, indent=2)
            fh.write("\n")
        if not fit.converged:
            exit_code = EXIT_NONCONVERGED
    elif method == "gibbs":
        cfg = GibbsConfig(
            n_samples=int(run.get("samples", 5000)),
            burn_in=int(run.get("burn_in", 1000)),
            thin=int(run.get("thin", 2)),
            seed=seed,
        )
        samples, fit = fit_gibbs(series, spec, cfg)
        samples.write_chain_csv(run.out / "chain.csv")
        write_summary_json(run.out / "chain_summary.json", samples)
    else:
        raise ConfigError(f"unknown method {method!r}")

    metadata = {
        "fit_method": method,
        "log_likelihood": fit.log_likelihood,
        "data_fingerprint": next(iter(run.inputs.values())),
        "converged": fit.converged,
        "channels": list(series.channels),
        "sample_interval": series.sample_interval,
    }
    save_model(run.out / "model.json", fit.params, spec, metadata)
    write_probabilities_csv(run.out / "regimes.csv", fit.probs, fit.classification)
    report = regime_report(fit.classification, fit.params.transition, series.sample_interval)
    write_report_json(run.out / "report.json", report)

    print(f"method: {method}  log-likelihood: {fit.log_likelihood:.4g}  "
          f"converged: {fit.converged}")
    for row in report.to_dict()["regimes"]:
        print(
            f"  regime {row['regime']}: duration {row['expected_duration_steps']:.4g} steps, "
            f"occurrence {row['occurrence']}, observations {row['observations']}, "
            f"{row['percentage']:.4g}%"
        )
    run.write_manifest("fit")
    return exit_code


def _load_fitted(run: Run, key: str):
    params, spec, metadata = load_model(run.track_input(run.get(key)))
    return params, spec, metadata


def cmd_classify(run: Run) -> int:
    series = _load_series(run)
    params, spec, _ = _load_fitted(run, "model")
    probs = filter_smooth(series, params, spec)
    labels = classify(probs.smoothed)
    write_probabilities_csv(run.out / "regimes.csv", probs, labels)
    print(f"classified {probs.n_steps} rows; log-likelihood {probs.log_likelihood:.4g}")
    run.write_manifest("classify")
    return EXIT_OK


def cmd_report(run: Run) -> int:
    series = _load_series(run)
    params, spec, _ = _load_fitted(run, "model")
    probs = filter_smooth(series, params, spec)
    labels = classify(probs.smoothed)
    report = regime_report(labels, params.transition, series.sample_interval)
    write_report_json(run.out / "report.json", report)
    write_probabilities_csv(run.out / "regimes.csv", probs, labels)
    for row in report.to_dict()["regimes"]:
        print(
            f"regime {row['regime']}: duration {row['expected_duration_steps']:.4g} steps"
            + (
                f" ({row['expected_duration_seconds']:.4g}s)"
                if "expected_duration_seconds" in row
                else ""
            )
            + f", occurrence {row['occurrence']}, observations {row['observations']}, "
            f"{row['percentage']:.4g}%"
        )
    run.write_manifest("report")
    return EXIT_OK


def cmd_forecast(run: Run) -> int:
    series = _load_series(run)
    params, spec, _ = _load_fitted(run, "model")
    steps = int(run.get("steps", 9))
    if steps >= series.n_rows - spec.effective_lag:
        raise ConfigError(f"--steps {steps} exceeds the available holdout")
    level = run.get("level", 0.9)
    level = float(level) if level is not None else None
    exact = bool(run.get("exact", False))

    compare_path = run.get("compare")
    prefix = series.head(series.n_rows - steps)
    tail = series.data[-steps:]

    fc = run_forecast(prefix, params, steps, spec=spec, interval_level=level, exact=exact)
    write_forecast_csv(run.out / "forecast.csv", fc)
    write_forecast_json(run.out / "forecast.json", fc)

    if compare_path:
        params2, spec2, _ = load_model(run.track_input(compare_path))
        rows = compare_models(
            series,
            [("model_1", params, spec), ("model_2", params2, spec2)],
            steps,
        )
    else:
        rows = [{"model": "model_1", "mse": evaluate_mse(fc, tail), "total": None}]
        rows[0]["total"] = float(sum(rows[0]["mse"].values()))
    write_mse_csv(run.out / "mse.csv", rows, series.channels)

    if run.get("emit_plot_data", False):
        with open(run.out / "plot_data.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("h,channel,observed,predicted\n")
            for h in range(steps):
                for c, ch in enumerate(series.channels):
                    fh.write(f"{h + 1},{ch},{float(tail[h, c])!r},{float(fc.point[h, c])!r}\n")

    order = table_order(series.channels)
    print("per-channel MSE over", steps, "steps:")
    for row in rows:
        cells = "  ".join(f"{ch}={row['mse'][ch]:.4g}" for ch in order)
        print(f"  {row['model']}: {cells}")
    run.write_manifest("forecast")
    return EXIT_OK


def cmd_select(run: Run) -> int:
    series = _load_series(run)
    lags = _parse_range(str(run.get("lags", "1..5")))
    regimes = _parse_range(str(run.get("regimes", "2..6")))
    spec_template = _spec_from_run(run, series, max(lags), max(regimes))
    seed = run.seed()
    cfg = EmConfig(
        max_iters=int(run.get("max_iters", 200)),
        rel_tol=float(run.get("tol", 1e-7)),
        n_restarts=int(run.get("restarts", 2)),
        seed=seed,
    )
    jobs = run.get("jobs")
    jobs = int(jobs) if jobs is not None else (os.cpu_count() or 1)
    grid = grid_search(series, lags, regimes, spec_template, cfg, jobs=jobs)
    criterion = str(run.get("criterion", "bic"))

    write_grid_csv(run.out / "grid.csv", grid)
    write_best_json(run.out / "best.json", grid, criterion)
    if len(regimes) == 1:
        for crit in ("aic", "bic", "hqc"):
            write_lag_curve_csv(run.out / f"lag_curve_{crit}.csv", grid, crit)

    best = grid.best(criterion)
    best_spec = _spec_from_run(run, series, best.lag, best.n_regimes)
    refit = fit_em(series, best_spec, cfg)
    save_model(
        run.out / "best_model.json",
        refit.params,
        best_spec,
        {
            "fit_method": "em",
            "log_likelihood": refit.log_likelihood,
            "data_fingerprint": next(iter(run.inputs.values())),
            "selected_by": criterion,
        },
    )

    failed = [c for c in grid.cells if not c.ok]
    print(f"grid: {len(grid.cells)} cells, {len(failed)} failed; "
          f"best by {criterion}: p={best.lag}, M={best.n_regimes} "
          f"({criterion}={getattr(best, criterion):.4g})")
    for c in failed:
        print(f"  failed cell p={c.lag} M={c.n_regimes}: {c.status}")
    run.write_manifest("select")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msvar",
        description="Markov-switching VAR toolkit for car-following driver behavior",
    )
    parser.add_argument("--version", action="version", version=f"msvar {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file; flags override its keys")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--seed", type=int, help=f"RNG seed (falls back to ${SEED_ENV_VAR}, then 0)")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("ingest", help="convert raw logs to the canonical series format")
    p.add_argument("--format", choices=["fcd", "smartphone"])
    p.add_argument("--input", help="FCD CSV path (fcd format)")
    p.add_argument("--schema", help="TOML/JSON column mapping for fcd input")
    p.add_argument("--leader", help="leader sensor log (smartphone format)")
    p.add_argument("--follower", help="follower sensor log (smartphone format)")
    p.add_argument("--tolerance", type=float, help="join tolerance in seconds (default 0.5)")
    p.add_argument("--rate", type=float, help="resample rate in Hz (default 1)")
    p.add_argument("--smooth-window", dest="smooth_window", type=int,
                   help="moving-average window for GPS noise (default 1 = off)")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="generate synthetic data from a model file")
    p.add_argument("--model", help="model JSON with generating parameters")
    p.add_argument("--rows", type=int, help="number of rows to keep (default 1000)")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="discarded warmup rows (default 100)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    def structure(p):
        p.add_argument("--no-switch-intercept", dest="no_switch_intercept", action="store_const", const=True)
        p.add_argument("--no-switch-coeffs", dest="no_switch_coeffs", action="store_const", const=True)
        p.add_argument("--no-switch-cov", dest="no_switch_cov", action="store_const", const=True)
        p.add_argument("--diagonal-var", dest="diagonal_var", action="store_const", const=True,
                       help="restrict each channel to its own lags")
        p.add_argument("--regression-target", dest="regression_target",
                       help="switching-regression mode: channel to predict one step ahead")
        p.add_argument("--regression-inputs", dest="regression_inputs",
                       help="comma-separated regressor channels")
        p.add_argument("--regression-intercept", dest="regression_intercept",
                       action="store_const", const=True)

    p = sub.add_parser("fit", help="estimate a model by EM or Gibbs sampling")
    p.add_argument("--input", help="canonical series CSV")
    p.add_argument("--method", choices=["em", "gibbs"])
    p.add_argument("--lags", type=int, help="VAR order p")
    p.add_argument("--regimes", type=int, help="number of regimes M")
    p.add_argument("--restarts", type=int, help="EM restarts (default 5)")
    p.add_argument("--max-iters", dest="max_iters", type=int, help="EM iteration cap (default 500)")
    p.add_argument("--tol", type=float, help="EM relative log-likelihood tolerance (default 1e-8)")
    p.add_argument("--init", choices=["kmeans", "random"], help="EM initialization strategy")
    p.add_argument("--samples", type=int, help="Gibbs sweeps (default 5000)")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="Gibbs burn-in (default 1000)")
    p.add_argument("--thin", type=int, help="Gibbs thinning (default 2)")
    structure(p)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("classify", help="classify regimes with a fitted model")
    p.add_argument("--model")
    p.add_argument("--input")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", help="regime characteristics table for a fitted model")
    p.add_argument("--model")
    p.add_argument("--input")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("forecast", help="holdout forecast and per-channel MSE")
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--steps", type=int, help="forecast horizon (default 9)")
    p.add_argument("--compare", help="second model JSON for a comparison table")
    p.add_argument("--exact", action="store_const", const=True,
                   help="exact regime-path enumeration (horizon <= 6)")
    p.add_argument("--level", type=float, help="central interval level (default 0.9)")
    p.add_argument("--emit-plot-data", dest="emit_plot_data", action="store_const", const=True,
                   help="write observed-vs-predicted tidy CSV")
    common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("select", help="grid search over lags and regime counts")
    p.add_argument("--input")
    p.add_argument("--lags", help="lag range, e.g. 1..5")
    p.add_argument("--regimes", help="regime range, e.g. 2..6")
    p.add_argument("--criterion", choices=["aic", "bic", "hqc", "loglik"])
    p.add_argument("--restarts", type=int, help="EM restarts per cell (default 2)")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--jobs", type=int, help="parallel cell fits (default: CPU count)")
    structure(p)
    common(p)
    p.set_defaults(func=cmd_select)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = Run(args)
        return args.func(run)
    except (IngestionError, ConfigError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, MsvarError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
