"""Command-line entry point.

    arrivalcast [--config FILE] [--threads N] [-v] COMMAND [flags]

Commands: ingest, fit, predict, backtest, price, importance, synth. Every
RunConfig key a command uses is also a flag (``--proximity-km 200``), and
flags override the config file. Outputs land in ``output_dir``:

    fit         models/<market>.json, fit_summary.json
    predict     predictions.csv
    backtest    backtest.csv, backtest.json, state_backtest.json
    price       price_forecast.csv, price_model.json, price_backtest.csv, price_mae.csv
    importance  importance.csv, cce_sites.geojson
    synth       ndvi.csv, arrivals.csv, prices.csv, groundtruth.json

Exit status is 0 on success, 2 on invalid input and 3 on numerical failure.
"""

from __future__ import annotations

import json
import logging
import sys
from argparse import ArgumentParser, Namespace
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import colorama
import numba
import numpy as np
import pandas as pd
from colorama import Fore, Style

from . import elastic_net, forecast_eval, insights, price_model, regpcr, spatial, synth
from .config import RunConfig, dump_config, field_types, load_config, parse_value
from .data_ingest import Dataset, LocationSeries, load_dataset, ndvi_matrix, shift_month, summarize
from .errors import ArrivalcastError, NumericalError, ValidationError
from .regpcr import DesignMatrix

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

DATA_KEYS = ("ndvi", "arrivals", "prices", "price_weighting", "output_dir")
SPATIAL_KEYS = (
    "markets",
    "proximity_km",
    "variance_percentile",
    "target_count",
    "radius_cells",
    "block_size_deg",
    "centroid_sampling",
)
SOLVER_KEYS = ("gamma", "lam", "n_lambdas", "tol", "max_sweeps", "cv_folds")
PIPELINE_KEYS = ("target_factors", "threshold", "window_start", "window_end")
BACKTEST_KEYS = ("initial_window", "steps", "methods", "refit", "external_predictions", "state_markets")
PRICE_KEYS = ("w", "d", "horizons", "select_decay", "price_steps")
IMPORTANCE_KEYS = ("initial_window", "n_cce", "min_spacing_km", "dominance")
SYNTH_KEYS = (
    "output_dir",
    "seed",
    "w",
    "d",
    "synth_months",
    "synth_grid_rows",
    "synth_grid_cols",
    "synth_markets",
    "synth_true_locations",
    "synth_noise_sigma",
    "synth_price_noise",
)
MODEL_KEYS = DATA_KEYS + SPATIAL_KEYS + SOLVER_KEYS + PIPELINE_KEYS


# Logging


class ColorFormatter(logging.Formatter):
    """Prefix records with a colored level name."""

    COLORS = {
        logging.DEBUG: Style.DIM,
        logging.INFO: Fore.CYAN,
        logging.WARNING: Fore.YELLOW,
        logging.ERROR: Fore.RED,
        logging.CRITICAL: Fore.RED + Style.BRIGHT,
    }

    def format(self, record: logging.LogRecord) -> str:  # noqa: D102
        color = self.COLORS.get(record.levelno, "")
        level = f"{color}{record.levelname.lower()}{Style.RESET_ALL}"
        return f"{level}: {record.getMessage()}"


def configure_logging(verbose: bool = False) -> None:
    """Send package logs to stderr through one colored handler."""
    colorama.just_fix_windows_console()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ColorFormatter())
    root = logging.getLogger("arrivalcast")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def set_threads(threads: Optional[int]) -> None:
    """Bound numba's parallel kernels to `threads` (default: all available)."""
    if threads is None:
        return
    if not 1 <= threads <= numba.config.NUMBA_NUM_THREADS:
        raise ValidationError(
            f"--threads must lie in [1, {numba.config.NUMBA_NUM_THREADS}], got {threads}"
        )
    numba.set_num_threads(threads)


# Shared steps


def _output_dir(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset(config: RunConfig) -> Dataset:
    return load_dataset(config.ndvi, config.arrivals, config.prices, config.price_weighting)


def _market_ids(dataset: Dataset, config: RunConfig) -> List[str]:
    if config.markets:
        for market_id in config.markets:
            dataset.market(market_id)
        return sorted(config.markets)
    return sorted(m.market_id for m in dataset.markets)


def _prepared(dataset: Dataset, config: RunConfig) -> List[LocationSeries]:
    return spatial.prepare_locations(dataset.locations, config.location_filter())


def _designs(
    dataset: Dataset, config: RunConfig, market_ids: Optional[Sequence[str]] = None
) -> Dict[str, DesignMatrix]:
    """Working set and lag-1 design of every requested market."""
    prepared = _prepared(dataset, config)
    designs = {}
    for market_id in market_ids or _market_ids(dataset, config):
        market = dataset.market(market_id)
        working = spatial.select_working_set(
            prepared, spatial.GeoPoint(market.lat, market.lon), config.location_filter()
        )
        designs[market_id] = regpcr.build_design(market, working, config.window)
    return designs


def _write_json(path: Path, document: Any) -> None:
    path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")


def _ndvi_row(locations: Sequence[LocationSeries], ids: Sequence[str], month: str) -> np.ndarray:
    by_id = {loc.location_id: loc for loc in locations}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValidationError(f"locations {missing[:5]} are not in the NDVI data")
    x = ndvi_matrix([by_id[i] for i in ids], [month])[0]
    if np.isnan(x).any():
        raise ValidationError(f"location {ids[int(np.flatnonzero(np.isnan(x))[0])]}: missing NDVI for {month}")
    return x


# Commands


def cmd_ingest(config: RunConfig, args: Namespace) -> int:
    """Validate the inputs and print the dataset summary as JSON."""
    dataset = _dataset(config)
    sys.stdout.write(json.dumps(summarize(dataset), indent=2) + "\n")
    return EXIT_OK


def cmd_fit(config: RunConfig, args: Namespace) -> int:
    """Fit one RegPCR model per market and save it."""
    dataset = _dataset(config)
    out = _output_dir(config)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    summary = {}
    for market_id, design in _designs(dataset, config).items():
        model = regpcr.fit(design, config.regpcr_config())
        (models_dir / f"{market_id}.json").write_text(regpcr.to_json(model), encoding="utf-8")
        summary[market_id] = {
            "months": [design.month_labels[0], design.month_labels[-1]],
            "working_set": design.L,
            "selected_locations": model.p,
            "factors": int(model.pc_mask.sum()),
            "in_sample_mae": model.diagnostics.get("in_sample_mae"),
        }
    _write_json(out / "fit_summary.json", summary)
    (out / "config.txt").write_text(dump_config(config), encoding="utf-8")
    return EXIT_OK


def cmd_predict(config: RunConfig, args: Namespace) -> int:
    """Predict next-month arrivals of every saved model from one month of NDVI."""
    dataset = _dataset(config)
    out = _output_dir(config)
    model_dir = Path(args.model_dir) if args.model_dir else out / "models"
    paths = sorted(model_dir.glob("*.json"))
    if not paths:
        raise ValidationError(f"{model_dir}: no saved models")
    month = args.month or (dataset.month_index[-1] if dataset.month_index else None)
    if month is None:
        raise ValidationError("no NDVI month to predict from")
    prepared = _prepared(dataset, config)
    rows = []
    for path in paths:
        model = regpcr.from_json(path.read_text(encoding="utf-8"))
        x = _ndvi_row(prepared, model.location_ids, month)
        rows.append((path.stem, month, shift_month(month, 1), float(regpcr.predict(model, x))))
    frame = pd.DataFrame(rows, columns=["market_id", "ndvi_month", "target_month", "predicted_arrival"])
    _write_csv(out / "predictions.csv", frame)
    return EXIT_OK


def cmd_backtest(config: RunConfig, args: Namespace) -> int:
    """Rolling-origin backtest of every configured method."""
    dataset = _dataset(config)
    out = _output_dir(config)
    designs = _designs(dataset, config)
    report = forecast_eval.run_backtest(designs, config.backtest_config())
    if config.external_predictions:
        report = forecast_eval.merge_external_predictions(report, config.external_predictions)
    if not report.rows:
        raise NumericalError("every method failed on every market")
    report.write_csv(out / "backtest.csv")
    report.write_json(out / "backtest.json")

    if config.state_markets:
        months = dataset.month_index
        markets = [dataset.market(m) for m in config.state_markets]
        actual = {m.market_id: np.array([m.arrival_at(month) for month in months]) for m in markets}
        total = price_model.state_arrival_series(dataset.markets, months)
        result = forecast_eval.state_backtest(report, months, actual, total)
        model = result.model
        _write_json(
            out / "state_backtest.json",
            {
                "markets": list(model.market_ids),
                "intercept": model.alpha0,
                "coefficients": model.coefficients(),
                "r2": model.r2,
                "adjusted_r2": model.adjusted_r2,
                "f_statistic": model.f_stat,
                "p_value": model.p_value,
                "n": model.n,
                "jittered": model.jittered,
                "months": list(result.months),
                "actual": result.actual.tolist(),
                "predicted": result.predicted.tolist(),
                "mae": result.mae,
            },
        )
    return EXIT_OK


def _complete_run(*series: np.ndarray) -> Tuple[int, int]:
    """Bounds of the most recent run of months where every series is finite."""
    ok = np.all([np.isfinite(s) for s in series], axis=0)
    if not ok.any():
        raise ValidationError("no month with both state arrivals and prices")
    stop = int(np.flatnonzero(ok)[-1]) + 1
    start = stop
    while start > 0 and ok[start - 1]:
        start -= 1
    return start, stop


def cmd_price(config: RunConfig, args: Namespace) -> int:
    """Fit the state price model and forecast the next horizons."""
    dataset = _dataset(config)
    out = _output_dir(config)
    months = dataset.month_index
    arrivals = price_model.state_arrival_series(dataset.markets, months)
    prices = price_model.state_price_series(dataset.markets, months, config.price_weighting)
    start, stop = _complete_run(arrivals, prices)
    months, arrivals, prices = months[start:stop], arrivals[start:stop], prices[start:stop]
    origin = months[-1]

    pcfg = config.price_config()
    decay_scores: Dict[float, float] = {}
    if config.select_decay:
        w, decay_scores = price_model.select_decay(prices, arrivals, pcfg, steps=config.price_steps)
        pcfg = replace(pcfg, w=w)
    model = price_model.fit_price_model(prices, arrivals, pcfg)

    # Next month's state arrival from per-market RegPCR forecasts.
    prepared = _prepared(dataset, config)
    designs = _designs(dataset, config, sorted(m.market_id for m in dataset.markets))
    forecast_arrival = 0.0
    for market_id, design in designs.items():
        fitted = regpcr.fit(design, config.regpcr_config())
        forecast_arrival += float(regpcr.predict(fitted, _ndvi_row(prepared, design.location_ids, origin)))
    a, _ = price_model.log_arrivals(arrivals)
    D = price_model.arrival_differences(price_model.weighted_arrivals(a, pcfg.w), pcfg.d)
    Dhat = price_model.forecast_weighted_difference(arrivals, forecast_arrival, pcfg.w, pcfg.d)
    forecasts = price_model.predict_price(model, Dhat, D, len(months) - 1, prices[-1], pcfg.horizons)
    _write_csv(out / "price_forecast.csv", price_model.forecast_frame(origin, forecasts))
    _write_json(
        out / "price_model.json",
        {
            "origin": origin,
            "months": [months[0], origin],
            "w": pcfg.w,
            "d": pcfg.d,
            "forecast_arrival": forecast_arrival,
            "coefficients": {str(k): v.tolist() for k, v in sorted(model.coefficients.items())},
            "in_sample_mae": {str(k): v for k, v in sorted(model.in_sample_mae.items())},
            "degenerate": {str(k): v for k, v in sorted(model.degenerate.items())},
            "decay_scores": {str(w): v for w, v in sorted(decay_scores.items())},
        },
    )

    try:
        backtest = price_model.price_backtest(prices, arrivals, pcfg, config.price_steps)
    except ValidationError as e:
        logger.warning("price backtest skipped: %s", e)
        return EXIT_OK
    frame = pd.DataFrame(backtest.rows, columns=list(price_model.PriceBacktestRow._fields))
    frame.insert(1, "month", [months[t] for t in frame["origin"]])
    _write_csv(out / "price_backtest.csv", frame)
    _write_csv(out / "price_mae.csv", backtest.table())
    return EXIT_OK


def _importance_fits(
    design: DesignMatrix, universe: Sequence[str], config: RunConfig
) -> List[Tuple[Sequence[str], elastic_net.ElasticNetModel]]:
    """Stage-1 fits at every expanding-window origin, widened to `universe`."""
    rcfg = config.regpcr_config()
    stage1 = regpcr.stage1_config(rcfg)
    lam = rcfg.lam
    if lam is None:
        grid = elastic_net.lambda_grid(design.X, design.y, rcfg.gamma, n_lambdas=rcfg.n_lambdas)
        lam, _ = elastic_net.select_lambda(design.X, design.y, stage1, grid, rcfg.cv_folds)
    stage1 = replace(stage1, lam=float(lam))
    position = {i: j for j, i in enumerate(universe)}
    columns = [position[i] for i in design.location_ids]
    fits = []
    warm = None
    for origin in range(min(config.initial_window, design.T), design.T + 1):
        model = elastic_net.fit(design.X[:origin], design.y[:origin], stage1, beta_init=warm)
        warm = model.beta
        beta = np.zeros(len(universe))
        beta[columns] = model.beta
        fits.append((universe, replace(model, beta=beta)))
    return fits


def cmd_importance(config: RunConfig, args: Namespace) -> int:
    """Rank locations by accumulated stage-1 importance and pick CCE sites."""
    dataset = _dataset(config)
    out = _output_dir(config)
    designs = _designs(dataset, config)
    universe = sorted({i for design in designs.values() for i in design.location_ids})
    fits = []
    for market_id, design in designs.items():
        history = _importance_fits(design, universe, config)
        logger.info("market %s: %d stage-1 fits", market_id, len(history))
        fits.extend(history)
    importance = insights.accumulate_importance(fits, config.dominance)
    coordinates = insights.coordinates_of(dataset.locations)
    insights.write_importance_csv(importance, coordinates, out / "importance.csv")
    chosen = insights.cce_candidates(importance, coordinates, config.n_cce, config.min_spacing_km)
    insights.write_cce_geojson(importance, coordinates, chosen, out / "cce_sites.geojson")
    return EXIT_OK


def cmd_synth(config: RunConfig, args: Namespace) -> int:
    """Write a synthetic dataset with known structure."""
    paths = synth.write_synth(config.synth_config(), _output_dir(config))
    logger.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


Command = Callable[[RunConfig, Namespace], int]

commands: Dict[str, Tuple[Command, Tuple[str, ...]]] = {
    "ingest": (cmd_ingest, DATA_KEYS),
    "fit": (cmd_fit, MODEL_KEYS),
    "predict": (cmd_predict, DATA_KEYS + SPATIAL_KEYS),
    "backtest": (cmd_backtest, MODEL_KEYS + BACKTEST_KEYS),
    "price": (cmd_price, MODEL_KEYS + PRICE_KEYS),
    "importance": (cmd_importance, MODEL_KEYS + IMPORTANCE_KEYS),
    "synth": (cmd_synth, SYNTH_KEYS),
}


def build_parser() -> ArgumentParser:
    """Argument parser with one subcommand per pipeline stage."""
    parser = ArgumentParser(prog="arrivalcast", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--threads", type=int, help="numba worker threads")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, keys) in commands.items():
        cmd = sub.add_parser(name, help=(fn.__doc__ or "").splitlines()[0])
        for key in dict.fromkeys(keys):
            cmd.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar="VALUE")
        if name == "predict":
            cmd.add_argument("--model-dir", dest="model_dir", help="saved models (default OUTPUT_DIR/models)")
            cmd.add_argument("--month", help="NDVI month YYYY-MM (default: the last month)")
    return parser


def resolve_config(args: Namespace) -> RunConfig:
    """Config file values, then command-line flags."""
    config = load_config(args.config) if args.config else RunConfig()
    hints = field_types()
    _, keys = commands[args.command]
    flags = {key: parse_value(hints[key], getattr(args, key)) for key in keys if getattr(args, key, None) is not None}
    return config.override(**flags)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        set_threads(args.threads)
        config = resolve_config(args)
        fn, _ = commands[args.command]
        return fn(config, args)
    except ValidationError as e:
        logger.error("%s", e)
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError) as e:
        logger.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except ArrivalcastError as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())
