"""Run configuration shared by every CLI command.

The config file is flat ``key = value`` text; ``#`` starts a comment, lists
are comma separated and ``none`` clears an optional value. Keys are the field
names of RunConfig.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .data_ingest import PathLike
from .errors import ValidationError
from .forecast_eval import BacktestConfig
from .price_model import PriceModelConfig
from .regpcr import RegPcrConfig
from .spatial import LocationFilterConfig
from .synth import SynthConfig

TRUE = ("true", "yes", "on", "1")
FALSE = ("false", "no", "off", "0")


@dataclass(frozen=True)
class RunConfig:
    # inputs and outputs
    ndvi: str = "ndvi.csv"
    arrivals: str = "arrivals.csv"
    prices: str = "prices.csv"
    output_dir: str = "out"
    price_weighting: str = "equal"
    markets: Tuple[str, ...] = ()
    seed: int = 0

    # spatial
    proximity_km: float = 300.0
    variance_percentile: float = 75.0
    target_count: int = 7000
    radius_cells: int = 0
    block_size_deg: float = 0.1
    centroid_sampling: bool = False

    # solver
    gamma: float = 0.05
    lam: Optional[float] = None
    n_lambdas: int = 50
    tol: float = 1e-7
    max_sweeps: int = 10000
    cv_folds: int = 3

    # pipeline
    target_factors: int = 10
    threshold: float = 0.0
    window_start: Optional[str] = None
    window_end: Optional[str] = None

    # backtest
    initial_window: int = 24
    steps: int = 12
    methods: Tuple[str, ...] = ("regpcr", "ridge", "pcr", "arima")
    refit: bool = True
    external_predictions: Optional[str] = None
    state_markets: Tuple[str, ...] = ()

    # price
    w: float = 0.9
    d: int = 12
    horizons: Tuple[int, ...] = (1, 2, 3)
    select_decay: bool = False
    price_steps: int = 12

    # importance
    n_cce: int = 100
    min_spacing_km: float = 0.0
    dominance: str = "nonzero"

    # synth
    synth_months: int = 48
    synth_grid_rows: int = 20
    synth_grid_cols: int = 25
    synth_markets: int = 4
    synth_true_locations: int = 5
    synth_noise_sigma: float = 0.05
    synth_price_noise: float = 0.0

    def override(self, **values: Any) -> RunConfig:
        """Copy with every non-None value replaced."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValidationError(f"unknown config keys {unknown}")
        return replace(self, **{k: v for k, v in values.items() if v is not None})

    @property
    def window(self) -> Optional[Tuple[str, str]]:  # noqa: D102
        if self.window_start is None and self.window_end is None:
            return None
        if self.window_start is None or self.window_end is None:
            raise ValidationError("window_start and window_end go together")
        return (self.window_start, self.window_end)

    def location_filter(self) -> LocationFilterConfig:  # noqa: D102
        return LocationFilterConfig(
            proximity_km=self.proximity_km,
            variance_percentile=self.variance_percentile,
            target_count=self.target_count,
            block_size_deg=self.block_size_deg,
            radius_cells=self.radius_cells,
            centroid_sampling=self.centroid_sampling,
        )

    def regpcr_config(self) -> RegPcrConfig:  # noqa: D102
        return RegPcrConfig(
            gamma=self.gamma,
            lam=self.lam,
            cv_folds=self.cv_folds,
            n_lambdas=self.n_lambdas,
            threshold=self.threshold,
            target_factors=self.target_factors,
            tol=self.tol,
            max_sweeps=self.max_sweeps,
        )

    def backtest_config(self) -> BacktestConfig:  # noqa: D102
        return BacktestConfig(
            initial_window=self.initial_window,
            steps=self.steps,
            methods=self.methods,
            refit=self.refit,
            regpcr=self.regpcr_config(),
            cv_folds=self.cv_folds,
        )

    def price_config(self) -> PriceModelConfig:  # noqa: D102
        return PriceModelConfig(w=self.w, d=self.d, horizons=self.horizons)

    def synth_config(self) -> SynthConfig:  # noqa: D102
        return SynthConfig(
            seed=self.seed,
            months=self.synth_months,
            grid_rows=self.synth_grid_rows,
            grid_cols=self.synth_grid_cols,
            n_markets=self.synth_markets,
            n_true_locations=self.synth_true_locations,
            noise_sigma=self.synth_noise_sigma,
            price_noise=self.synth_price_noise,
            w=self.w,
            d=self.d,
        )


def field_types() -> Dict[str, Any]:
    """Resolved annotation of every RunConfig field."""
    return typing.get_type_hints(RunConfig)


def parse_value(hint: Any, text: str) -> Any:
    """Convert the text of one value according to a RunConfig annotation."""
    text = text.strip()
    args = typing.get_args(hint)
    if typing.get_origin(hint) is typing.Union:
        if text.lower() in ("none", ""):
            return None
        return parse_value(next(a for a in args if a is not type(None)), text)
    if typing.get_origin(hint) is tuple:
        items = [item for item in (s.strip() for s in text.split(",")) if item]
        return tuple(parse_value(args[0], item) for item in items)
    if hint is bool:
        if text.lower() in TRUE:
            return True
        if text.lower() in FALSE:
            return False
        raise ValidationError(f"not a boolean: {text!r}")
    try:
        return hint(text)
    except ValueError as e:
        raise ValidationError(f"cannot read {text!r} as {hint.__name__}") from e


def format_value(value: Any) -> str:  # noqa: D103
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path: PathLike, base: RunConfig = RunConfig()) -> RunConfig:
    """Read a ``key = value`` file on top of `base`."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such config file")
    hints = field_types()
    values: Dict[str, Any] = {}
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: line {number}: expected key = value")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in hints:
            raise ValidationError(f"{path}: line {number}: unknown key {key!r}")
        try:
            values[key] = parse_value(hints[key], text)
        except ValidationError as e:
            raise ValidationError(f"{path}: line {number}: {e}") from e
    return replace(base, **values)


def dump_config(config: RunConfig) -> str:
    """Config file text that `load_config` reads back to `config`."""
    return "".join(f"{f.name} = {format_value(getattr(config, f.name))}\n" for f in fields(config))
