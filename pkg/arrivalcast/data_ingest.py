"""Parsing, validation, gap filling and monthly aggregation of the CSV inputs.

Three interchange files feed the toolkit (UTF-8, comma separated, header first,
'.' decimal separator)::

    ndvi.csv      location_id,lat,lon,month,ndvi
    arrivals.csv  market_id,market_name,lat,lon,date,arrival_qty
    prices.csv    market_id,date,min_price,max_price,modal_price

Months are keyed as ISO ``YYYY-MM`` strings and dates as ``YYYY-MM-DD``. A month
without data is an absent entry (NaN), never a zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from typing_extensions import TypeAlias

from .errors import ValidationError

logger = logging.getLogger(__name__)

Vector: TypeAlias = npt.NDArray[np.float64]
Matrix: TypeAlias = npt.NDArray[np.float64]
Mask: TypeAlias = npt.NDArray[np.bool_]
PathLike: TypeAlias = Union[str, Path]

NDVI_COLUMNS = ("location_id", "lat", "lon", "month", "ndvi")
ARRIVAL_COLUMNS = ("market_id", "market_name", "lat", "lon", "date", "arrival_qty")
PRICE_COLUMNS = ("market_id", "date", "min_price", "max_price", "modal_price")
MONTH_PATTERN = r"\d{4}-(0[1-9]|1[0-2])"
DATE_FORMAT = "%Y-%m-%d"
PRICE_WEIGHTINGS = ("equal", "arrival")


def month_range(first: str, last: str) -> Tuple[str, ...]:
    """Contiguous ``YYYY-MM`` labels from `first` to `last` inclusive."""
    return tuple(pd.period_range(first, last, freq="M").strftime("%Y-%m"))


def shift_month(month: str, offset: int) -> str:
    """The month `offset` months after `month` (negative offsets go back)."""
    return (pd.Period(month, freq="M") + offset).strftime("%Y-%m")


@dataclass(frozen=True, eq=False)
class LocationSeries:
    """One geolocated monthly NDVI series."""

    location_id: str
    lat: float
    lon: float
    months: Tuple[str, ...]
    ndvi: Vector

    def with_values(self, ndvi: Vector) -> LocationSeries:
        """Same location and months, new values."""
        return replace(self, ndvi=np.asarray(ndvi, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """One market's arrivals and modal prices.

    Straight out of `parse_market_csv` the series carries its daily rows and no
    monthly values; `monthly_aggregate` turns it into the monthly form.
    """

    market_id: str
    name: str
    lat: float
    lon: float
    months: Tuple[str, ...] = ()
    arrivals: Vector = field(default_factory=lambda: np.empty(0))
    prices: Vector = field(default_factory=lambda: np.empty(0))
    daily_arrivals: Optional[pd.DataFrame] = None
    daily_prices: Optional[pd.DataFrame] = None
    price_only_months: Tuple[str, ...] = ()

    @property
    def is_monthly(self) -> bool:  # noqa: D102
        return self.daily_arrivals is None and self.daily_prices is None

    def arrival_at(self, month: str) -> float:
        """Monthly arrival, NaN when absent."""
        return _value_at(self.months, self.arrivals, month)

    def price_at(self, month: str) -> float:
        """Monthly price, NaN when absent."""
        return _value_at(self.months, self.prices, month)


def _value_at(months: Sequence[str], values: Vector, month: str) -> float:
    if not months or month < months[0] or month > months[-1]:
        return float("nan")
    return float(values[months.index(month)])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated locations and markets on a shared month axis.

    Every series is indexed by `month_index`. Interior gaps are filled by
    linear interpolation; months missing at the edges of a series stay NaN and
    are listed in `edge_gaps`.
    """

    locations: Tuple[LocationSeries, ...]
    markets: Tuple[MarketSeries, ...]
    month_index: Tuple[str, ...]
    edge_gaps: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    filled: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def market(self, market_id: str) -> MarketSeries:
        """Look up a market by id."""
        for market in self.markets:
            if market.market_id == market_id:
                return market
        raise ValidationError(f"unknown market {market_id!r}")

    def ndvi_matrix(
        self,
        locations: Optional[Sequence[LocationSeries]] = None,
        months: Optional[Sequence[str]] = None,
    ) -> Matrix:
        """NDVI as a (months x locations) matrix, NaN where a value is absent."""
        locations = self.locations if locations is None else locations
        months = self.month_index if months is None else months
        return ndvi_matrix(locations, months)


def ndvi_matrix(locations: Sequence[LocationSeries], months: Sequence[str]) -> Matrix:
    """Align location series onto `months`; rows are months, columns locations."""
    position = {m: i for i, m in enumerate(months)}
    out = np.full((len(months), len(locations)), np.nan)
    for j, loc in enumerate(locations):
        rows = np.fromiter(
            (position.get(m, -1) for m in loc.months), dtype=np.int64, count=len(loc.months)
        )
        keep = rows >= 0
        out[rows[keep], j] = loc.ndvi[keep]
    return out


# Parsing


def _read_table(path: PathLike, columns: Tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such file")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise ValidationError(f"{path}: missing header") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ValidationError(f"{path}: malformed row: {e}") from e
    if tuple(c.strip() for c in frame.columns) != columns:
        raise ValidationError(f"{path}: header must be {','.join(columns)}")
    frame.columns = list(columns)
    # Line numbers as seen in the file; the header is line 1.
    frame.index = pd.RangeIndex(2, len(frame) + 2)
    missing = frame.isna().any(axis=1) | (frame.apply(lambda c: c.str.strip()) == "").any(axis=1)
    _reject(missing, path, "malformed row: missing field")
    return frame.apply(lambda c: c.str.strip())


def _reject(bad: pd.Series, path: PathLike, reason: str) -> None:
    if bool(bad.any()):
        line = int(bad.index[bad.to_numpy()][0])
        raise ValidationError(f"{path}: line {line}: {reason}")


def _numeric(frame: pd.DataFrame, column: str, path: PathLike) -> pd.Series:
    values = pd.to_numeric(frame[column], errors="coerce")
    _reject(values.isna() | ~np.isfinite(values), path, f"malformed row: {column} is not a number")
    return values.astype(np.float64)


def _coordinates(frame: pd.DataFrame, path: PathLike) -> Tuple[pd.Series, pd.Series]:
    lat = _numeric(frame, "lat", path)
    lon = _numeric(frame, "lon", path)
    _reject((lat < -90.0) | (lat > 90.0), path, "lat out of range")
    _reject((lon < -180.0) | (lon > 180.0), path, "lon out of range")
    return lat, lon


def _dates(frame: pd.DataFrame, path: PathLike) -> pd.Series:
    dates = pd.to_datetime(frame["date"], format=DATE_FORMAT, errors="coerce")
    _reject(dates.isna(), path, "malformed row: date must be YYYY-MM-DD")
    return dates


def parse_ndvi_csv(path: PathLike) -> List[LocationSeries]:
    """Parse ``ndvi.csv`` into one LocationSeries per location, sorted by id.

    Raises
    ------
        ValidationError: on a malformed row, NDVI outside [-1, 1], inconsistent
            coordinates or a duplicate (location_id, month); the message names
            the offending line.

    """
    frame = _read_table(path, NDVI_COLUMNS)
    if frame.empty:
        return []
    lat, lon = _coordinates(frame, path)
    month = frame["month"]
    _reject(~month.str.fullmatch(MONTH_PATTERN), path, "malformed row: month must be YYYY-MM")
    ndvi = _numeric(frame, "ndvi", path)
    _reject((ndvi < -1.0) | (ndvi > 1.0), path, "ndvi out of range")
    _reject(
        frame.duplicated(["location_id", "month"], keep="first"),
        path,
        "duplicate (location_id, month)",
    )
    tidy = pd.DataFrame(
        {"location_id": frame["location_id"], "lat": lat, "lon": lon, "month": month, "ndvi": ndvi}
    )
    moved = (tidy.groupby("location_id")["lat"].transform("first") != lat) | (
        tidy.groupby("location_id")["lon"].transform("first") != lon
    )
    _reject(moved, path, "inconsistent coordinates for location")

    tidy = tidy.sort_values(["location_id", "month"], kind="mergesort")
    series = []
    for location_id, group in tidy.groupby("location_id", sort=True):
        series.append(
            LocationSeries(
                location_id=str(location_id),
                lat=float(group["lat"].iloc[0]),
                lon=float(group["lon"].iloc[0]),
                months=tuple(group["month"]),
                ndvi=group["ndvi"].to_numpy(dtype=np.float64),
            )
        )
    logger.debug("parsed %d NDVI locations from %s", len(series), path)
    return series


def parse_market_csv(arrivals_path: PathLike, prices_path: PathLike) -> List[MarketSeries]:
    """Parse the daily arrival and price files, grouped per market.

    The returned series keep their daily rows; min/max prices are validated and
    dropped. Months that carry price rows but no arrival rows are listed in
    `price_only_months`.
    """
    arrivals = _read_table(arrivals_path, ARRIVAL_COLUMNS)
    prices = _read_table(prices_path, PRICE_COLUMNS)

    a_lat, a_lon = _coordinates(arrivals, arrivals_path)
    a_date = _dates(arrivals, arrivals_path)
    qty = _numeric(arrivals, "arrival_qty", arrivals_path)
    _reject(qty < 0.0, arrivals_path, "negative arrival")

    p_date = _dates(prices, prices_path)
    _numeric(prices, "min_price", prices_path)
    _numeric(prices, "max_price", prices_path)
    modal = _numeric(prices, "modal_price", prices_path)
    _reject(modal <= 0.0, prices_path, "nonpositive modal price")

    known = set(arrivals["market_id"])
    _reject(~prices["market_id"].isin(known), prices_path, "price row for a market with no arrivals")

    daily_a = pd.DataFrame(
        {"market_id": arrivals["market_id"], "date": a_date, "arrival_qty": qty}
    )
    daily_p = pd.DataFrame({"market_id": prices["market_id"], "date": p_date, "modal_price": modal})
    meta = pd.DataFrame(
        {"market_id": arrivals["market_id"], "name": arrivals["market_name"], "lat": a_lat, "lon": a_lon}
    ).groupby("market_id", sort=True).first()

    markets = []
    for market_id, row in meta.iterrows():
        da = (
            daily_a[daily_a["market_id"] == market_id]
            .drop(columns="market_id")
            .sort_values("date", kind="mergesort")
            .reset_index(drop=True)
        )
        dp = (
            daily_p[daily_p["market_id"] == market_id]
            .drop(columns="market_id")
            .sort_values("date", kind="mergesort")
            .reset_index(drop=True)
        )
        price_only = sorted(
            set(dp["date"].dt.strftime("%Y-%m")) - set(da["date"].dt.strftime("%Y-%m"))
        )
        if price_only:
            logger.info("market %s: price-only months %s", market_id, ",".join(price_only))
        markets.append(
            MarketSeries(
                market_id=str(market_id),
                name=str(row["name"]),
                lat=float(row["lat"]),
                lon=float(row["lon"]),
                daily_arrivals=da,
                daily_prices=dp,
                price_only_months=tuple(price_only),
            )
        )
    return markets


# Monthly series


def monthly_aggregate(
    series: MarketSeries,
    daily_arrivals: Optional[pd.DataFrame] = None,
    daily_prices: Optional[pd.DataFrame] = None,
    price_weighting: str = "equal",
) -> MarketSeries:
    """Aggregate daily rows into monthly totals (arrivals) and means (prices).

    With ``price_weighting="arrival"`` each day's modal price is weighted by that
    day's arrival quantity; months with no weight fall back to the plain mean.
    Calendar months without rows stay absent.
    """
    if price_weighting not in PRICE_WEIGHTINGS:
        raise ValidationError(f"price_weighting must be one of {PRICE_WEIGHTINGS}")
    da = series.daily_arrivals if daily_arrivals is None else daily_arrivals
    dp = series.daily_prices if daily_prices is None else daily_prices
    if da is None and dp is None:
        raise ValidationError(f"market {series.market_id}: no daily rows to aggregate")
    if da is None:
        da = pd.DataFrame({"date": pd.to_datetime([]), "arrival_qty": []})
    if dp is None:
        dp = pd.DataFrame({"date": pd.to_datetime([]), "modal_price": []})

    a_month = da["date"].dt.strftime("%Y-%m")
    p_month = dp["date"].dt.strftime("%Y-%m")
    monthly_a = da.groupby(a_month)["arrival_qty"].sum()
    monthly_p = dp.groupby(p_month)["modal_price"].mean()
    if price_weighting == "arrival" and len(dp):
        per_day = da.groupby("date")["arrival_qty"].sum()
        weight = dp["date"].map(per_day).fillna(0.0)
        num = (weight * dp["modal_price"]).groupby(p_month).sum()
        den = weight.groupby(p_month).sum()
        weighted = (num / den).where(den > 0.0)
        monthly_p = weighted.fillna(monthly_p)

    labels = sorted(set(monthly_a.index) | set(monthly_p.index))
    if not labels:
        return replace(series, daily_arrivals=None, daily_prices=None)
    months = month_range(labels[0], labels[-1])
    arrivals = monthly_a.reindex(months).to_numpy(dtype=np.float64)
    prices = monthly_p.reindex(months).to_numpy(dtype=np.float64)
    price_only = tuple(
        m for m, a, p in zip(months, arrivals, prices) if np.isnan(a) and not np.isnan(p)
    )
    return replace(
        series,
        months=months,
        arrivals=arrivals,
        prices=prices,
        daily_arrivals=None,
        daily_prices=None,
        price_only_months=price_only,
    )


def interpolate_missing(values: Sequence[float]) -> Vector:
    """Fill interior gaps (NaN) by linear interpolation between observed neighbours.

    Raises
    ------
        ValidationError: with fewer than two observations, or when the first or
            last entry is missing ("cannot extrapolate").

    """
    values = np.asarray(values, dtype=np.float64)
    observed = ~np.isnan(values)
    if int(observed.sum()) < 2:
        raise ValidationError("interpolation needs at least 2 observed values")
    if not (observed[0] and observed[-1]):
        raise ValidationError("cannot extrapolate: series has a leading or trailing gap")
    index = np.arange(len(values), dtype=np.float64)
    return np.interp(index, index[observed], values[observed])


def _fill_interior(values: Vector) -> Tuple[Vector, Mask]:
    """Interpolate the gaps between the first and last observation only."""
    values = np.asarray(values, dtype=np.float64)
    observed = np.flatnonzero(~np.isnan(values))
    gaps = np.zeros(len(values), dtype=bool)
    if len(observed) < 2:
        return values, gaps
    first, last = observed[0], observed[-1]
    inner = values[first : last + 1]
    if not np.isnan(inner).any():
        return values, gaps
    out = values.copy()
    out[first : last + 1] = interpolate_missing(inner)
    gaps[first : last + 1] = np.isnan(inner)
    return out, gaps


def _edge_months(
    months: Sequence[str], values: Vector, month_index: Sequence[str]
) -> Tuple[str, ...]:
    present = {m for m, v in zip(months, values) if not np.isnan(v)}
    if not present:
        return tuple(month_index)
    first, last = min(present), max(present)
    return tuple(m for m in month_index if m < first or m > last)


def _on_index(months: Sequence[str], values: Vector, month_index: Sequence[str]) -> Vector:
    """Values reindexed onto `month_index`, NaN where the series has no month."""
    series = pd.Series(np.asarray(values, dtype=np.float64), index=list(months), dtype=np.float64)
    return series.reindex(list(month_index)).to_numpy(dtype=np.float64)


def build_dataset(
    locations: Sequence[LocationSeries], markets: Sequence[MarketSeries]
) -> Dataset:
    """Assemble monthly series into a Dataset on one contiguous month axis.

    Every location and market series is reindexed onto `month_index`; interior
    gaps are interpolated and the absent edge months stay NaN.
    """
    for market in markets:
        if not market.is_monthly:
            raise ValidationError(f"market {market.market_id}: aggregate to months first")
    labels = [m for loc in locations for m in loc.months[:1] + loc.months[-1:]]
    labels += [m for market in markets for m in market.months[:1] + market.months[-1:]]
    month_index = month_range(min(labels), max(labels)) if labels else ()

    edge_gaps: Dict[str, Tuple[str, ...]] = {}
    filled: Dict[str, Tuple[str, ...]] = {}

    def aligned(key: str, months: Sequence[str], values: Vector) -> Vector:
        raw = _on_index(months, values, month_index)
        out, gaps = _fill_interior(raw)
        if gaps.any():
            filled[key] = tuple(m for m, g in zip(month_index, gaps) if g)
        edges = _edge_months(month_index, out, month_index)
        if edges:
            edge_gaps[key] = edges
        return out

    new_locations = [
        replace(
            loc,
            months=month_index,
            ndvi=aligned(f"location:{loc.location_id}", loc.months, loc.ndvi),
        )
        for loc in locations
    ]
    new_markets = [
        replace(
            market,
            months=month_index,
            arrivals=aligned(f"market:{market.market_id}:arrivals", market.months, market.arrivals),
            prices=aligned(f"market:{market.market_id}:prices", market.months, market.prices),
        )
        for market in markets
    ]

    for key, months in filled.items():
        logger.info("%s: interpolated %d interior months", key, len(months))
    return Dataset(
        locations=tuple(new_locations),
        markets=tuple(new_markets),
        month_index=month_index,
        edge_gaps=edge_gaps,
        filled=filled,
    )


def load_dataset(
    ndvi_path: PathLike,
    arrivals_path: PathLike,
    prices_path: PathLike,
    price_weighting: str = "equal",
) -> Dataset:
    """Parse, aggregate and assemble the three CSV inputs."""
    locations = parse_ndvi_csv(ndvi_path)
    markets = [
        monthly_aggregate(m, price_weighting=price_weighting)
        for m in parse_market_csv(arrivals_path, prices_path)
    ]
    return build_dataset(locations, markets)


def write_dataset(dataset: Dataset, directory: PathLike) -> Dict[str, Path]:
    """Write a Dataset back out in the three CSV schemas.

    Each monthly value becomes one row dated on the first of its month, so that
    re-parsing and aggregating returns the same monthly values.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ndvi_rows = [
        (loc.location_id, loc.lat, loc.lon, m, v)
        for loc in dataset.locations
        for m, v in zip(loc.months, loc.ndvi)
        if not np.isnan(v)
    ]
    arrival_rows = []
    price_rows = []
    for market in dataset.markets:
        for m, a, p in zip(market.months, market.arrivals, market.prices):
            if not np.isnan(a):
                arrival_rows.append(
                    (market.market_id, market.name, market.lat, market.lon, f"{m}-01", a)
                )
            if not np.isnan(p):
                price_rows.append((market.market_id, f"{m}-01", p, p, p))
    paths = {
        "ndvi": directory / "ndvi.csv",
        "arrivals": directory / "arrivals.csv",
        "prices": directory / "prices.csv",
    }
    pd.DataFrame(ndvi_rows, columns=list(NDVI_COLUMNS)).to_csv(
        paths["ndvi"], index=False, lineterminator="\n"
    )
    pd.DataFrame(arrival_rows, columns=list(ARRIVAL_COLUMNS)).to_csv(
        paths["arrivals"], index=False, lineterminator="\n"
    )
    pd.DataFrame(price_rows, columns=list(PRICE_COLUMNS)).to_csv(
        paths["prices"], index=False, lineterminator="\n"
    )
    return paths


def summarize(dataset: Dataset) -> Dict[str, object]:
    """Counts, month span and gap report of a Dataset (JSON ready)."""
    span = [dataset.month_index[0], dataset.month_index[-1]] if dataset.month_index else None
    return {
        "locations": len(dataset.locations),
        "markets": len(dataset.markets),
        "months": len(dataset.month_index),
        "month_span": span,
        "interpolated": {k: list(v) for k, v in sorted(dataset.filled.items())},
        "edge_gaps": {k: list(v) for k, v in sorted(dataset.edge_gaps.items())},
        "price_only_months": {
            m.market_id: list(m.price_only_months) for m in dataset.markets if m.price_only_months
        },
    }
