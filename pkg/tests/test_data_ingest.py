from pathlib import Path
from typing import List

import numpy as np
import pytest
from hypothesis import given
from hypothesis.strategies import floats, integers, lists

from arrivalcast import ValidationError
from arrivalcast.data_ingest import (
    build_dataset,
    interpolate_missing,
    load_dataset,
    month_range,
    monthly_aggregate,
    parse_market_csv,
    parse_ndvi_csv,
    shift_month,
    summarize,
    write_dataset,
)

NDVI_HEADER = "location_id,lat,lon,month,ndvi"
ARRIVAL_HEADER = "market_id,market_name,lat,lon,date,arrival_qty"
PRICE_HEADER = "market_id,date,min_price,max_price,modal_price"


def write(path: Path, header: str, rows: List[str]) -> Path:
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def market_files(tmp_path: Path) -> tuple:
    arrivals = write(
        tmp_path / "arrivals.csv",
        ARRIVAL_HEADER,
        [
            "M1,Gulbarga,17.3,76.8,2020-01-05,10",
            "M1,Gulbarga,17.3,76.8,2020-01-20,30",
            "M1,Gulbarga,17.3,76.8,2020-03-02,50",
            "M2,Bidar,17.9,77.5,2020-01-10,5",
            "M2,Bidar,17.9,77.5,2020-02-10,7",
        ],
    )
    prices = write(
        tmp_path / "prices.csv",
        PRICE_HEADER,
        [
            "M1,2020-01-05,90,110,100",
            "M1,2020-01-20,190,210,200",
            "M1,2020-02-11,290,310,300",
            "M1,2020-03-02,390,410,400",
            "M2,2020-01-10,50,50,50",
            "M2,2020-02-10,60,60,60",
        ],
    )
    return arrivals, prices


@pytest.mark.ingest
def test_month_helpers() -> None:
    assert month_range("2019-11", "2020-02") == ("2019-11", "2019-12", "2020-01", "2020-02")
    assert shift_month("2020-01", -1) == "2019-12"
    assert shift_month("2020-12", 1) == "2021-01"


@pytest.mark.ingest
def test_parse_ndvi(tmp_path: Path) -> None:
    path = write(
        tmp_path / "ndvi.csv",
        NDVI_HEADER,
        ["L2,15.1,75.0,2020-02,0.4", "L1,15.0,75.0,2020-01,0.1", "L2,15.1,75.0,2020-01,0.3"],
    )
    locations = parse_ndvi_csv(path)
    assert [loc.location_id for loc in locations] == ["L1", "L2"]
    assert locations[1].months == ("2020-01", "2020-02")
    np.testing.assert_array_equal(locations[1].ndvi, [0.3, 0.4])


@pytest.mark.ingest
@pytest.mark.parametrize(
    "row, reason",
    [
        ("L1,15.0,75.0,2020-02,1.5", "ndvi out of range"),
        ("L1,15.0,75.0,2020-01,0.2", "duplicate"),
        ("L1,15.5,75.0,2020-02,0.2", "inconsistent coordinates"),
        ("L1,15.0,75.0,2020-13,0.2", "month must be YYYY-MM"),
        ("L1,95.0,75.0,2020-02,0.2", "lat out of range"),
        ("L1,15.0,75.0,2020-02,", "missing field"),
    ],
)
def test_parse_ndvi_rejects_with_line(tmp_path: Path, row: str, reason: str) -> None:
    path = write(tmp_path / "ndvi.csv", NDVI_HEADER, ["L1,15.0,75.0,2020-01,0.1", row])
    with pytest.raises(ValidationError, match=f"line 3: .*{reason}"):
        parse_ndvi_csv(path)


@pytest.mark.ingest
def test_missing_file_and_bad_header(tmp_path: Path) -> None:
    with pytest.raises(ValidationError, match="no such file"):
        parse_ndvi_csv(tmp_path / "absent.csv")
    path = write(tmp_path / "ndvi.csv", "id,lat,lon,month,ndvi", [])
    with pytest.raises(ValidationError, match="header"):
        parse_ndvi_csv(path)


@pytest.mark.ingest
def test_header_only_ndvi_is_empty(tmp_path: Path) -> None:
    assert parse_ndvi_csv(write(tmp_path / "ndvi.csv", NDVI_HEADER, [])) == []


@pytest.mark.ingest
def test_parse_market_rows(market_files: tuple) -> None:
    markets = parse_market_csv(*market_files)
    assert [m.market_id for m in markets] == ["M1", "M2"]
    m1 = markets[0]
    assert m1.name == "Gulbarga"
    assert not m1.is_monthly
    assert len(m1.daily_arrivals) == 3
    assert m1.price_only_months == ("2020-02",)


@pytest.mark.ingest
def test_monthly_aggregate(market_files: tuple) -> None:
    m1 = parse_market_csv(*market_files)[0]
    monthly = monthly_aggregate(m1)
    assert monthly.is_monthly
    assert monthly.months == ("2020-01", "2020-02", "2020-03")
    np.testing.assert_array_equal(monthly.arrivals[[0, 2]], [40.0, 50.0])
    assert np.isnan(monthly.arrivals[1])
    np.testing.assert_array_equal(monthly.prices, [150.0, 300.0, 400.0])
    assert monthly.price_only_months == ("2020-02",)


@pytest.mark.ingest
def test_arrival_weighted_price(market_files: tuple) -> None:
    m1 = parse_market_csv(*market_files)[0]
    monthly = monthly_aggregate(m1, price_weighting="arrival")
    # (10 * 100 + 30 * 200) / 40; February has no arrivals and keeps the plain mean.
    np.testing.assert_allclose(monthly.prices, [175.0, 300.0, 400.0])


@pytest.mark.ingest
@pytest.mark.parametrize(
    "arrival_row, price_row, reason",
    [
        ("M1,A,17.3,76.8,2020-01-05,-1", "M1,2020-01-05,1,1,1", "negative arrival"),
        ("M1,A,17.3,76.8,2020-01-05,1", "M1,2020-01-05,1,1,0", "nonpositive modal price"),
        ("M1,A,17.3,76.8,2020-01-05,1", "M9,2020-01-05,1,1,1", "no arrivals"),
        ("M1,A,17.3,76.8,2020-01-32,1", "M1,2020-01-05,1,1,1", "YYYY-MM-DD"),
    ],
)
def test_market_rejections(tmp_path: Path, arrival_row: str, price_row: str, reason: str) -> None:
    arrivals = write(tmp_path / "arrivals.csv", ARRIVAL_HEADER, [arrival_row])
    prices = write(tmp_path / "prices.csv", PRICE_HEADER, [price_row])
    with pytest.raises(ValidationError, match=f"line 2: .*{reason}"):
        parse_market_csv(arrivals, prices)


@pytest.mark.ingest
def test_interpolate_missing() -> None:
    np.testing.assert_allclose(interpolate_missing([1.0, np.nan, 3.0]), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(
        interpolate_missing([0.0, np.nan, np.nan, 3.0]), [0.0, 1.0, 2.0, 3.0]
    )
    with pytest.raises(ValidationError, match="cannot extrapolate"):
        interpolate_missing([np.nan, 1.0, 2.0])
    with pytest.raises(ValidationError, match="at least 2"):
        interpolate_missing([np.nan, 1.0])


@pytest.mark.ingest
@given(lists(floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=2, max_size=30), integers(0, 2**16))
def test_interpolation_keeps_observed_values(values: List[float], seed: int) -> None:
    rng = np.random.Generator(np.random.PCG64(seed))
    holes = rng.random(len(values)) < 0.4
    holes[0] = holes[-1] = False
    raw = np.where(holes, np.nan, values)
    filled = interpolate_missing(raw)
    np.testing.assert_array_equal(filled[~holes], raw[~holes])
    assert filled.min() >= min(values) - 1e-12
    assert filled.max() <= max(values) + 1e-12


@pytest.mark.ingest
def test_build_dataset_fills_interior_gaps(tmp_path: Path, market_files: tuple) -> None:
    ndvi = write(
        tmp_path / "ndvi.csv",
        NDVI_HEADER,
        ["L1,15.0,75.0,2020-01,0.1", "L1,15.0,75.0,2020-03,0.3", "L2,15.1,75.0,2020-02,0.5", "L2,15.1,75.0,2020-03,0.6"],
    )
    dataset = load_dataset(ndvi, *market_files)
    assert dataset.month_index == ("2020-01", "2020-02", "2020-03")
    np.testing.assert_allclose(dataset.locations[0].ndvi, [0.1, 0.2, 0.3])
    assert dataset.filled["location:L1"] == ("2020-02",)
    assert dataset.filled["market:M1:arrivals"] == ("2020-02",)
    np.testing.assert_allclose(dataset.market("M1").arrivals, [40.0, 45.0, 50.0])
    assert dataset.edge_gaps["location:L2"] == ("2020-01",)
    assert dataset.edge_gaps["market:M2:arrivals"] == ("2020-03",)
    matrix = dataset.ndvi_matrix()
    assert matrix.shape == (3, 2)
    assert np.isnan(matrix[0, 1])

    summary = summarize(dataset)
    assert summary["locations"] == 2
    assert summary["markets"] == 2
    assert summary["month_span"] == ["2020-01", "2020-03"]
    assert summary["price_only_months"] == {"M1": ["2020-02"]}


@pytest.mark.ingest
def test_every_series_shares_the_month_index(tmp_path: Path, market_files: tuple) -> None:
    ndvi = write(
        tmp_path / "ndvi.csv",
        NDVI_HEADER,
        ["L1,15.0,75.0,2019-12,0.1", "L1,15.0,75.0,2020-01,0.2", "L2,15.1,75.0,2020-02,0.5", "L2,15.1,75.0,2020-03,0.6"],
    )
    dataset = load_dataset(ndvi, *market_files)
    index = ("2019-12", "2020-01", "2020-02", "2020-03")
    assert dataset.month_index == index
    for loc in dataset.locations:
        assert loc.months == index
        assert loc.ndvi.shape == (4,)
    for market in dataset.markets:
        assert market.months == index
        assert market.arrivals.shape == market.prices.shape == (4,)
    np.testing.assert_allclose(dataset.locations[0].ndvi, [0.1, 0.2, np.nan, np.nan])
    np.testing.assert_allclose(dataset.market("M2").arrivals, [np.nan, 5.0, 7.0, np.nan])
    assert dataset.edge_gaps["market:M2:arrivals"] == ("2019-12", "2020-03")
    assert dataset.edge_gaps["location:L1"] == ("2020-02", "2020-03")
    np.testing.assert_array_equal(dataset.ndvi_matrix(), np.column_stack([loc.ndvi for loc in dataset.locations]))


@pytest.mark.ingest
def test_unknown_market_lookup(tmp_path: Path, market_files: tuple) -> None:
    ndvi = write(tmp_path / "ndvi.csv", NDVI_HEADER, ["L1,15.0,75.0,2020-01,0.1"])
    dataset = load_dataset(ndvi, *market_files)
    with pytest.raises(ValidationError, match="unknown market"):
        dataset.market("M7")


@pytest.mark.ingest
def test_write_dataset_reads_back(tmp_path: Path, market_files: tuple) -> None:
    ndvi = write(
        tmp_path / "ndvi.csv",
        NDVI_HEADER,
        ["L1,15.0,75.0,2020-01,0.125", "L1,15.0,75.0,2020-02,0.25", "L1,15.0,75.0,2020-03,0.375"],
    )
    dataset = load_dataset(ndvi, *market_files)
    paths = write_dataset(dataset, tmp_path / "copy")
    again = load_dataset(paths["ndvi"], paths["arrivals"], paths["prices"])
    assert again.month_index == dataset.month_index
    np.testing.assert_array_equal(again.locations[0].ndvi, dataset.locations[0].ndvi)
    for before, after in zip(dataset.markets, again.markets):
        assert before.months == after.months
        np.testing.assert_allclose(before.arrivals, after.arrivals, rtol=1e-15)
        np.testing.assert_allclose(before.prices, after.prices, rtol=1e-15)


@pytest.mark.ingest
def test_build_dataset_requires_monthly_markets(market_files: tuple) -> None:
    daily = parse_market_csv(*market_files)
    with pytest.raises(ValidationError, match="aggregate"):
        build_dataset([], daily)
