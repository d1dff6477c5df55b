import json
from pathlib import Path
from typing import List

import pandas as pd
import pytest

from arrivalcast.cli import EXIT_INVALID, EXIT_OK, build_parser, main, resolve_config

SYNTH_FLAGS = [
    "--seed", "3",
    "--synth-months", "40",
    "--synth-grid-rows", "4",
    "--synth-grid-cols", "5",
    "--synth-markets", "2",
    "--synth-true-locations", "3",
]


def data_flags(directory: Path, out: Path) -> List[str]:
    return [
        "--ndvi", str(directory / "ndvi.csv"),
        "--arrivals", str(directory / "arrivals.csv"),
        "--prices", str(directory / "prices.csv"),
        "--output-dir", str(out),
    ]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    directory = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--output-dir", str(directory), *SYNTH_FLAGS]) == EXIT_OK
    return directory


@pytest.mark.cli
def test_flags_override_config_file(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text("gamma = 0.2\nsteps = 5\n", encoding="utf-8")
    args = build_parser().parse_args(["--config", str(path), "backtest", "--steps", "7", "--methods", "ridge,arima"])
    config = resolve_config(args)
    assert config.gamma == 0.2
    assert config.steps == 7
    assert config.methods == ("ridge", "arima")


@pytest.mark.cli
def test_synth_output(synth_dir: Path) -> None:
    for name in ("ndvi.csv", "arrivals.csv", "prices.csv", "groundtruth.json"):
        assert (synth_dir / name).is_file()
    truth = json.loads((synth_dir / "groundtruth.json").read_text(encoding="utf-8"))
    assert sorted(truth["supports"]) == ["M01", "M02"]


@pytest.mark.cli
def test_ingest_summary(synth_dir: Path, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    assert main(["ingest", *data_flags(synth_dir, tmp_path)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["locations"] == 20
    assert summary["markets"] == 2
    assert summary["months"] == 40


@pytest.mark.cli
def test_invalid_input_exits_2(synth_dir: Path, tmp_path: Path) -> None:
    flags = data_flags(synth_dir, tmp_path)
    flags[1] = str(tmp_path / "missing.csv")
    assert main(["ingest", *flags]) == EXIT_INVALID
    assert main(["--threads", "0", "ingest", *data_flags(synth_dir, tmp_path)]) == EXIT_INVALID
    assert main(["backtest", "--methods", "regpcr,lstm", *data_flags(synth_dir, tmp_path)]) == EXIT_INVALID
    bad = tmp_path / "bad.cfg"
    bad.write_text("lamda = 1\n", encoding="utf-8")
    assert main(["--config", str(bad), "ingest"]) == EXIT_INVALID


@pytest.mark.cli
@pytest.mark.slow
def test_backtest_is_reproducible(synth_dir: Path, tmp_path: Path) -> None:
    flags = ["--initial-window", "20", "--steps", "3", "--state-markets", "M01,M02"]
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["backtest", *data_flags(synth_dir, out), *flags]) == EXIT_OK
        outputs.append(out)
    for name in ("backtest.csv", "backtest.json", "state_backtest.json"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
    frame = pd.read_csv(outputs[0] / "backtest.csv")
    assert sorted(frame["method"].unique()) == ["arima", "pcr", "regpcr", "ridge"]
    assert len(frame) == 2 * 4 * 3
    state = json.loads((outputs[0] / "state_backtest.json").read_text(encoding="utf-8"))
    assert state["markets"] == ["M01", "M02"]
    assert len(state["predicted"]) == 3


@pytest.mark.cli
@pytest.mark.slow
def test_fit_then_predict(synth_dir: Path, tmp_path: Path) -> None:
    assert main(["fit", *data_flags(synth_dir, tmp_path)]) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "models").iterdir()) == ["M01.json", "M02.json"]
    summary = json.loads((tmp_path / "fit_summary.json").read_text(encoding="utf-8"))
    assert set(summary) == {"M01", "M02"}
    assert (tmp_path / "config.txt").is_file()

    assert main(["predict", *data_flags(synth_dir, tmp_path)]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "predictions.csv", dtype={"ndvi_month": str, "target_month": str})
    assert list(frame["market_id"]) == ["M01", "M02"]
    assert (frame["predicted_arrival"] > 0.0).all()
    assert set(frame["target_month"]) == {"2018-05"}

    assert main(["predict", "--month", "1999-01", *data_flags(synth_dir, tmp_path)]) == EXIT_INVALID


@pytest.mark.cli
@pytest.mark.slow
def test_price_forecast(synth_dir: Path, tmp_path: Path) -> None:
    assert main(["price", "--price-steps", "4", *data_flags(synth_dir, tmp_path)]) == EXIT_OK
    forecast = pd.read_csv(tmp_path / "price_forecast.csv", dtype={"month": str})
    assert list(forecast["horizon"]) == [1, 2, 3]
    assert (forecast["price_level"] > 0.0).all()
    assert set(forecast["month"]) == {"2018-04"}
    model = json.loads((tmp_path / "price_model.json").read_text(encoding="utf-8"))
    assert sorted(model["coefficients"]) == ["1", "2", "3"]
    backtest = pd.read_csv(tmp_path / "price_backtest.csv")
    assert set(backtest["method"]) == {"arima", "arrival"}
    assert (tmp_path / "price_mae.csv").is_file()


@pytest.mark.cli
@pytest.mark.slow
def test_importance_report(synth_dir: Path, tmp_path: Path) -> None:
    flags = ["--initial-window", "34", "--n-cce", "5"]
    assert main(["importance", *data_flags(synth_dir, tmp_path), *flags]) == EXIT_OK
    table = pd.read_csv(tmp_path / "importance.csv")
    assert list(table.columns) == ["location_id", "lat", "lon", "selection_count", "mean_abs_coef", "importance"]
    assert (table["importance"] >= 0.0).all()
    assert table["importance"].is_monotonic_decreasing
    sites = json.loads((tmp_path / "cce_sites.geojson").read_text(encoding="utf-8"))
    assert len(sites["features"]) <= 5
