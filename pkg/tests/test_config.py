from pathlib import Path
from typing import Optional, Tuple

import pytest

from arrivalcast import ValidationError
from arrivalcast.config import RunConfig, dump_config, load_config, parse_value


@pytest.mark.cli
def test_parse_values() -> None:
    assert parse_value(int, " 12 ") == 12
    assert parse_value(float, "0.05") == 0.05
    assert parse_value(bool, "Yes") is True
    assert parse_value(bool, "off") is False
    assert parse_value(Optional[float], "none") is None
    assert parse_value(Optional[float], "1e-3") == 1e-3
    assert parse_value(Tuple[int, ...], "1, 2,3") == (1, 2, 3)
    assert parse_value(Tuple[str, ...], "") == ()
    with pytest.raises(ValidationError):
        parse_value(bool, "maybe")
    with pytest.raises(ValidationError, match="as int"):
        parse_value(int, "1.5")


@pytest.mark.cli
def test_load_config(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text(
        "# experiment\n"
        "gamma = 0.1\n"
        "\n"
        "methods = regpcr, arima  # two of them\n"
        "lam = 0.02\n"
        "refit = false\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.gamma == 0.1
    assert config.methods == ("regpcr", "arima")
    assert config.lam == 0.02
    assert config.refit is False
    assert config.steps == RunConfig().steps


@pytest.mark.cli
def test_bad_config_lines(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text("gamma = 0.1\nlamda = 2\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 2: unknown key 'lamda'"):
        load_config(path)
    path.write_text("gamma 0.1\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 1: expected key = value"):
        load_config(path)
    path.write_text("steps = many\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 1"):
        load_config(path)
    with pytest.raises(ValidationError, match="no such config file"):
        load_config(tmp_path / "missing.cfg")


@pytest.mark.cli
def test_dump_reads_back(tmp_path: Path) -> None:
    config = RunConfig(gamma=0.3, lam=None, window_start="2020-01", window_end="2021-06", horizons=(1, 3), tol=1e-9)
    path = tmp_path / "dump.cfg"
    path.write_text(dump_config(config), encoding="utf-8")
    assert load_config(path) == config


@pytest.mark.cli
def test_override_and_window() -> None:
    config = RunConfig().override(gamma=0.5, lam=None, steps=6)
    assert config.gamma == 0.5
    assert config.lam is None
    assert config.steps == 6
    with pytest.raises(ValidationError, match="unknown config keys"):
        RunConfig().override(gama=0.5)
    assert RunConfig().window is None
    assert RunConfig(window_start="2020-01", window_end="2020-12").window == ("2020-01", "2020-12")
    with pytest.raises(ValidationError):
        RunConfig(window_start="2020-01").window


@pytest.mark.cli
def test_derived_configs() -> None:
    config = RunConfig(gamma=0.2, initial_window=18, steps=4, w=0.7, d=6, synth_markets=3)
    assert config.regpcr_config().gamma == 0.2
    assert config.backtest_config().regpcr.gamma == 0.2
    assert config.backtest_config().initial_window == 18
    assert config.price_config().w == 0.7
    assert config.synth_config().n_markets == 3
    assert config.synth_config().d == 6
    with pytest.raises(ValidationError):
        RunConfig(w=1.5).price_config()
