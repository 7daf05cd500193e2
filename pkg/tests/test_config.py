from pathlib import Path

import pytest

from kpeaks.config import (
    DEFAULT_OUT_DIR,
    RunConfig,
    check_key,
    get_kpeaks_config,
    parse_tolerances,
)
from kpeaks.errors import ParameterError, UnknownConfigKey, UnknownPreset


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# two wells\n"
        "\n"
        "KPEAKS_SCHEMA=1\n"
        "KPEAKS_B = 0.02\n"
        "KPEAKS_WELL_VALUES=1,1.2\n"
        "KPEAKS_THREADS=2\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture(autouse=True)
def no_out_dir_env(monkeypatch):
    monkeypatch.delenv("KPEAKS_OUT_DIR", raising=False)


def test_config_file_is_read(config_path):
    with open(config_path, encoding="utf-8") as f:
        config = get_kpeaks_config(f)
    assert config == {
        "KPEAKS_SCHEMA": "1",
        "KPEAKS_B": "0.02",
        "KPEAKS_WELL_VALUES": "1,1.2",
        "KPEAKS_THREADS": "2",
    }


def test_keyword_values_win(config_path):
    with open(config_path, encoding="utf-8") as f:
        config = get_kpeaks_config(f, KPEAKS_THREADS=4, KPEAKS_PRESET=None)
    assert config["KPEAKS_THREADS"] == 4
    assert "KPEAKS_PRESET" not in config


def test_config_without_file():
    assert get_kpeaks_config(None, KPEAKS_EPS="0.05") == {"KPEAKS_EPS": "0.05"}


@pytest.mark.parametrize("line", ["KPEAKS_NOPE=1", "OTHER_B=1", "KPEAKS_B"])
def test_bad_config_lines(tmp_path, line):
    path = tmp_path / "bad.cfg"
    path.write_text(line + "\n", encoding="utf-8")
    with open(path, encoding="utf-8") as f:
        with pytest.raises(UnknownConfigKey):
            get_kpeaks_config(f)


def test_check_key():
    check_key("KPEAKS_EPS")
    with pytest.raises(UnknownConfigKey, match="does not start with"):
        check_key("EPS")


def test_parse_tolerances():
    assert parse_tolerances(["newton=1e-6", "eigen = 1e-5"]) == {
        "KPEAKS_NEWTON_TOL": "1e-6",
        "KPEAKS_EIGEN_TOL": "1e-5",
    }
    assert parse_tolerances(()) == {}
    with pytest.raises(ParameterError):
        parse_tolerances(["newton"])
    with pytest.raises(UnknownConfigKey):
        parse_tolerances(["speed=1"])


def test_defaults():
    config = RunConfig.from_mapping({})
    assert (config.params.a, config.params.b, config.params.p) == (1.0, 0.01, 3.0)
    assert config.model.name == "two_well_quadratic"
    assert config.domain.delta == pytest.approx(0.48)
    assert config.eps_list == (0.2, 0.1, 0.05, 0.025)
    assert config.reduction.n == 48
    assert config.orders.n_radial == 160
    assert config.out_dir == Path(DEFAULT_OUT_DIR)
    assert config.b_bar is None and config.c_energy is None
    assert not config.verbose
    assert config.tolerances()["newton"] == 1e-9


def test_out_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("KPEAKS_OUT_DIR", str(tmp_path))
    assert RunConfig.from_mapping({}).out_dir == tmp_path
    config = RunConfig.from_mapping({"KPEAKS_OUT_DIR": "elsewhere"})
    assert config.out_dir == Path("elsewhere")


def test_well_overrides():
    config = RunConfig.from_mapping(
        {"KPEAKS_WELL_VALUES": "1,1.2", "KPEAKS_TILT": "0.1,0,0"}
    )
    assert [w.value for w in config.model.wells] == [1.0, 1.2]
    assert config.model.wells[0].tilt == (0.1, 0.0, 0.0)


@pytest.mark.parametrize(
    "mapping",
    [
        {"KPEAKS_SCHEMA": "2"},
        {"KPEAKS_EPS_LIST": "0.1,0.2"},
        {"KPEAKS_EPS_LIST": "0.1"},
        {"KPEAKS_TILT": "0.1,0"},
        {"KPEAKS_THREADS": "0"},
        {"KPEAKS_GRID_N": "48.5"},
        {"KPEAKS_B": "lots"},
        {"KPEAKS_P": "6"},
        {"KPEAKS_QUAD_RADIAL": "161"},
        {"KPEAKS_PRESET": "two_well_hoelder(0.5)", "KPEAKS_TAU": "0.3"},
    ],
)
def test_invalid_mappings(mapping):
    with pytest.raises(ParameterError):
        RunConfig.from_mapping(mapping)


def test_unknown_preset():
    with pytest.raises(UnknownPreset, match="Valid presets"):
        RunConfig.from_mapping({"KPEAKS_PRESET": "four_wells"})


def test_config_hash_ignores_output_settings():
    base = RunConfig.from_mapping({"KPEAKS_OUT_DIR": "one"})
    moved = RunConfig.from_mapping(
        {"KPEAKS_OUT_DIR": "two", "KPEAKS_VERBOSE": "1", "KPEAKS_LOG_FILE": "x.log"}
    )
    changed = RunConfig.from_mapping({"KPEAKS_B": "0.02"})
    assert base.config_hash() == moved.config_hash()
    assert base.config_hash() != changed.config_hash()
    assert moved.verbose
    assert "KPEAKS_OUT_DIR" not in base.normalized()
