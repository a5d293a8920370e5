"""Configuration file parsing, overrides and validation."""

from pathlib import Path

import pytest

from src.config import (
    REPRESENTATIVE_WEEKS,
    StudyConfig,
    build_config,
    dump_config,
    load_config,
    parse_config_text,
)
from src.errors import ConfigError
from src.flexopf import OpfMode


class TestParseConfigText:
    def test_sections_and_values(self):
        tree = parse_config_text("""
            # study grid
            pv.scales = 0.25, 0.55, 1.0
            tariff.peak_cts = 23.92   # cts/kWh
        """)
        assert tree == {"pv": {"scales": ["0.25", "0.55", "1.0"]}, "tariff": {"peak_cts": "23.92"}}

    def test_missing_equals_sign(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("pv.scales = 1.0\npv.scales 0.5\n", "study.conf")

    def test_key_without_section(self):
        with pytest.raises(ConfigError, match="section.key"):
            parse_config_text("scales = 1.0")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section 'solar'"):
            parse_config_text("solar.scales = 1.0")


class TestBuildConfig:
    def test_defaults(self):
        config = StudyConfig()
        assert config.network.v_min == 0.95
        assert config.network.v_max == 1.05
        assert config.grid.c_trafo == 60.0
        assert config.study.modes == (OpfMode.WITH_STORAGE, OpfMode.NO_STORAGE)
        assert config.profiles.weeks == ()

    def test_values_are_coerced(self):
        config = build_config(parse_config_text("pv.scales = 0.5, 1.0\nbattery.unit_cost = 150\n"))
        assert config.pv.scales == (0.5, 1.0)
        assert config.battery.unit_cost == 150.0

    def test_representative_weeks(self):
        config = build_config({"profiles": {"weeks": "representative"}})
        assert config.profiles.weeks == REPRESENTATIVE_WEEKS == (3, 16, 29, 42)

    def test_invalid_value_names_the_key(self):
        with pytest.raises(ConfigError, match=r"invalid setting 'network\.v_max'"):
            build_config({"network": {"v_max": "0.9"}})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="pv.colour"):
            build_config({"pv": {"colour": "blue"}})

    @pytest.mark.parametrize("scales", ["0", "1.2", "0.5, -0.1"])
    def test_scales_outside_unit_interval(self, scales):
        with pytest.raises(ConfigError, match="pv.scales"):
            load_config(overrides={"pv.scales": scales})

    def test_modes_must_not_be_empty(self):
        with pytest.raises(ConfigError, match="study.modes"):
            build_config({"study": {"modes": []}})

    def test_repeated_modes_collapse(self):
        config = build_config({"study": {"modes": ["no_storage", "no_storage"]}})
        assert config.study.modes == (OpfMode.NO_STORAGE,)

    def test_missing_input_file(self, tmp_path):
        with pytest.raises(ConfigError, match="paths.network"):
            build_config({"paths": {"network": str(tmp_path / "absent.net")}})


class TestLoadConfig:
    def test_overrides_win_over_the_file(self, tmp_path):
        path = tmp_path / "study.conf"
        path.write_text("pv.scales = 0.25, 0.5\nstudy.workers = 2\n", encoding="utf-8")
        config = load_config(path, {"pv.scales": "1.0", "study.workers": None})
        assert config.pv.scales == (1.0,)
        assert config.study.workers == 2

    def test_non_string_overrides(self):
        config = load_config(overrides={"study.workers": 3, "pv.scales": (0.5, 1.0)})
        assert config.study.workers == 3
        assert config.pv.scales == (0.5, 1.0)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.conf")

    def test_feeder_case_file(self, feeder_files):
        config = load_config(feeder_files["config"])
        assert config.paths.network == Path(feeder_files["network"])
        assert config.profiles.weeks == (26,)
        assert config.study.modes == (OpfMode.NO_STORAGE,)

    def test_dump_and_reload(self, tmp_path):
        config = load_config(overrides={
            "pv.scales": "0.3, 1.0", "tariff.peak_hours": "7-20", "study.modes": "no_storage",
            "profiles.weeks": "representative",
        })
        path = tmp_path / "dumped.conf"
        path.write_text(dump_config(config), encoding="utf-8")
        assert load_config(path) == config
