"""Profile ingestion and synthesis, PV scaling and penetration."""

import numpy as np
import pandas as pd
import pytest

from src.errors import ProfileError
from src.profiles import (
    MAX_YIELD,
    LcoeParams,
    PvEntry,
    PvScenario,
    TimeSeriesSet,
    build_scenario,
    clear_sky_yield,
    lcoe_cts_per_kwh,
    load_profiles,
    penetration_of,
    round_half_away,
    scale_pv,
    select_weeks,
    synthesize_profiles,
    write_profiles,
    year_index,
)


def _series(load_kw, yields, step_seconds=3600, year_fraction=1.0, bus="A"):
    index = pd.date_range("2021-01-04", periods=len(load_kw), freq=pd.Timedelta(seconds=step_seconds))
    return TimeSeriesSet(
        load_kw=pd.DataFrame({bus: np.asarray(load_kw, dtype=float)}, index=index),
        pv_yield=pd.DataFrame({bus: np.asarray(yields, dtype=float)}, index=index),
        step_seconds=step_seconds,
        year_fraction=year_fraction,
    )


def _scenario(capacity_kw, bus="A"):
    count = int(round(capacity_kw / 0.4))
    entry = PvEntry(module_count=count, module_count_max=count, module_kw=0.4, lcoe_cts=5.0)
    return PvScenario(scale=1.0, module_kw=0.4, entries={bus: entry})


@pytest.fixture(scope="module")
def feeder_year(feeder_network):
    return feeder_network, synthesize_profiles(7, {"B2": 5.0}, feeder_network)


class TestSynthesis:
    def test_cigre_targets_are_met(self, cigre_year):
        _, profiles = cigre_year
        total_mwh = profiles.annual_load_kwh().sum() / 1000.0
        assert total_mwh == pytest.approx(1053.08, rel=0.005)
        assert profiles.horizon_steps == 35040

    def test_same_seed_is_bit_identical(self, feeder_network):
        a = synthesize_profiles(3, [5.0], feeder_network)
        b = synthesize_profiles(3, [5.0], feeder_network)
        pd.testing.assert_frame_equal(a.load_kw, b.load_kw)
        pd.testing.assert_frame_equal(a.pv_yield, b.pv_yield)

    def test_different_seeds_differ(self, feeder_network):
        a = synthesize_profiles(3, [5.0], feeder_network)
        b = synthesize_profiles(4, [5.0], feeder_network)
        assert not np.array_equal(a.load_of("B2"), b.load_of("B2"))

    def test_zero_demand_gives_zero_load(self, feeder_network):
        profiles = synthesize_profiles(1, {"B2": 0.0}, feeder_network)
        assert not profiles.load_of("B2").any()

    def test_target_count_must_match_prosumers(self, feeder_network):
        with pytest.raises(ProfileError, match="expected 1"):
            synthesize_profiles(1, [5.0, 6.0], feeder_network)

    def test_yield_stays_in_bounds(self, feeder_year):
        _, profiles = feeder_year
        yields = profiles.yield_of("B2")
        assert yields.min() >= 0.0
        assert yields.max() <= MAX_YIELD


class TestClearSkyYield:
    def test_dark_at_midnight(self):
        index = year_index(2021, 900)
        yields = clear_sky_yield(index, seed=0)
        midnight = (index.hour == 0) & (index.minute == 0)
        assert not yields[midnight].any()

    def test_mean_close_to_capacity_factor(self):
        yields = clear_sky_yield(year_index(2021, 900), seed=0, capacity_factor=0.12)
        assert yields.mean() == pytest.approx(0.12, rel=0.05)


class TestLoadProfiles:
    def test_full_year_file_is_accepted(self, tmp_path, feeder_year):
        network, profiles = feeder_year
        path = tmp_path / "load.csv"
        write_profiles(profiles, path)
        loaded = load_profiles(path, network)
        assert loaded.horizon_steps == 35040
        assert loaded.step_seconds == 900
        np.testing.assert_allclose(loaded.load_of("B2"), profiles.load_of("B2"), rtol=1e-8)

    def test_short_file_is_rejected(self, tmp_path, feeder_year):
        network, profiles = feeder_year
        path = tmp_path / "load.csv"
        profiles.load_kw.iloc[:-1].to_csv(path, index_label="timestamp")
        with pytest.raises(ProfileError, match="35039"):
            load_profiles(path, network)

    def test_negative_load_names_row_and_bus(self, tmp_path, feeder_year):
        network, profiles = feeder_year
        frame = profiles.load_kw.copy()
        frame.iloc[10, 0] = -1.0
        path = tmp_path / "load.csv"
        frame.to_csv(path, index_label="timestamp")
        with pytest.raises(ProfileError, match=r"row 11 for bus 'B2'"):
            load_profiles(path, network)

    def test_missing_prosumer_column(self, tmp_path, feeder_year):
        network, profiles = feeder_year
        path = tmp_path / "load.csv"
        profiles.load_kw.rename(columns={"B2": "B9"}).to_csv(path, index_label="timestamp")
        with pytest.raises(ProfileError, match="B2"):
            load_profiles(path, network)

    def test_missing_timestamp_column(self, tmp_path, feeder_network):
        path = tmp_path / "load.csv"
        path.write_text("B2\n1.0\n2.0\n")
        with pytest.raises(ProfileError, match="timestamp"):
            load_profiles(path, feeder_network)

    def test_yield_file_is_used(self, tmp_path, feeder_year):
        network, profiles = feeder_year
        load_path, yield_path = tmp_path / "load.csv", tmp_path / "pv.csv"
        write_profiles(profiles, load_path, yield_path)
        loaded = load_profiles(load_path, network, yield_path)
        np.testing.assert_allclose(loaded.yield_of("B2"), profiles.yield_of("B2"), atol=1e-8)


class TestTimeSeriesSet:
    def test_yield_above_ceiling_is_rejected(self):
        with pytest.raises(ProfileError, match="yield"):
            _series([1.0, 1.0], [0.5, 1.3])

    def test_select_weeks_keeps_year_fraction(self, feeder_year):
        _, profiles = feeder_year
        week = select_weeks(profiles, (3,))
        assert week.horizon_steps == 672
        assert week.year_fraction == pytest.approx(672 / 35040)
        assert set(week.index.isocalendar().week) == {3}
        assert week.annual_load_kwh()["B2"] > 0

    def test_select_no_weeks_is_identity(self, feeder_year):
        _, profiles = feeder_year
        assert select_weeks(profiles, ()) is profiles

    def test_weeks_outside_horizon(self, feeder_year):
        _, profiles = feeder_year
        with pytest.raises(ProfileError):
            select_weeks(profiles, (60,))

    def test_full_year_is_one_segment(self, feeder_year):
        _, profiles = feeder_year
        assert profiles.segment_starts == (0,)

    def test_separate_weeks_start_new_segments(self, feeder_year):
        _, profiles = feeder_year
        assert select_weeks(profiles, (3, 16)).segment_starts == (0, 672)
        assert select_weeks(profiles, (3, 4)).segment_starts == (0,)


class TestScalePv:
    def test_identity_scale(self):
        assert scale_pv(1.0, 10, 0.4, LcoeParams(), 1000.0).module_count == 10

    def test_rounding(self):
        assert scale_pv(0.333, 10, 0.4, LcoeParams(), 1000.0).module_count == 3

    def test_round_half_away_from_zero(self):
        assert round_half_away(2.5) == 3
        assert round_half_away(-2.5) == -3
        assert round_half_away(2.4) == 2

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.01])
    def test_scale_outside_unit_interval(self, alpha):
        with pytest.raises(ValueError):
            scale_pv(alpha, 10, 0.4, LcoeParams(), 1000.0)

    def test_single_module_fails_the_lcoe_gate(self):
        entry = scale_pv(1.0, 1, 0.4, LcoeParams(), 1000.0)
        assert entry.lcoe_cts == pytest.approx(148.5, abs=2.0)
        assert entry.gated
        assert entry.capacity_kw == 0.0
        assert entry.module_count == 0

    def test_large_system_passes_the_gate(self):
        entry = scale_pv(1.0, 375, 0.4, LcoeParams(), 1000.0)
        assert not entry.gated
        assert entry.capacity_kw == pytest.approx(150.0)

    def test_no_yield_means_infinite_lcoe(self):
        assert lcoe_cts_per_kwh(10.0, 0.0, LcoeParams()) == float("inf")


class TestPenetration:
    def test_zero_capacity(self):
        assert penetration_of(_scenario(0.0), _series([10.0, 10.0], [0.5, 0.5])) == 0.0

    def test_generation_equal_to_demand(self):
        assert penetration_of(_scenario(20.0), _series([10.0, 10.0], [0.5, 0.5])) == pytest.approx(100.0)

    def test_reference_bucket(self):
        profiles = _series([526540.0, 526540.0], [1.0, 0.66])
        assert penetration_of(_scenario(1.0e6), profiles) == pytest.approx(157.6, abs=0.05)

    def test_zero_demand(self):
        with pytest.raises(ProfileError, match="zero"):
            penetration_of(_scenario(10.0), _series([0.0, 0.0], [0.5, 0.5]))

    def test_annualized_over_a_partial_year(self):
        full = _series([10.0, 10.0], [0.5, 0.5])
        part = _series([10.0, 10.0], [0.5, 0.5], year_fraction=0.5)
        assert penetration_of(_scenario(20.0), part) == pytest.approx(penetration_of(_scenario(20.0), full))


class TestBuildScenario:
    def test_cigre_full_scale(self, cigre_network, cigre_year):
        table, profiles = cigre_year
        scenario = build_scenario(1.0, cigre_network, table, profiles)
        assert scenario.label == "s100"
        assert scenario.entries["R1"].module_count == 1118
        assert scenario.penetration > 0
        assert set(scenario.entries) == set(cigre_network.prosumers)

    def test_label_is_zero_padded(self):
        assert PvScenario(scale=0.07, module_kw=0.4, entries={}).label == "s007"

    def test_missing_table_row(self, feeder_year):
        network, profiles = feeder_year
        table = pd.DataFrame({"annual_demand_mwh": [1.0], "pv_max_kw": [10.0]}, index=pd.Index(["X"], name="bus_id"))
        with pytest.raises(ProfileError, match="B2"):
            build_scenario(1.0, network, table, profiles)
