"""Tariff lookup and stage-1 battery sizing and dispatch."""

import numpy as np
import pandas as pd
import pytest

from src.dispatch import (
    BatteryParams,
    DispatchSolution,
    PriceSeries,
    Tariff,
    annualization,
    battery_count_summary,
    dispatch_prosumers,
    opex_of,
    optimize_dispatch,
    tariff_rate,
)
from src.errors import DispatchError


def _day_prices():
    """Cheap nights, expensive evenings: one day at hourly resolution."""
    imp = np.full(24, 0.10)
    imp[17:22] = 0.50
    return PriceSeries(import_chf=imp, export_chf=np.full(24, 0.05))


def _evening_load():
    load = np.full(24, 1.0)
    load[17:22] = 5.0
    return load


class TestAnnualization:
    def test_battery_lifetime(self):
        assert annualization(0.03, 9) == pytest.approx(0.12843, abs=5e-6)

    def test_grid_lifetime(self):
        assert annualization(0.03, 30) == pytest.approx(0.051019, abs=5e-7)

    def test_long_lifetime_tends_to_the_rate(self):
        factor = annualization(0.03, 200)
        assert factor > 0.03
        assert factor == pytest.approx(0.03, abs=1e-4)

    @pytest.mark.parametrize("r, lifetime", [(0.0, 10), (-0.01, 10), (0.03, 0.5)])
    def test_invalid_inputs(self, r, lifetime):
        with pytest.raises(ValueError):
            annualization(r, lifetime)


class TestTariff:
    def test_weekday_peak(self):
        assert tariff_rate(Tariff(), "2021-01-06 10:00") == (23.92, 8.16)

    def test_weekday_night(self):
        assert tariff_rate(Tariff(), "2021-01-06 23:00") == (15.16, 8.16)

    def test_weekend(self):
        assert tariff_rate(Tariff(), "2021-01-09 14:00") == (15.16, 8.16)

    def test_peak_window_edges(self):
        tariff = Tariff()
        assert tariff_rate(tariff, "2021-01-06 05:45")[0] == 15.16
        assert tariff_rate(tariff, "2021-01-06 06:00")[0] == 23.92
        assert tariff_rate(tariff, "2021-01-06 21:45")[0] == 23.92
        assert tariff_rate(tariff, "2021-01-06 22:00")[0] == 15.16

    def test_price_series_in_chf(self):
        index = pd.date_range("2021-01-06 21:00", periods=3, freq="60min")
        prices = PriceSeries.from_tariff(Tariff(), index)
        np.testing.assert_allclose(prices.import_chf, [0.2392, 0.1516, 0.1516])
        np.testing.assert_allclose(prices.export_chf, 0.0816)

    def test_window_string(self):
        assert Tariff(peak_hours="7-20").peak_hours == (7, 20)

    def test_inverted_window_is_rejected(self):
        with pytest.raises(ValueError):
            Tariff(peak_hours=(22, 6))


class TestOpex:
    def test_import_and_export(self):
        prices = PriceSeries.flat(2, 20.0, 10.0)
        assert opex_of(np.array([-1.0, 2.0]), prices, 1.0) == pytest.approx(0.2 - 0.2)

    def test_annualized_by_year_fraction(self):
        prices = PriceSeries.flat(1, 20.0, 10.0)
        assert opex_of(np.array([-1.0]), prices, 1.0, year_fraction=0.5) == pytest.approx(0.4)


class TestOptimizeDispatch:
    def test_no_arbitrage_means_no_battery(self):
        load = np.full(24, 2.0)
        prices = PriceSeries.flat(24, 20.0, 20.0)
        solution = optimize_dispatch("A", load, np.zeros(24), prices, dt_hours=1.0, year_fraction=1 / 365)
        assert solution.capacity_kwh == pytest.approx(0.0, abs=1e-7)
        np.testing.assert_allclose(solution.p_bat_kw, 0.0, atol=1e-7)
        assert solution.opex_chf == pytest.approx(load.sum() * 0.20 * 365, rel=1e-6)

    def test_zero_capacity_leaves_the_balance_untouched(self):
        pv = np.linspace(0.0, 6.0, 24)
        load = _evening_load()
        solution = optimize_dispatch(
            "A", load, pv, _day_prices(), dt_hours=1.0, year_fraction=1 / 365, fixed_capacity=0.0,
        )
        np.testing.assert_allclose(solution.p_grid_kw, pv - load, atol=1e-9)
        assert solution.capex_chf == 0.0

    def test_optimum_beats_every_fixed_size(self):
        load, prices = _evening_load(), _day_prices()
        kwargs = dict(dt_hours=1.0, year_fraction=1 / 365)
        best = optimize_dispatch("A", load, np.zeros(24), prices, **kwargs)
        grid = [
            optimize_dispatch("A", load, np.zeros(24), prices, fixed_capacity=c, **kwargs).totex_chf
            for c in np.arange(0.0, 10.5, 0.5)
        ]
        assert best.capacity_kwh > 0
        assert best.totex_chf <= min(grid) * (1 + 1e-6) + 1e-9

    def test_trajectory_respects_battery_limits(self):
        params = BatteryParams()
        solution = optimize_dispatch("A", _evening_load(), np.zeros(24), _day_prices(), params,
                                     dt_hours=1.0, year_fraction=1 / 365)
        cap = solution.capacity_kwh
        assert solution.soc_kwh.min() >= -1e-7
        assert solution.soc_kwh.max() <= cap + 1e-7
        assert solution.soc_kwh[0] == pytest.approx(params.initial_soc * cap, abs=1e-6)
        assert np.abs(solution.p_bat_kw).max() <= params.power_ratio * cap + 1e-7

    def test_energy_balance_closes_over_the_horizon(self):
        params = BatteryParams()
        s = optimize_dispatch("A", _evening_load(), np.zeros(24), _day_prices(), params,
                              dt_hours=1.0, year_fraction=1 / 365)
        net = params.charge_efficiency * s.charge_kw.sum() - s.discharge_kw.sum() / params.discharge_efficiency
        assert net == pytest.approx(0.0, abs=1e-6)

    def test_fixed_cost_above_savings_removes_the_battery(self):
        params = BatteryParams(fixed_cost=1e7)
        solution = optimize_dispatch("A", _evening_load(), np.zeros(24), _day_prices(), params,
                                     dt_hours=1.0, year_fraction=1 / 365)
        assert solution.capacity_kwh == 0.0

    def test_zero_pv_with_costly_battery(self):
        params = BatteryParams(unit_cost=1e5)
        solution = optimize_dispatch("A", _evening_load(), np.zeros(24), _day_prices(), params,
                                     dt_hours=1.0, year_fraction=1 / 365)
        assert solution.capacity_kwh == pytest.approx(0.0, abs=1e-9)

    def test_horizon_mismatch(self):
        with pytest.raises(DispatchError, match="mismatch"):
            optimize_dispatch("A", np.ones(24), np.zeros(23), _day_prices(), dt_hours=1.0)

    def test_negative_fixed_capacity(self):
        with pytest.raises(DispatchError):
            optimize_dispatch("A", np.ones(24), np.zeros(24), _day_prices(), fixed_capacity=-1.0)

    def test_each_segment_starts_at_the_initial_energy(self):
        params = BatteryParams()
        load = np.tile(_evening_load(), 2)
        prices = PriceSeries(
            import_chf=np.tile(_day_prices().import_chf, 2),
            export_chf=np.tile(_day_prices().export_chf, 2),
        )
        s = optimize_dispatch("A", load, np.zeros(48), prices, params,
                              dt_hours=1.0, year_fraction=2 / 365, segment_starts=(24,))
        cap = s.capacity_kwh
        assert cap > 0
        assert s.soc_kwh[0] == pytest.approx(params.initial_soc * cap, abs=1e-6)
        assert s.soc_kwh[24] == pytest.approx(params.initial_soc * cap, abs=1e-6)
        for day in (slice(0, 24), slice(24, 48)):
            net = params.charge_efficiency * s.charge_kw[day].sum() \
                - s.discharge_kw[day].sum() / params.discharge_efficiency
            assert net == pytest.approx(0.0, abs=1e-6)

    def test_segment_start_outside_the_horizon(self):
        with pytest.raises(DispatchError, match="segment"):
            optimize_dispatch("A", np.ones(24), np.zeros(24), _day_prices(), dt_hours=1.0, segment_starts=(24,))


class TestDispatchProsumers:
    def test_identical_prosumers_get_identical_batteries(self):
        load = {"A": _evening_load(), "B": _evening_load()}
        pv = {"A": np.zeros(24), "B": np.zeros(24)}
        solutions = dispatch_prosumers(load, pv, _day_prices(), dt_hours=1.0, year_fraction=1 / 365, workers=2)
        assert solutions["A"].capacity_kwh == pytest.approx(solutions["B"].capacity_kwh, rel=1e-6)

    def test_without_storage_every_capacity_is_zero(self):
        load = {"A": _evening_load()}
        pv = {"A": np.linspace(0.0, 4.0, 24)}
        solutions = dispatch_prosumers(load, pv, _day_prices(), dt_hours=1.0, year_fraction=1 / 365, storage=False)
        assert solutions["A"].capacity_kwh == 0.0

    def test_count_summary_has_a_total_row(self):
        load = {"A": _evening_load(), "B": np.ones(24)}
        pv = {"A": np.zeros(24), "B": np.zeros(24)}
        solutions = dispatch_prosumers(load, pv, _day_prices(), dt_hours=1.0, year_fraction=1 / 365)
        table = battery_count_summary(solutions)
        assert list(table.index) == ["A", "B", "Total"]
        assert table.loc["Total", "capacity_kwh"] == pytest.approx(
            solutions["A"].capacity_kwh + solutions["B"].capacity_kwh
        )


class TestFromTrajectory:
    def test_rebuilds_the_grid_exchange(self):
        solution = DispatchSolution.from_trajectory(
            "A", np.array([1.0, -1.0]), np.array([5.0, 4.0]), np.array([3.0, 3.0]), np.array([2.0, 2.0]),
            10.0, BatteryParams(), PriceSeries.flat(2, 20.0, 10.0), 1.0,
        )
        np.testing.assert_allclose(solution.p_grid_kw, [2.0, 0.0])
        assert solution.power_limit_kw == pytest.approx(5.0)
        assert solution.soc_after(1) == 5.0
