"""Reinforcement pricing, flexibility cost and the transformer-cost sweep."""

import math

import numpy as np
import pytest

from src.dispatch import PriceSeries
from src.economics import (
    BREAK_EVEN_COLUMNS,
    REPORT_COLUMNS,
    CostReport,
    ReinforcementAssessment,
    ReinforcementCostInputs,
    assess_reinforcement,
    break_even,
    flexibility_capacities,
    flexibility_capacity_value,
    flexibility_cost,
    flexibility_cost_by_bus,
    price_reinforcement,
    reinforcement_cost,
    reports_to_frame,
    sensitivity_sweep,
)
from src.flexopf import SplicedTrajectories
from src.grid import parse_network
from src.powerflow import NetworkStateSeries

# One 0.5 km line behind one 0.5 MVA transformer.
RADIAL_NET = """
bus,MV,slack,20,0
bus,B0,pq,0.4,0
bus,P,pq,0.4,1
branch,MV,B0,0,1.0,4.0,1.0,1,0.5
branch,B0,P,0.5,0.2,0.08,0.2,0,0
"""


@pytest.fixture(scope="module")
def radial():
    return parse_network(RADIAL_NET.strip().splitlines(), name="radial")


def _series(i_line, s_trafo):
    i_line = np.asarray(i_line, dtype=float)
    steps = len(i_line)
    return NetworkStateSeries(
        bus_ids=("MV", "B0", "P"),
        branch_ids=("MV-B0", "B0-P"),
        transformer_ids=("MV-B0",),
        vm=np.ones((steps, 3)), va=np.zeros((steps, 3)),
        i_ka=np.column_stack([np.zeros(steps), i_line]),
        s_tr_mva=np.asarray(s_trafo, dtype=float).reshape(steps, 1),
        p_slack_pu=np.zeros(steps), losses_pu=np.zeros(steps),
    )


def _assessment(trafo_peak, rating=0.5):
    return ReinforcementAssessment(
        line_peaks_ka={}, line_limits_ka={}, line_lengths_km={},
        trafo_peaks_mva={"T": trafo_peak}, trafo_ratings_mva={"T": rating},
    )


def _report(penetration, trafo_peak, delta_opex, c_trafo=60.0, mode="with_storage", capacities=None):
    reinforcement = price_reinforcement(_assessment(trafo_peak), ReinforcementCostInputs(c_trafo=c_trafo))
    return CostReport(
        scenario=f"s{int(penetration):03d}", scale=penetration / 100.0, penetration_pct=penetration,
        mode=mode, reinforcement=reinforcement, delta_opex_chf_yr=delta_opex,
        curtailed_mwh=1.0, pv_generation_mwh=50.0,
        flex_capacities_kw={"P": 100.0} if capacities is None else capacities,
    )


class TestReinforcementCost:
    def test_defaults(self):
        inputs = ReinforcementCostInputs()
        assert (inputs.c_line, inputs.c_trafo, inputs.lifetime, inputs.interest) == (70.0, 60.0, 30, 0.03)
        assert inputs.factor == pytest.approx(0.051019, abs=5e-7)

    def test_sweep_values_from_text(self):
        assert ReinforcementCostInputs(c_trafo_sweep="12, 30,60").c_trafo_sweep == (12.0, 30.0, 60.0)

    def test_no_overload_costs_nothing(self, radial):
        cost = reinforcement_cost(_series([0.1, 0.2], [0.3, 0.5]), radial)
        assert cost.c_reinf_chf_yr == 0.0
        assert cost.replaced_lines == ()
        assert cost.replaced_transformers == ()

    def test_overloaded_line_is_priced_by_length(self, radial):
        cost = reinforcement_cost(_series([0.1, 0.25], [0.3, 0.3]), radial)
        assert cost.replaced_lines == ("B0-P",)
        assert cost.c_line_chf == pytest.approx(35000.0)
        assert cost.c_trafo_chf == 0.0

    def test_overloaded_transformer_is_priced_by_its_peak(self, radial):
        cost = reinforcement_cost(_series([0.0, 0.0], [0.8, 0.6]), radial)
        assert cost.replaced_transformers == ("MV-B0",)
        assert cost.c_trafo_chf == pytest.approx(48000.0)
        assert cost.c_reinf_chf_yr == pytest.approx(2449.0, abs=1.0)

    def test_failed_steps_are_skipped(self, radial):
        assessment = assess_reinforcement(_series([0.1, np.nan], [0.3, np.nan]), radial)
        assert assessment.line_peaks_ka["B0-P"] == pytest.approx(0.1)
        assert assessment.trafo_peaks_mva["MV-B0"] == pytest.approx(0.3)

    def test_zero_transformer_cost(self, radial):
        inputs = ReinforcementCostInputs(c_trafo=0.0)
        cost = reinforcement_cost(_series([0.0], [0.9]), radial, inputs)
        assert cost.replaced_transformers == ("MV-B0",)
        assert cost.c_reinf_chf_yr == 0.0

    def test_element_table(self, radial):
        inputs = ReinforcementCostInputs()
        table = reinforcement_cost(_series([0.3], [0.6]), radial, inputs).to_frame(inputs).set_index("element")
        assert table.loc["B0-P", "replaced"] == 1
        assert table.loc["B0-P", "cost_chf"] == pytest.approx(35000.0)
        assert table.loc["MV-B0", "cost_chf"] == pytest.approx(36000.0)
        assert table["cost_chf"].sum() == pytest.approx(71000.0)


class TestFlexibilityCost:
    def test_curtailed_export_is_lost_revenue(self, make_stage1):
        base = make_stage1("P", [10.0, 10.0], 0.0)
        spliced = SplicedTrajectories(
            p_grid_kw={"P": np.array([5.0, 10.0])}, p_bat_kw={"P": np.zeros(2)}, soc_kwh={"P": np.zeros(2)},
            curtailment_kw={"P": np.array([5.0, 0.0])}, q_kvar={"P": np.zeros(2)}, dt_hours=1.0,
        )
        prices = PriceSeries.flat(2, 23.92, 8.16)
        assert flexibility_cost({"P": base}, spliced, prices) == pytest.approx(0.408)

    def test_extra_import_is_priced_at_the_import_rate(self, make_stage1):
        base = make_stage1("P", [0.0, 0.0], 10.0)
        spliced = SplicedTrajectories(
            p_grid_kw={"P": np.array([-15.0, -10.0])}, p_bat_kw={"P": np.zeros(2)}, soc_kwh={"P": np.zeros(2)},
            curtailment_kw={"P": np.zeros(2)}, q_kvar={"P": np.zeros(2)}, dt_hours=1.0,
        )
        prices = PriceSeries.flat(2, 23.92, 8.16)
        assert flexibility_cost_by_bus({"P": base}, spliced, prices)["P"] == pytest.approx(1.196)

    def test_cost_can_be_negative(self, make_stage1):
        base = make_stage1("P", [0.0, 20.0], 10.0)
        spliced = SplicedTrajectories(
            p_grid_kw={"P": np.array([-5.0, 5.0])}, p_bat_kw={"P": np.array([5.0, -5.0])},
            soc_kwh={"P": np.zeros(2)}, curtailment_kw={"P": np.zeros(2)}, q_kvar={"P": np.zeros(2)},
            dt_hours=1.0,
        )
        prices = PriceSeries.flat(2, 23.92, 8.16)
        assert flexibility_cost({"P": base}, spliced, prices) < 0

    def test_unchanged_trajectories_cost_nothing(self, make_stage1):
        base = make_stage1("P", [10.0, 0.0], 3.0)
        spliced = SplicedTrajectories(
            p_grid_kw={"P": base.p_grid_kw.copy()}, p_bat_kw={"P": np.zeros(2)}, soc_kwh={"P": np.zeros(2)},
            curtailment_kw={"P": np.zeros(2)}, q_kvar={"P": np.zeros(2)}, dt_hours=1.0,
        )
        assert flexibility_cost({"P": base}, spliced, PriceSeries.flat(2, 23.92, 8.16)) == 0.0

    def test_capacities_add_pv_and_battery_power(self, make_stage1):
        stage1 = {"P": make_stage1("P", [1.0], 0.0, capacity_kwh=10.0), "Q": make_stage1("Q", [1.0], 0.0)}
        assert flexibility_capacities(stage1, {"P": 20.0}) == {"P": 25.0, "Q": 0.0}


class TestCapacityValue:
    def test_value_per_kw(self):
        value = flexibility_capacity_value(5000.0, 1000.0, {"A": 60.0, "B": 40.0}, 0.051019)
        assert value == pytest.approx(784.0, rel=1e-3)

    def test_equal_costs_are_worth_nothing(self):
        assert flexibility_capacity_value(1000.0, 1000.0, {"A": 10.0}, 0.05) == 0.0

    def test_zero_capacity(self):
        with pytest.raises(ValueError, match="zero"):
            flexibility_capacity_value(1000.0, 0.0, {"A": 0.0}, 0.05)

    def test_report_value_is_nan_without_capacity(self):
        assert math.isnan(_report(50.0, 0.8, 0.0, capacities={}).flex_value_chf_kw)


class TestCostReport:
    def test_row(self):
        row = _report(120.0, 0.8, 100.0).to_row()
        assert list(row) == REPORT_COLUMNS
        assert row["curtailed_pct"] == pytest.approx(2.0)
        assert row["c_reinf_chf_yr"] == pytest.approx(2449.0, abs=1.0)

    def test_repricing_keeps_the_assessment(self):
        report = _report(120.0, 0.8, 100.0)
        cheaper = report.repriced(ReinforcementCostInputs(c_trafo=12.0))
        assert cheaper.c_trafo_kchf_mva == 12.0
        assert cheaper.c_reinf_chf_yr == pytest.approx(report.c_reinf_chf_yr / 5.0)
        assert cheaper.delta_opex_chf_yr == report.delta_opex_chf_yr

    def test_frame(self):
        frame = reports_to_frame([_report(50.0, 0.4, 0.0), _report(100.0, 0.8, 10.0)])
        assert list(frame.columns) == REPORT_COLUMNS
        assert len(frame) == 2


class TestSweep:
    @pytest.fixture
    def reports(self):
        return [_report(50.0, 0.4, 0.0), _report(100.0, 0.6, 1500.0), _report(150.0, 0.9, 1600.0)]

    def test_one_report_per_scenario_and_cost(self, reports):
        swept = sensitivity_sweep(reports, [60.0, 12.0, 30.0], ReinforcementCostInputs())
        assert len(swept) == 9
        assert [r.c_trafo_kchf_mva for r in swept[:3]] == [12.0, 30.0, 60.0]

    @pytest.mark.parametrize("values", [[60.0], [60.0, 60.0]])
    def test_needs_two_distinct_costs(self, reports, values):
        with pytest.raises(ValueError):
            sensitivity_sweep(reports, values, ReinforcementCostInputs())

    def test_break_even_moves_up_with_transformer_cost(self, reports):
        table = break_even(sensitivity_sweep(reports, [12.0, 60.0], ReinforcementCostInputs()))
        assert list(table.columns) == BREAK_EVEN_COLUMNS
        low, high = table.sort_values("c_trafo_kchf_mva").itertuples(index=False)
        assert low.break_even_penetration_pct == 50.0
        assert high.break_even_penetration_pct == 150.0
        assert low.break_even_penetration_pct <= high.break_even_penetration_pct
        assert low.scenarios_flex_cheaper == 0
        assert high.scenarios_flex_cheaper == 2

    def test_free_transformers_without_line_overloads(self):
        reports = [_report(80.0, 0.9, 0.0, c_trafo=0.0)]
        table = break_even(reports)
        assert table.loc[0, "scenarios_flex_cheaper"] == 0
        assert table.loc[0, "break_even_penetration_pct"] == 80.0

    def test_modes_are_kept_apart(self):
        reports = [_report(50.0, 0.9, 0.0, mode="with_storage"), _report(50.0, 0.9, 1e6, mode="no_storage")]
        table = break_even(reports).set_index("mode")
        assert table.loc["with_storage", "break_even_penetration_pct"] == 50.0
        assert math.isnan(table.loc["no_storage", "break_even_penetration_pct"])
