"""Network parsing, validation and per-unit admittance assembly."""

import numpy as np
import pytest

from src.errors import NetworkFormatError, TopologyError
from src.grid import (
    BusKind,
    OperatingLimits,
    base_current_ka,
    build_admittance,
    load_network,
    parse_network,
)

CIGRE_PROSUMERS = {
    "R1", "R11", "R15", "R16", "R17", "R18", "I2",
    "C1", "C12", "C13", "C14", "C17", "C18", "C19", "C20",
}


def _net(text):
    return parse_network(text.strip().splitlines())


class TestCigreFixture:
    def test_prosumer_buses(self, cigre_network):
        assert set(cigre_network.prosumers) == CIGRE_PROSUMERS
        assert len(cigre_network.prosumers) == 15

    def test_single_slack_on_the_mv_side(self, cigre_network):
        assert cigre_network.slack.id == "MV0"
        assert cigre_network.slack.kind is BusKind.SLACK
        assert cigre_network.slack.base_kv == 20

    def test_three_distribution_transformers(self, cigre_network):
        ratings = {t.id: t.rating_mva for t in cigre_network.transformers}
        assert ratings == {"MV0-R1": 0.5, "MV0-I1": 0.15, "MV0-C1": 0.3}

    def test_lines_stay_on_one_voltage_level(self, cigre_network):
        for line in cigre_network.physical_lines:
            assert cigre_network.bus(line.from_bus).base_kv == cigre_network.bus(line.to_bus).base_kv

    def test_admittance_builds(self, cigre_network):
        adm = build_admittance(cigre_network)
        assert adm.ybus.shape == (len(cigre_network.buses),) * 2
        assert set(adm.prosumer_ids) == CIGRE_PROSUMERS


class TestParsing:
    def test_single_slack_without_branches_is_valid(self):
        network = _net("bus,S,slack,0.4,0")
        assert network.slack.id == "S"
        assert network.lines == ()

    def test_comments_and_blank_lines_are_skipped(self):
        network = _net("""
            # header
            bus,S,slack,0.4,0   # slack

            bus,A,pq,0.4,1
            branch,S,A,0.2,0.2,0.08,0.3,0,0
        """)
        assert [b.id for b in network.buses] == ["S", "A"]
        assert network.prosumers == ("A",)

    def test_unknown_bus_is_named(self):
        with pytest.raises(TopologyError, match="X9"):
            _net("""
                bus,S,slack,0.4,0
                branch,S,X9,0.1,0.2,0.08,0.3,0,0
            """)

    def test_missing_slack(self):
        with pytest.raises(TopologyError, match="no slack"):
            _net("bus,A,pq,0.4,0")

    def test_two_slacks(self):
        with pytest.raises(TopologyError, match="2 slack"):
            _net("""
                bus,S,slack,0.4,0
                bus,T,slack,0.4,0
            """)

    def test_line_across_voltage_levels_needs_a_transformer(self):
        with pytest.raises(TopologyError, match="voltage levels"):
            _net("""
                bus,S,slack,20,0
                bus,A,pq,0.4,0
                branch,S,A,0.1,0.2,0.08,0.3,0,0
            """)

    def test_self_loop(self):
        with pytest.raises(TopologyError, match="itself"):
            _net("""
                bus,S,slack,0.4,0
                branch,S,S,0.1,0.2,0.08,0.3,0,0
            """)

    def test_malformed_record_carries_line_number(self):
        with pytest.raises(NetworkFormatError) as info:
            _net("""
                bus,S,slack,0.4,0
                bus,A,pq,0.4
            """)
        assert info.value.line_no == 2

    def test_non_numeric_field(self):
        with pytest.raises(NetworkFormatError, match="length"):
            _net("""
                bus,S,slack,0.4,0
                bus,A,pq,0.4,0
                branch,S,A,far,0.2,0.08,0.3,0,0
            """)

    def test_non_positive_ampacity_is_rejected(self):
        with pytest.raises(NetworkFormatError, match="ampacity"):
            _net("""
                bus,S,slack,0.4,0
                bus,A,pq,0.4,0
                branch,S,A,0.1,0.2,0.08,0,0,0
            """)

    def test_parallel_branches_get_distinct_ids(self):
        network = _net("""
            bus,S,slack,0.4,0
            bus,A,pq,0.4,0
            branch,S,A,1,0.1,0.1,1,0,0
            branch,S,A,1,0.1,0.1,1,0,0
        """)
        assert [line.id for line in network.lines] == ["S-A", "S-A#2"]

    def test_load_network_from_file(self, tmp_path):
        path = tmp_path / "small.net"
        path.write_text("bus,S,slack,0.4,0\nbus,A,pq,0.4,1\nbranch,S,A,1,0.1,0.1,1,0,0\n")
        network = load_network(path)
        assert network.name == "small"
        assert network.prosumers == ("A",)


class TestAdmittance:
    def test_branch_admittance_in_per_unit(self, two_bus_network):
        adm = build_admittance(two_bus_network)
        assert adm.y_branch[0] == pytest.approx(0.8 - 0.8j, abs=1e-12)
        assert adm.conductance[0] == pytest.approx(0.8)
        assert adm.susceptance[0] == pytest.approx(-0.8)

    def test_nodal_matrix_structure(self, two_bus_network):
        ybus = build_admittance(two_bus_network).ybus.toarray()
        y = 0.8 - 0.8j
        np.testing.assert_allclose(ybus, [[y, -y], [-y, y]], atol=1e-12)

    def test_purely_resistive_branch_has_no_susceptance(self):
        adm = build_admittance(_net("""
            bus,S,slack,0.4,0
            bus,A,pq,0.4,0
            branch,S,A,1,0.16,0,1,0,0
        """))
        assert adm.susceptance[0] == 0.0
        assert adm.conductance[0] == pytest.approx(1.0)

    def test_parallel_branches_double_the_nodal_admittance(self, two_bus_network):
        single = build_admittance(two_bus_network).ybus.toarray()
        double = build_admittance(_net("""
            bus,S,slack,0.4,0
            bus,L,pq,0.4,1
            branch,S,L,1.0,0.1,0.1,1.0,0,0
            branch,S,L,1.0,0.1,0.1,1.0,0,0
        """)).ybus.toarray()
        np.testing.assert_allclose(double, 2 * single, atol=1e-12)

    def test_zero_impedance_branch_is_rejected(self):
        network = _net("""
            bus,S,slack,0.4,0
            bus,A,pq,0.4,0
            branch,S,A,1,0,0,1,0,0
        """)
        with pytest.raises(TopologyError, match="S-A"):
            build_admittance(network)

    def test_transformer_impedance_on_own_rating(self, feeder_network):
        adm = build_admittance(feeder_network)
        k = adm.branch_position("MV-B1")
        assert adm.branch_impedance[k] == pytest.approx(0.1 + 0.4j)

    def test_transformer_default_impedance(self):
        adm = build_admittance(_net("""
            bus,S,slack,20,0
            bus,A,pq,0.4,0
            branch,S,A,0,0,0,0.01,1,0.25
        """), trafo_r_pct=2.0, trafo_x_pct=6.0)
        assert adm.branch_impedance[0] == pytest.approx((0.02 + 0.06j) / 0.25)

    def test_current_base(self):
        assert base_current_ka(0.4) == pytest.approx(1.0 / (np.sqrt(3) * 0.4))


class TestOperatingLimits:
    def test_thermal_limits_split_by_branch_kind(self, feeder_network):
        limits = OperatingLimits.from_network(feeder_network)
        assert limits.ampacity_ka == {"B1-B2": 1.0}
        assert limits.rating_mva == {"MV-B1": 0.1}

    def test_voltage_band_must_straddle_one(self):
        with pytest.raises(ValueError):
            OperatingLimits(v_min=1.01, v_max=1.05)
