"""Shared fixtures: small hand-checkable networks and stage-1 builders."""

import numpy as np
import pytest

from src.dispatch import BatteryParams, DispatchSolution, PriceSeries
from src.grid import OperatingLimits, build_admittance, load_cigre_lv, parse_network
from src.profiles import PvEntry, PvScenario, load_prosumer_table, synthesize_profiles

# Slack and one prosumer on a 1 km line: z = 0.1 + j0.1 ohm on a 0.16 ohm base.
TWO_BUS_NET = """
bus,S,slack,0.4,0
bus,L,pq,0.4,1
branch,S,L,1.0,0.1,0.1,1.0,0,0
"""

# MV slack, a 100 kVA transformer (1 % / 4 %) and a short LV line to the prosumer.
FEEDER_NET = """
bus,MV,slack,20,0
bus,B1,pq,0.4,0
bus,B2,pq,0.4,1
branch,MV,B1,0,1.0,4.0,0.01,1,0.1
branch,B1,B2,0.05,0.2,0.08,1.0,0,0
"""

# Two prosumers behind one transformer, mirrored so both see the same impedance.
TWIN_NET = """
bus,MV,slack,20,0
bus,B0,pq,0.4,0
bus,P1,pq,0.4,1
bus,P2,pq,0.4,1
branch,MV,B0,0,1.0,4.0,0.5,1,0.4
branch,B0,P1,0.1,0.2,0.08,0.3,0,0
branch,B0,P2,0.1,0.2,0.08,0.3,0,0
"""


@pytest.fixture(scope="session")
def two_bus_network():
    return parse_network(TWO_BUS_NET.splitlines(), name="two_bus")


@pytest.fixture(scope="session")
def feeder_network():
    return parse_network(FEEDER_NET.splitlines(), name="feeder")


@pytest.fixture(scope="session")
def twin_network():
    return parse_network(TWIN_NET.splitlines(), name="twin")


@pytest.fixture
def feeder(feeder_network):
    """(network, admittance, limits) of the one-prosumer feeder."""
    return feeder_network, build_admittance(feeder_network), OperatingLimits.from_network(feeder_network)


@pytest.fixture(scope="session")
def cigre_network():
    return load_cigre_lv()


@pytest.fixture(scope="session")
def cigre_year(cigre_network):
    """Seeded full-year profiles for the bundled prosumer table."""
    table = load_prosumer_table()
    return table, synthesize_profiles(0, table["annual_demand_mwh"].to_dict(), cigre_network)


@pytest.fixture(scope="session")
def write_feeder_case():
    """Write network, prosumer table and config file of the feeder case into a directory."""
    def _write(root, pv_max_kw=150.0, weeks="26", modes="no_storage"):
        net = root / "feeder.net"
        net.write_text(FEEDER_NET.strip() + "\n", encoding="utf-8")
        table = root / "prosumers.csv"
        table.write_text(f"bus_id,annual_demand_mwh,pv_max_kw\nB2,5.0,{pv_max_kw}\n", encoding="utf-8")
        conf = root / "study.conf"
        conf.write_text(
            f"paths.network = {net}\n"
            f"paths.prosumers = {table}\n"
            f"profiles.weeks = {weeks}\n"
            "pv.scales = 1.0\n"
            f"study.modes = {modes}\n",
            encoding="utf-8",
        )
        return {"network": net, "prosumers": table, "config": conf}

    return _write


@pytest.fixture
def feeder_files(tmp_path, write_feeder_case):
    """Network, prosumer table and config file of the feeder case on disk."""
    return write_feeder_case(tmp_path)


@pytest.fixture
def make_stage1():
    """Build a stage-1 DispatchSolution from a stored battery trajectory.

    Defaults: hourly steps, flat 23.92 / 8.16 cts prices, no battery.
    """
    def _make(bus, pv_kw, load_kw, capacity_kwh=0.0, p_bat_kw=None, soc_kwh=None,
              dt_hours=1.0, prices=None, params=None):
        pv_kw = np.asarray(pv_kw, dtype=float)
        load_kw = np.broadcast_to(np.asarray(load_kw, dtype=float), pv_kw.shape).copy()
        steps = len(pv_kw)
        p_bat_kw = np.zeros(steps) if p_bat_kw is None else np.asarray(p_bat_kw, dtype=float)
        soc_kwh = np.full(steps, 0.5 * capacity_kwh) if soc_kwh is None else np.asarray(soc_kwh, dtype=float)
        return DispatchSolution.from_trajectory(
            bus, p_bat_kw, soc_kwh, pv_kw, load_kw, capacity_kwh,
            params or BatteryParams(),
            prices or PriceSeries.flat(steps, 23.92, 8.16),
            dt_hours,
        )

    return _make


@pytest.fixture
def make_scenario():
    """PvScenario with the given kW per bus in 0.4 kW modules."""
    def _make(capacities_kw, scale=1.0):
        entries = {
            bus: PvEntry(
                module_count=int(round(kw / 0.4)),
                module_count_max=int(round(kw / 0.4)),
                module_kw=0.4,
                lcoe_cts=5.0,
            )
            for bus, kw in capacities_kw.items()
        }
        return PvScenario(scale=scale, module_kw=0.4, entries=entries, penetration=0.0)

    return _make
