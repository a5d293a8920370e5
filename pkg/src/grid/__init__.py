"""Network model, per-unit admittance assembly and the bundled CIGRE LV fixture.

Usage:
    from src.grid import load_network, build_admittance

    network = load_network("src/grid/data/cigre_lv.net")
    admittance = build_admittance(network)
"""

from .network import (
    CIGRE_LV_PATH,
    DATA_DIR,
    Bus,
    BusKind,
    Line,
    Network,
    OperatingLimits,
    load_cigre_lv,
    load_network,
    parse_network,
)
from .admittance import (
    S_BASE_MVA,
    AdmittanceModel,
    base_current_ka,
    base_impedance_ohm,
    build_admittance,
    current_from_pu,
    current_to_pu,
)

PROSUMERS_PATH = DATA_DIR / "prosumers.csv"

__all__ = [
    "CIGRE_LV_PATH",
    "DATA_DIR",
    "PROSUMERS_PATH",
    "S_BASE_MVA",
    "AdmittanceModel",
    "Bus",
    "BusKind",
    "Line",
    "Network",
    "OperatingLimits",
    "base_current_ka",
    "base_impedance_ohm",
    "build_admittance",
    "current_from_pu",
    "current_to_pu",
    "load_cigre_lv",
    "load_network",
    "parse_network",
]
