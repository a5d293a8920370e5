"""Low-voltage network model: buses, branches and operating limits.

Networks are read from a line-oriented text format with two record kinds::

    bus,<id>,<kind>,<kV>,<is_prosumer>
    branch,<from>,<to>,<km>,<ohm_per_km_r>,<ohm_per_km_x>,<kA>,<is_trafo>,<MVA>

For transformer branches ``<km>`` is ignored and the two impedance fields carry
the short-circuit resistance and reactance in percent on the transformer's own
rating; leaving both at zero selects the configured default.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from src.errors import NetworkFormatError, TopologyError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
CIGRE_LV_PATH = DATA_DIR / "cigre_lv.net"

_TRUE = {"1", "true", "yes", "y"}
_FALSE = {"0", "false", "no", "n"}


class BusKind(Enum):
    SLACK = "slack"
    PQ = "pq"


@dataclass(frozen=True)
class Bus:
    id: str
    kind: BusKind
    base_kv: float
    is_prosumer: bool = False


@dataclass(frozen=True)
class Line:
    """A series branch. Transformer branches have ``from_bus`` on the HV side."""
    from_bus: str
    to_bus: str
    length_km: float
    r_ohm_per_km: float
    x_ohm_per_km: float
    ampacity_ka: float
    is_transformer: bool = False
    rating_mva: float = 0.0
    id: str = ""

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", f"{self.from_bus}-{self.to_bus}")

    @property
    def impedance_ohm(self) -> complex:
        return complex(self.r_ohm_per_km, self.x_ohm_per_km) * self.length_km


def _check_line(line: Line) -> Optional[str]:
    """Return a description of the first numeric invariant ``line`` breaks."""
    if line.ampacity_ka <= 0:
        return f"branch {line.id}: ampacity must be positive"
    if line.is_transformer:
        if line.rating_mva <= 0:
            return f"transformer {line.id}: rating must be positive"
        if line.r_ohm_per_km < 0 or line.x_ohm_per_km < 0:
            return f"transformer {line.id}: short-circuit percentages must be non-negative"
    elif line.length_km <= 0:
        return f"branch {line.id}: length must be positive"
    return None


@dataclass(frozen=True)
class Network:
    """Validated, immutable network topology."""
    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...] = ()
    name: str = "network"

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        self._validate()

    def _validate(self):
        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                raise TopologyError(f"duplicate bus id '{bus.id}'")
            if bus.base_kv <= 0:
                raise TopologyError(f"bus '{bus.id}' has non-positive base voltage")
            seen.add(bus.id)

        slacks = [b.id for b in self.buses if b.kind is BusKind.SLACK]
        if not slacks:
            raise TopologyError("network has no slack bus")
        if len(slacks) > 1:
            raise TopologyError(f"network has {len(slacks)} slack buses: {', '.join(slacks)}")

        line_ids = set()
        kv = {b.id: b.base_kv for b in self.buses}
        for line in self.lines:
            for end in (line.from_bus, line.to_bus):
                if end not in kv:
                    raise TopologyError(f"branch {line.id} references unknown bus '{end}'")
            if line.from_bus == line.to_bus:
                raise TopologyError(f"branch {line.id} connects bus '{line.from_bus}' to itself")
            if line.id in line_ids:
                raise TopologyError(f"duplicate branch id '{line.id}'")
            line_ids.add(line.id)
            problem = _check_line(line)
            if problem:
                raise TopologyError(problem)
            if not line.is_transformer and kv[line.from_bus] != kv[line.to_bus]:
                raise TopologyError(
                    f"line {line.id} joins different voltage levels; use a transformer branch"
                )

    @cached_property
    def bus_index(self) -> Dict[str, int]:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.kind is BusKind.SLACK)

    @cached_property
    def prosumers(self) -> Tuple[str, ...]:
        return tuple(b.id for b in self.buses if b.is_prosumer)

    @cached_property
    def transformers(self) -> Tuple[Line, ...]:
        return tuple(line for line in self.lines if line.is_transformer)

    @cached_property
    def physical_lines(self) -> Tuple[Line, ...]:
        return tuple(line for line in self.lines if not line.is_transformer)

    def bus(self, bus_id: str) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def line(self, line_id: str) -> Line:
        for line in self.lines:
            if line.id == line_id:
                return line
        raise KeyError(line_id)


@dataclass(frozen=True)
class OperatingLimits:
    """Voltage band plus per-element thermal limits.

    ``ampacity_ka`` covers physical lines only; transformer branches are
    limited by ``rating_mva``.
    """
    v_min: float = 0.95
    v_max: float = 1.05
    ampacity_ka: Dict[str, float] = field(default_factory=dict)
    rating_mva: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.v_min < 1 < self.v_max):
            raise ValueError(f"voltage band must satisfy 0 < v_min < 1 < v_max, got {self.v_min}..{self.v_max}")

    @classmethod
    def from_network(cls, network: Network, v_min: float = 0.95, v_max: float = 1.05) -> "OperatingLimits":
        return cls(
            v_min=v_min,
            v_max=v_max,
            ampacity_ka={line.id: line.ampacity_ka for line in network.physical_lines},
            rating_mva={line.id: line.rating_mva for line in network.transformers},
        )


def _parse_bool(raw: str, path: str, line_no: int) -> bool:
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise NetworkFormatError(path, line_no, f"expected a boolean, got '{raw}'")


def _parse_float(raw: str, path: str, line_no: int, what: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise NetworkFormatError(path, line_no, f"{what}: expected a number, got '{raw}'") from None


def parse_network(lines: Iterable[str], name: str = "network", source: str = "<string>") -> Network:
    """Parse network records from an iterable of text lines."""
    buses: List[Bus] = []
    branches: List[Line] = []
    id_counts: Dict[str, int] = {}

    for line_no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        fields = [f.strip() for f in text.split(",")]
        kind = fields[0].lower()

        if kind == "bus":
            if len(fields) != 5:
                raise NetworkFormatError(source, line_no, f"bus record needs 5 fields, got {len(fields)}")
            _, bus_id, bus_kind, kv, prosumer = fields
            try:
                parsed_kind = BusKind(bus_kind.lower())
            except ValueError:
                raise NetworkFormatError(source, line_no, f"unknown bus kind '{bus_kind}'") from None
            buses.append(Bus(
                id=bus_id,
                kind=parsed_kind,
                base_kv=_parse_float(kv, source, line_no, "base voltage"),
                is_prosumer=_parse_bool(prosumer, source, line_no),
            ))
        elif kind == "branch":
            if len(fields) != 9:
                raise NetworkFormatError(source, line_no, f"branch record needs 9 fields, got {len(fields)}")
            _, from_bus, to_bus, km, r, x, ka, is_trafo, mva = fields
            base_id = f"{from_bus}-{to_bus}"
            id_counts[base_id] = id_counts.get(base_id, 0) + 1
            branch_id = base_id if id_counts[base_id] == 1 else f"{base_id}#{id_counts[base_id]}"
            branch = Line(
                from_bus=from_bus,
                to_bus=to_bus,
                length_km=_parse_float(km, source, line_no, "length"),
                r_ohm_per_km=_parse_float(r, source, line_no, "resistance"),
                x_ohm_per_km=_parse_float(x, source, line_no, "reactance"),
                ampacity_ka=_parse_float(ka, source, line_no, "ampacity"),
                is_transformer=_parse_bool(is_trafo, source, line_no),
                rating_mva=_parse_float(mva, source, line_no, "rating"),
                id=branch_id,
            )
            problem = _check_line(branch)
            if problem:
                raise NetworkFormatError(source, line_no, problem)
            branches.append(branch)
        else:
            raise NetworkFormatError(source, line_no, f"unknown record kind '{fields[0]}'")

    return Network(buses=tuple(buses), lines=tuple(branches), name=name)


def load_network(path) -> Network:
    """Read and validate a network file.

    Raises:
        NetworkFormatError: a record does not parse (carries the line number)
        TopologyError: the records parse but do not form a valid network
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        network = parse_network(fh, name=path.stem, source=str(path))
    logger.info(
        "Loaded network %s: %d buses, %d branches, %d prosumers",
        network.name, len(network.buses), len(network.lines), len(network.prosumers),
    )
    return network


def load_cigre_lv() -> Network:
    return load_network(CIGRE_LV_PATH)
