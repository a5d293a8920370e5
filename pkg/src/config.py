"""Study configuration: validated parameter groups read from a flat key-value file.

File format, one setting per line::

    # comment
    pv.scales = 0.25, 0.55, 1.0
    tariff.peak_cts = 23.92

Values given on the command line override the file, which overrides defaults.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.dispatch import BatteryParams, Tariff
from src.economics import ReinforcementCostInputs
from src.errors import ConfigError
from src.flexopf import OpfMode, OpfOptions
from src.powerflow import AuditOptions, PowerFlowOptions
from src.profiles import DEFAULT_SCALES, LcoeParams

logger = logging.getLogger(__name__)

REPRESENTATIVE_WEEKS = (3, 16, 29, 42)


def _as_tuple(value):
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if isinstance(value, (int, float)):
        return (value,)
    return value


class PathOptions(BaseModel):
    """Input files; ``None`` selects the bundled fixture or synthetic profiles."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    network: Optional[Path] = None
    prosumers: Optional[Path] = None
    profiles: Optional[Path] = None
    pv_yield: Optional[Path] = None

    @field_validator("network", "prosumers", "profiles", "pv_yield")
    @classmethod
    def _exists(cls, value):
        if value is not None and not value.exists():
            raise ValueError(f"file not found: {value}")
        return value


class NetworkOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    v_min: float = Field(0.95, gt=0, lt=1)
    v_max: float = Field(1.05, gt=1)
    trafo_r_pct: float = Field(1.0, ge=0)
    trafo_x_pct: float = Field(4.0, ge=0)


class ProfileOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    year: int = 2021
    step_seconds: int = Field(900, gt=0)
    weeks: Tuple[int, ...] = ()
    capacity_factor: float = Field(0.12, ge=0.10, le=0.15)

    @field_validator("weeks", mode="before")
    @classmethod
    def _split(cls, value):
        if isinstance(value, str) and value.strip().lower() == "representative":
            return REPRESENTATIVE_WEEKS
        return _as_tuple(value)


class PvOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    module_kw: float = Field(0.4, gt=0)
    scales: Tuple[float, ...] = DEFAULT_SCALES
    q_ratio: float = Field(0.4, ge=0)

    @field_validator("scales", mode="before")
    @classmethod
    def _split(cls, value):
        return _as_tuple(value)

    @field_validator("scales")
    @classmethod
    def _in_range(cls, value):
        bad = [s for s in value if not 0 < s <= 1]
        if bad:
            raise ValueError(f"scales must lie in (0, 1], got {bad}")
        return value


class StudyOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: Tuple[OpfMode, ...] = (OpfMode.WITH_STORAGE, OpfMode.NO_STORAGE)
    workers: int = Field(1, ge=1, description="scenario processes")
    dispatch_workers: int = Field(1, ge=1, description="prosumer threads per scenario")
    out: Path = Path("results")

    @field_validator("modes", mode="before")
    @classmethod
    def _split(cls, value):
        return _as_tuple(value)

    @field_validator("modes")
    @classmethod
    def _non_empty(cls, value):
        if not value:
            raise ValueError("at least one mode must be requested")
        return tuple(dict.fromkeys(value))


class StudyConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    paths: PathOptions = PathOptions()
    network: NetworkOptions = NetworkOptions()
    profiles: ProfileOptions = ProfileOptions()
    pv: PvOptions = PvOptions()
    lcoe: LcoeParams = LcoeParams()
    tariff: Tariff = Tariff()
    battery: BatteryParams = BatteryParams()
    pf: PowerFlowOptions = PowerFlowOptions()
    audit: AuditOptions = AuditOptions()
    opf: OpfOptions = OpfOptions()
    grid: ReinforcementCostInputs = ReinforcementCostInputs()
    study: StudyOptions = StudyOptions()


def _coerce(raw: str) -> Any:
    value = raw.strip()
    if "," in value:
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def _set(tree: Dict[str, Dict[str, Any]], key: str, value: Any, where: str) -> None:
    section, dot, name = key.strip().partition(".")
    if not dot or not section or not name:
        raise ConfigError(f"{where}: expected 'section.key', got '{key.strip()}'")
    if section not in StudyConfig.model_fields:
        known = ", ".join(StudyConfig.model_fields)
        raise ConfigError(f"{where}: unknown section '{section}' (known: {known})")
    tree.setdefault(section, {})[name] = value


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Dict[str, Any]]:
    """Parse ``section.key = value`` lines into a nested dict of raw values."""
    tree: Dict[str, Dict[str, Any]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"{source}:{line_no}: expected 'section.key = value'")
        _set(tree, key, _coerce(value), f"{source}:{line_no}")
    return tree


def build_config(tree: Mapping[str, Mapping[str, Any]]) -> StudyConfig:
    """Validate a nested dict of raw values.

    Raises:
        ConfigError: Naming the first offending key
    """
    try:
        return StudyConfig.model_validate(tree)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid setting '{key}': {first['msg']}") from None


def load_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> StudyConfig:
    """Read a config file (optional) and apply ``section.key`` overrides on top.

    Raises:
        ConfigError: Unreadable file, malformed line, unknown key or invalid value
    """
    tree: Dict[str, Dict[str, Any]] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from None
        tree = parse_config_text(text, str(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        _set(tree, key, _coerce(value) if isinstance(value, str) else value, "override")
    config = build_config(tree)
    logger.debug("Loaded config from %s with %d overrides", path or "defaults", len(overrides or {}))
    return config


def dump_config(config: StudyConfig) -> str:
    """Render ``config`` back into the file format, one line per setting."""
    lines = []
    for section, model in config:
        for name, value in model.model_dump(mode="json").items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{section}.{name} = {value}")
    return "\n".join(lines) + "\n"
