"""Per-prosumer load and normalized PV yield over the study horizon.

Profiles come either from CSV files (``timestamp,<bus_id>,...``) or from a
seeded synthetic generator that stands in for metered data.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import ProfileError
from src.grid import Network

logger = logging.getLogger(__name__)

MAX_YIELD = 1.2
DEFAULT_LATITUDE_DEG = 46.52
DEFAULT_CAPACITY_FACTOR = 0.12


@dataclass(frozen=True)
class TimeSeriesSet:
    """Aligned load (kW) and PV yield (kW per kW installed) frames.

    ``year_fraction`` is the share of a full year the horizon represents; it is
    1.0 for a full year and smaller after ``select_weeks``.
    """
    load_kw: pd.DataFrame
    pv_yield: pd.DataFrame
    step_seconds: int
    year_fraction: float = 1.0

    def __post_init__(self):
        if not self.load_kw.index.equals(self.pv_yield.index):
            raise ProfileError("load and PV yield frames must share one time index")
        if list(self.load_kw.columns) != list(self.pv_yield.columns):
            raise ProfileError("load and PV yield frames must cover the same prosumers")
        if (self.load_kw.to_numpy() < 0).any():
            raise ProfileError("load must be non-negative")
        yields = self.pv_yield.to_numpy()
        if (yields < 0).any() or (yields > MAX_YIELD).any():
            raise ProfileError(f"PV yield must lie in [0, {MAX_YIELD}]")
        if not 0 < self.year_fraction <= 1:
            raise ProfileError(f"year fraction must lie in (0, 1], got {self.year_fraction}")

    @property
    def index(self) -> pd.DatetimeIndex:
        return self.load_kw.index

    @property
    def horizon_steps(self) -> int:
        return len(self.load_kw)

    @property
    def dt_hours(self) -> float:
        return self.step_seconds / 3600.0

    @property
    def prosumers(self) -> tuple:
        return tuple(self.load_kw.columns)

    @property
    def full_year(self) -> bool:
        return self.year_fraction == 1.0

    @property
    def segment_starts(self) -> Tuple[int, ...]:
        """Step positions where the time index jumps (always starting with 0).

        A full year is one segment; after ``select_weeks`` every kept week
        that does not directly follow the previous one starts a new segment.
        """
        gaps = self.index.to_series().diff().iloc[1:] != pd.Timedelta(seconds=self.step_seconds)
        return (0, *(np.flatnonzero(gaps.to_numpy()) + 1).tolist())

    def load_of(self, bus_id: str) -> np.ndarray:
        return self.load_kw[bus_id].to_numpy(dtype=float)

    def yield_of(self, bus_id: str) -> np.ndarray:
        return self.pv_yield[bus_id].to_numpy(dtype=float)

    def annual_load_kwh(self) -> pd.Series:
        """Annualized energy demand per prosumer."""
        return self.load_kw.sum() * self.dt_hours / self.year_fraction

    def annual_yield_kwh_per_kw(self) -> pd.Series:
        return self.pv_yield.sum() * self.dt_hours / self.year_fraction


def steps_per_year(year: int, step_seconds: int) -> int:
    start = pd.Timestamp(year=year, month=1, day=1)
    seconds = (start + pd.DateOffset(years=1) - start).total_seconds()
    return int(round(seconds / step_seconds))


def year_index(year: int, step_seconds: int) -> pd.DatetimeIndex:
    return pd.date_range(
        start=pd.Timestamp(year=year, month=1, day=1),
        periods=steps_per_year(year, step_seconds),
        freq=pd.Timedelta(seconds=step_seconds),
        name="timestamp",
    )


def _read_profile_csv(path: Path, what: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except pd.errors.ParserError as e:
        raise ProfileError(f"{path}: ragged {what} file: {e}") from None
    except pd.errors.EmptyDataError:
        raise ProfileError(f"{path}: {what} file is empty") from None

    if "timestamp" not in frame.columns:
        raise ProfileError(f"{path}: missing 'timestamp' column")

    holes = frame.isna()
    if holes.to_numpy().any():
        row, col = np.argwhere(holes.to_numpy())[0]
        raise ProfileError(f"{path}: ragged or empty field at row {row + 1}, column '{frame.columns[col]}'")

    try:
        index = pd.DatetimeIndex(pd.to_datetime(frame.pop("timestamp")), name="timestamp")
    except (ValueError, TypeError) as e:
        raise ProfileError(f"{path}: unparseable timestamp: {e}") from None
    frame.index = index
    frame.columns = [str(c).strip() for c in frame.columns]

    if len(index) > 1:
        steps = np.diff(index.asi8)
        bad = np.flatnonzero(steps <= 0)
        if bad.size:
            raise ProfileError(f"{path}: timestamps not strictly increasing at row {bad[0] + 2}")
        if np.unique(steps).size != 1:
            raise ProfileError(f"{path}: timestamps are not evenly spaced")
    return frame.astype(float)


def _infer_step_seconds(index: pd.DatetimeIndex) -> int:
    if len(index) < 2:
        raise ProfileError("profile needs at least two timestamps to fix the step")
    return int((index[1] - index[0]).total_seconds())


def load_profiles(
    path,
    network: Network,
    pv_yield_path=None,
    pv_seed: int = 0,
    capacity_factor: float = DEFAULT_CAPACITY_FACTOR,
) -> TimeSeriesSet:
    """Read a full-year load profile CSV, plus an optional PV yield CSV.

    When no yield file is given every prosumer shares one synthetic clear-sky
    yield series drawn with ``pv_seed``.

    Raises:
        ProfileError: On missing prosumer columns, ragged rows, non-monotone
            timestamps, a horizon that is not exactly one year, or negative load
    """
    path = Path(path)
    frame = _read_profile_csv(path, "load")
    step_seconds = _infer_step_seconds(frame.index)

    missing = [bus for bus in network.prosumers if bus not in frame.columns]
    if missing:
        raise ProfileError(f"{path}: no load column for prosumer bus '{missing[0]}'")
    frame = frame[list(network.prosumers)]

    expected = steps_per_year(frame.index[0].year, step_seconds)
    if len(frame) != expected:
        raise ProfileError(
            f"{path}: horizon has {len(frame)} steps, a year at {step_seconds} s needs {expected}"
        )

    negative = np.argwhere(frame.to_numpy() < 0)
    if negative.size:
        row, col = negative[0]
        raise ProfileError(f"{path}: negative load at row {row + 1} for bus '{frame.columns[col]}'")

    if pv_yield_path is not None:
        pv_path = Path(pv_yield_path)
        yields = _read_profile_csv(pv_path, "PV yield")
        missing = [bus for bus in network.prosumers if bus not in yields.columns]
        if missing:
            raise ProfileError(f"{pv_path}: no yield column for prosumer bus '{missing[0]}'")
        yields = yields[list(network.prosumers)]
        if not yields.index.equals(frame.index):
            raise ProfileError(f"{pv_path}: yield timestamps do not match the load file")
    else:
        shape = clear_sky_yield(frame.index, pv_seed, capacity_factor=capacity_factor)
        yields = pd.DataFrame(
            np.repeat(shape[:, None], len(network.prosumers), axis=1),
            index=frame.index,
            columns=list(network.prosumers),
        )

    logger.info("Loaded profiles from %s: %d steps x %d prosumers", path, len(frame), frame.shape[1])
    return TimeSeriesSet(load_kw=frame, pv_yield=yields, step_seconds=step_seconds)


def clear_sky_yield(
    index: pd.DatetimeIndex,
    seed: int,
    capacity_factor: float = DEFAULT_CAPACITY_FACTOR,
    latitude_deg: float = DEFAULT_LATITUDE_DEG,
) -> np.ndarray:
    """Normalized PV output: a clear-sky envelope modulated by seeded cloud noise.

    The result is scaled to the requested mean capacity factor and clipped to
    the enhancement ceiling.
    """
    rng = np.random.default_rng(seed)
    step_hours = (index[1] - index[0]).total_seconds() / 3600.0 if len(index) > 1 else 1.0
    doy = index.dayofyear.to_numpy()
    hours = index.hour.to_numpy() + index.minute.to_numpy() / 60.0 + step_hours / 2.0

    lat = np.radians(latitude_deg)
    declination = np.radians(23.45) * np.sin(2 * np.pi * (284 + doy) / 365.0)
    hour_angle = np.radians(15.0 * (hours - 12.0))
    sin_elev = np.sin(lat) * np.sin(declination) + np.cos(lat) * np.cos(declination) * np.cos(hour_angle)
    envelope = np.clip(sin_elev, 0.0, None) ** 1.2

    days = index.normalize()
    _, day_of_step = np.unique(days.asi8, return_inverse=True)
    clearness = rng.beta(2.5, 1.2, size=day_of_step.max() + 1)[day_of_step]
    flicker = np.clip(1.0 + 0.15 * rng.standard_normal(len(index)), 0.3, 1.4)

    raw = envelope * clearness * flicker
    mean = raw.mean()
    if mean <= 0:
        return np.zeros(len(index))
    return np.clip(raw * capacity_factor / mean, 0.0, MAX_YIELD)


def _load_shape(index: pd.DatetimeIndex, rng: np.random.Generator) -> np.ndarray:
    hours = index.hour.to_numpy() + index.minute.to_numpy() / 60.0
    doy = index.dayofyear.to_numpy()
    weekend = index.dayofweek.to_numpy() >= 5

    residential = (
        0.6
        + 0.4 * np.exp(-(((hours - 8.0) / 2.0) ** 2))
        + 0.8 * np.exp(-(((hours - 19.0) / 2.5) ** 2))
    )
    business = 0.3 + 0.9 / (1.0 + np.exp(-(hours - 8.0) * 2.0)) / (1.0 + np.exp((hours - 18.0) * 2.0))
    business = np.where(weekend, 0.3 + 0.3 * (business - 0.3), business)

    mix = rng.uniform()
    daily = mix * residential + (1.0 - mix) * business
    seasonal = 1.0 + 0.2 * np.cos(2 * np.pi * (doy - 15) / 365.0)
    noise = rng.lognormal(mean=0.0, sigma=0.15, size=len(index))
    return daily * seasonal * noise


def synthesize_profiles(
    seed: int,
    annual_demand_mwh: Union[Sequence[float], Mapping[str, float]],
    network: Network,
    year: int = 2021,
    step_seconds: int = 900,
    capacity_factor: float = DEFAULT_CAPACITY_FACTOR,
) -> TimeSeriesSet:
    """Generate a deterministic full-year profile set.

    Args:
        seed: Seed for every random draw
        annual_demand_mwh: One target per prosumer bus, in network order, or a
            mapping keyed by bus id
        network: Network whose prosumer buses get columns
        year: Calendar year of the horizon
        step_seconds: Time step
        capacity_factor: Mean of the normalized PV yield

    Returns:
        TimeSeriesSet whose load columns integrate exactly to their targets
    """
    prosumers = list(network.prosumers)
    if isinstance(annual_demand_mwh, Mapping):
        missing = [bus for bus in prosumers if bus not in annual_demand_mwh]
        if missing:
            raise ProfileError(f"no annual demand target for prosumer bus '{missing[0]}'")
        targets = [float(annual_demand_mwh[bus]) for bus in prosumers]
    else:
        targets = [float(v) for v in annual_demand_mwh]
        if len(targets) != len(prosumers):
            raise ProfileError(
                f"expected {len(prosumers)} annual demand targets, got {len(targets)}"
            )
    if any(t < 0 for t in targets):
        raise ProfileError("annual demand targets must be non-negative")

    index = year_index(year, step_seconds)
    dt_hours = step_seconds / 3600.0
    rng = np.random.default_rng(seed)

    loads = {}
    for bus, target_mwh in zip(prosumers, targets):
        shape = _load_shape(index, rng)
        energy = shape.sum() * dt_hours
        loads[bus] = shape * (target_mwh * 1000.0 / energy) if target_mwh > 0 else np.zeros(len(index))

    yields = clear_sky_yield(index, int(rng.integers(2**31)), capacity_factor=capacity_factor)
    load_frame = pd.DataFrame(loads, index=index, columns=prosumers)
    yield_frame = pd.DataFrame(
        np.repeat(yields[:, None], len(prosumers), axis=1), index=index, columns=prosumers
    )
    logger.info(
        "Synthesized %d-step profiles for %d prosumers (seed %d, %.2f MWh total)",
        len(index), len(prosumers), seed, sum(targets),
    )
    return TimeSeriesSet(load_kw=load_frame, pv_yield=yield_frame, step_seconds=step_seconds)


def select_weeks(profiles: TimeSeriesSet, weeks: Sequence[int]) -> TimeSeriesSet:
    """Keep only the steps that fall in the given ISO calendar weeks.

    The kept weeks are stacked in calendar order; ``segment_starts`` of the
    result marks each jump so storage and periods do not run across it.
    """
    if not weeks:
        return profiles
    week_of_step = profiles.index.isocalendar().week.to_numpy()
    mask = np.isin(week_of_step, list(weeks))
    if not mask.any():
        raise ProfileError(f"none of the weeks {list(weeks)} fall inside the horizon")
    fraction = profiles.year_fraction * mask.sum() / profiles.horizon_steps
    logger.info("Reduced horizon to ISO weeks %s (%d steps)", list(weeks), int(mask.sum()))
    return replace(
        profiles,
        load_kw=profiles.load_kw.loc[mask],
        pv_yield=profiles.pv_yield.loc[mask],
        year_fraction=float(fraction),
    )


def write_profiles(profiles: TimeSeriesSet, load_path, pv_yield_path: Optional[Path] = None) -> None:
    """Write the load (and optionally yield) frames in the ingestion format."""
    profiles.load_kw.to_csv(load_path, index_label="timestamp", float_format="%.9g")
    if pv_yield_path is not None:
        profiles.pv_yield.to_csv(pv_yield_path, index_label="timestamp", float_format="%.9g")
