"""Coordinate frames, the variable catalog, and grid geometry.

Every tensor in the pipeline travels with an explicit :class:`CoordinateSet`
over the six dimensions in :data:`DIMS`. Frames are compared with
:func:`validate_coords`, which raises a typed error naming the first
offending dimension instead of letting silently misaligned arrays through.

Grid convention: latitude index 0 is +90 and rows run north to south;
longitude index 0 is 0 east and columns run eastward to 360 - resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    CoordinateMismatchError,
    InvalidCoordinateError,
    InvalidResolutionError,
)

DIMS = ("batch", "time", "lead_time", "variable", "lat", "lon")

# Hours between successive model steps and between ingest cycles.
LEAD_STEP_HOURS = 6
CYCLE_HOURS = 6

SURFACE_VARIABLES = (
    ("u10m", "m s-1"),
    ("v10m", "m s-1"),
    ("u100m", "m s-1"),
    ("v100m", "m s-1"),
    ("t2m", "K"),
    ("sp", "Pa"),
    ("msl", "Pa"),
    ("tcwv", "mm"),
)

PRESSURE_VARIABLES = (
    ("u", "m s-1"),
    ("v", "m s-1"),
    ("z", "m2 s-2"),
    ("t", "K"),
    ("q", "kg kg-1"),
)

DEFAULT_PRESSURE_LEVELS = (50, 100, 150, 200, 250, 300, 400, 500, 600, 700, 850, 925, 1000)

EXTRA_VARIABLES = (
    ("sst", "K"),
    ("tp", "mm"),
)


@dataclass(frozen=True)
class VariableEntry:
    """One catalog row: a named field with its kind and units."""

    name: str
    kind: str  # "surface", "pressure", or "extra"
    level: int | None  # millibars for pressure variables, else None
    units: str


class VariableCatalog:
    """Ordered, immutable set of variable entries with name lookup."""

    def __init__(self, entries: Sequence[VariableEntry]):
        self.entries = tuple(entries)
        self._index = {e.name: i for i, e in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise ValueError("catalog names must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[VariableEntry]:
        return iter(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def lookup(self, name: str) -> VariableEntry:
        return self.entries[self._index[name]]

    def index_of(self, name: str) -> int:
        return self._index[name]

    def by_kind(self, kind: str) -> tuple[VariableEntry, ...]:
        return tuple(e for e in self.entries if e.kind == kind)

    def export_table(self) -> str:
        """Plain-text table of name, kind, level, units."""
        header = f"{'name':<8} {'kind':<8} {'level':>5} {'units':<8}"
        lines = [header, "-" * len(header)]
        for e in self.entries:
            level = "" if e.level is None else str(e.level)
            lines.append(f"{e.name:<8} {e.kind:<8} {level:>5} {e.units:<8}")
        return "\n".join(lines)


def build_catalog(levels: Sequence[int] = DEFAULT_PRESSURE_LEVELS) -> VariableCatalog:
    """Build the canonical catalog: 8 surface fields, 5 pressure fields on
    each level (grouped by field, levels ascending), then sst and tp."""
    levels = tuple(sorted(levels))
    entries = [VariableEntry(n, "surface", None, u) for n, u in SURFACE_VARIABLES]
    for name, units in PRESSURE_VARIABLES:
        for lev in levels:
            entries.append(VariableEntry(f"{name}{lev}", "pressure", lev, units))
    entries.extend(VariableEntry(n, "extra", None, u) for n, u in EXTRA_VARIABLES)
    return VariableCatalog(entries)


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid geometry at a fixed resolution."""

    resolution_deg: float
    nlat: int
    nlon: int
    lat_descending: bool = True

    @property
    def npoints(self) -> int:
        return self.nlat * self.nlon

    def latitudes(self) -> np.ndarray:
        return 90.0 - np.arange(self.nlat) * self.resolution_deg

    def longitudes(self) -> np.ndarray:
        return np.arange(self.nlon) * self.resolution_deg


def grid_spec(resolution_deg: float) -> GridSpec:
    """Construct a GridSpec, rejecting resolutions whose exact float value
    does not divide 180 and 360.

    Floats are binary fractions, so 0.3 really denotes 0.29999...; treating
    it as valid would put every grid node slightly off its nominal
    latitude. Resolutions that pass this check produce node coordinates
    that are exactly representable, so equality comparisons between modules
    are safe.
    """
    if not (isinstance(resolution_deg, (int, float)) and math.isfinite(resolution_deg)):
        raise InvalidResolutionError(f"resolution must be finite, got {resolution_deg!r}")
    res = float(resolution_deg)
    if res <= 0 or res > 90:
        raise InvalidResolutionError(f"resolution out of range (0, 90]: {res}")
    exact = Fraction(res)
    if (Fraction(180) / exact).denominator != 1 or (Fraction(360) / exact).denominator != 1:
        raise InvalidResolutionError(
            f"resolution {res} does not divide 180/360 exactly; grid nodes "
            "would not align"
        )
    nsteps = int(Fraction(180) / exact)
    return GridSpec(resolution_deg=res, nlat=nsteps + 1, nlon=int(Fraction(360) / exact))


@dataclass(frozen=True)
class CoordinateSet:
    """Labels for each of the six tensor dimensions, in DIMS order."""

    batch: tuple[int, ...]
    time: tuple[datetime, ...]
    lead_time: tuple[int, ...]  # hours from forecast_run_time
    variable: tuple[str, ...]
    lat: tuple[float, ...]
    lon: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(getattr(self, d)) for d in DIMS)

    def values_for(self, dim: str) -> tuple:
        if dim not in DIMS:
            raise KeyError(dim)
        return getattr(self, dim)

    def replace(self, **dims) -> "CoordinateSet":
        unknown = set(dims) - set(DIMS)
        if unknown:
            raise KeyError(f"unknown dims: {sorted(unknown)}")
        fields = {d: tuple(dims.get(d, getattr(self, d))) for d in DIMS}
        return CoordinateSet(**fields)


def coords_for_grid(
    spec: GridSpec,
    catalog: VariableCatalog,
    run_time: datetime,
    lead_hours: Sequence[int] = (0,),
) -> CoordinateSet:
    """Coordinate frame for a single-run tensor on the given grid."""
    return CoordinateSet(
        batch=(0,),
        time=(run_time,),
        lead_time=tuple(int(h) for h in lead_hours),
        variable=catalog.names,
        lat=tuple(float(v) for v in spec.latitudes()),
        lon=tuple(float(v) for v in spec.longitudes()),
    )


def validate_coords(actual: CoordinateSet, expected: CoordinateSet) -> None:
    """Raise CoordinateMismatchError naming the first dimension (in DIMS
    order) whose values differ. Symmetric in its arguments."""
    for dim in DIMS:
        if actual.values_for(dim) != expected.values_for(dim):
            raise CoordinateMismatchError(dim)


@dataclass(frozen=True)
class ForecastTensor:
    """A numpy array physically laid out in DIMS order plus its frame."""

    values: np.ndarray
    coords: CoordinateSet

    def __post_init__(self):
        if tuple(self.values.shape) != self.coords.shape:
            raise ValueError(
                f"values shape {tuple(self.values.shape)} does not match "
                f"coords shape {self.coords.shape}"
            )

    @property
    def variables(self) -> tuple[str, ...]:
        return self.coords.variable


@dataclass(frozen=True)
class BoundingBox:
    """Geographic box; wraps around the 0/360 meridian when lon_min > lon_max."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        for v in (self.lat_min, self.lat_max, self.lon_min, self.lon_max):
            if not math.isfinite(v):
                raise InvalidCoordinateError(f"bounding box has non-finite edge {v!r}")
        if not (-90.0 <= self.lat_min <= self.lat_max <= 90.0):
            raise InvalidCoordinateError(
                f"latitude bounds must satisfy -90 <= {self.lat_min} <= {self.lat_max} <= 90"
            )
        if not (0.0 <= self.lon_min < 360.0 and 0.0 <= self.lon_max < 360.0):
            raise InvalidCoordinateError(
                f"longitude bounds must lie in [0, 360): {self.lon_min}, {self.lon_max}"
            )

    @property
    def wraps(self) -> bool:
        return self.lon_min > self.lon_max

    @classmethod
    def full_globe(cls) -> "BoundingBox":
        return cls(-90.0, 90.0, 0.0, 360.0 - 1e-9)


def latlon_to_index(spec: GridSpec, lat: float, lon: float) -> tuple[int, int]:
    """Nearest grid node for a coordinate pair.

    Ties halfway between nodes resolve toward the lower index. Longitude is
    normalized into [0, 360) first, and nearest-neighbor wraps across the
    0/360 meridian.
    """
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise InvalidCoordinateError(f"non-finite coordinate ({lat!r}, {lon!r})")
    if not (-90.0 <= lat <= 90.0):
        raise InvalidCoordinateError(f"latitude {lat} outside [-90, 90]")
    res = spec.resolution_deg
    # ceil(x - 0.5) rounds halves down, matching the tie rule.
    lat_idx = math.ceil((90.0 - lat) / res - 0.5)
    lat_idx = min(max(lat_idx, 0), spec.nlat - 1)
    lon_n = lon % 360.0
    x = lon_n / res
    # Past nlon - 0.5 the nearest node is 0 across the wrap; exactly at the
    # halfway point the candidates are nlon - 1 and 0, and 0 is lower.
    if x >= spec.nlon - 0.5:
        lon_idx = 0
    else:
        lon_idx = max(math.ceil(x - 0.5), 0)
    return lat_idx, lon_idx


def _index_range(lo_val: float, hi_val: float, values: np.ndarray, lo_guess: int, hi_guess: int) -> range:
    # Widen the arithmetic guess by one node each way, then keep only nodes
    # that actually satisfy the inclusive bounds; immune to division dust.
    n = len(values)
    lo = max(lo_guess - 1, 0)
    hi = min(hi_guess + 1, n - 1)
    idx = [i for i in range(lo, hi + 1) if lo_val <= values[i] <= hi_val]
    if not idx:
        return range(0)
    return range(idx[0], idx[-1] + 1)


def bbox_indices(spec: GridSpec, box: BoundingBox) -> tuple[range, list[range]]:
    """Index ranges of all grid nodes inside the box (edges inclusive).

    Returns a latitude range plus one or, for boxes wrapping the 0/360
    meridian, two longitude ranges.
    """
    res = spec.resolution_deg
    lats = spec.latitudes()
    lons = spec.longitudes()
    lat_range = _index_range(
        box.lat_min,
        box.lat_max,
        lats,
        math.ceil((90.0 - box.lat_max) / res),
        math.floor((90.0 - box.lat_min) / res),
    )

    def lon_range(lo_val: float, hi_val: float) -> range:
        return _index_range(
            lo_val, hi_val, lons, math.ceil(lo_val / res), math.floor(hi_val / res)
        )

    if box.wraps:
        lon_ranges = [lon_range(box.lon_min, 360.0), lon_range(0.0, box.lon_max)]
    else:
        lon_ranges = [lon_range(box.lon_min, box.lon_max)]
    lon_ranges = [r for r in lon_ranges if len(r) > 0]
    if len(lat_range) == 0:
        lon_ranges = []
    return lat_range, lon_ranges


def bbox_point_count(spec: GridSpec, box: BoundingBox) -> int:
    lat_range, lon_ranges = bbox_indices(spec, box)
    return len(lat_range) * sum(len(r) for r in lon_ranges)


def ensure_utc(t: datetime) -> datetime:
    """Normalize to an aware UTC datetime; naive input is taken as UTC."""
    if t.tzinfo is None:
        return t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)
