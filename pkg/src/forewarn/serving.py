"""Point-forecast assembly for the query side.

Turns a stored grid-node block into a per-variable time series, resolving
place names through the gazetteer and recording per-stage wall time so the
service can report where its latency budget goes.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence

from .errors import MissingVariableError
from .gazetteer import Gazetteer, geocode
from .store import ForecastReader, GridRow, RunManifest


@dataclass(frozen=True)
class ForecastSeries:
    """One location's forecast: equal-length value sequences per variable."""

    label: str
    lat: float  # snapped grid-node coordinates
    lon: float
    forecast_run_time: datetime
    lead_hours: tuple[int, ...]
    values: dict[str, tuple[float, ...]]

    def __post_init__(self):
        for name, seq in self.values.items():
            if len(seq) != len(self.lead_hours):
                raise ValueError(
                    f"series {name} has {len(seq)} values for "
                    f"{len(self.lead_hours)} leads"
                )


class StageTimer:
    """Rolling per-stage latency samples in milliseconds."""

    def __init__(self, maxlen: int = 4096):
        self._samples: dict[str, deque[float]] = {}
        self._maxlen = maxlen

    def record(self, stage: str, elapsed_ms: float) -> None:
        self._samples.setdefault(stage, deque(maxlen=self._maxlen)).append(elapsed_ms)

    def snapshot(self) -> dict[str, dict[str, float]]:
        out = {}
        for stage, samples in self._samples.items():
            ordered = sorted(samples)
            out[stage] = {
                "count": len(ordered),
                "p50": percentile(ordered, 50.0),
                "p90": percentile(ordered, 90.0),
                "p99": percentile(ordered, 99.0),
            }
        return out


def percentile(ordered: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile on an ascending-sorted sequence."""
    if not ordered:
        return 0.0
    if not (0.0 <= pct <= 100.0):
        raise ValueError(f"percentile out of range: {pct}")
    rank = max(1, -(-len(ordered) * pct // 100))  # ceil without floats
    return float(ordered[int(rank) - 1])


def series_from_row(
    row: GridRow,
    manifest: RunManifest,
    variables: Sequence[str],
    label: str,
) -> ForecastSeries:
    """Slice requested variables out of a node block, exactly as stored."""
    index = {name: k for k, name in enumerate(manifest.variables)}
    values: dict[str, tuple[float, ...]] = {}
    for name in variables:
        if name not in index:
            raise MissingVariableError(name)
        col = row.block[:, index[name]]
        values[name] = tuple(float(v) for v in col)
    return ForecastSeries(
        label=label,
        lat=row.lat,
        lon=row.lon,
        forecast_run_time=manifest.forecast_run_time,
        lead_hours=manifest.lead_hours,
        values=values,
    )


def get_point_forecast(
    reader: ForecastReader,
    *,
    variables: Sequence[str],
    place: str | None = None,
    lat: float | None = None,
    lon: float | None = None,
    run_time: datetime | None = None,
    gazetteer: Gazetteer | None = None,
    timer: StageTimer | None = None,
) -> ForecastSeries:
    """Forecast series for a place name or coordinate pair.

    Defaults to the latest committed run. An empty variable list yields a
    series with no sequences but the full lead axis.
    """
    t0 = time.perf_counter()
    if place is not None:
        if gazetteer is None:
            raise ValueError("place lookup requires a gazetteer")
        p = geocode(place, gazetteer)
        lat, lon, label = p.lat, p.lon, p.name
    else:
        if lat is None or lon is None:
            raise ValueError("either place or lat/lon is required")
        label = f"{lat:.4f},{lon:.4f}"
    t1 = time.perf_counter()

    manifest = (
        reader.latest_run() if run_time is None else reader.get_manifest(run_time)
    )
    row = reader.query_point(manifest.forecast_run_time, lat, lon)
    t2 = time.perf_counter()

    series = series_from_row(row, manifest, variables, label)
    t3 = time.perf_counter()

    if timer is not None:
        timer.record("geocode", (t1 - t0) * 1e3)
        timer.record("query", (t2 - t1) * 1e3)
        timer.record("format", (t3 - t2) * 1e3)
    return series
