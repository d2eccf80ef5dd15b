"""Flood-risk heuristic over point-forecast series.

Two independent signal families feed the level:

  * moisture loading: column water vapor peaking above a threshold
    (50 mm default, the loading seen in severe regional flood events);
  * accumulation: any rolling 24-hour precipitation total above a
    threshold (100 mm default).

Both families breached -> severe; exactly one -> elevated; none -> normal.
Raising either threshold can never raise the level, which the property
tests lean on. Accumulations are summed in float64.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import MissingSignalError
from .grid import LEAD_STEP_HOURS
from .serving import ForecastSeries


class RiskLevel(str, enum.Enum):
    NORMAL = "normal"
    ELEVATED = "elevated"
    SEVERE = "severe"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {RiskLevel.NORMAL: 0, RiskLevel.ELEVATED: 1, RiskLevel.SEVERE: 2}


@dataclass(frozen=True)
class RiskConfig:
    tcwv_threshold_mm: float = 50.0
    tp_24h_threshold_mm: float = 100.0
    accumulation_window_hours: int = 24

    def __post_init__(self):
        if self.tcwv_threshold_mm <= 0 or self.tp_24h_threshold_mm <= 0:
            raise ValueError("thresholds must be positive")
        if self.accumulation_window_hours % LEAD_STEP_HOURS != 0:
            raise ValueError(
                f"accumulation window must be a multiple of {LEAD_STEP_HOURS} h"
            )


@dataclass(frozen=True)
class RiskSignal:
    """One breached indicator: its peak value against the threshold, and
    the lead-hour window where breaches occur."""

    name: str  # "tcwv-peak" or "tp-24h"
    value: float
    threshold: float
    window: tuple[int, int]


@dataclass(frozen=True)
class RiskAssessment:
    level: RiskLevel
    signals: tuple[RiskSignal, ...]
    label: str
    forecast_run_time: object
    lead_window: tuple[int, int]


def rolling_accumulations(
    lead_hours: tuple[int, ...], tp: tuple[float, ...], window_hours: int
) -> list[tuple[int, float]]:
    """(window-end lead, float64 sum) for every full window in the series.

    Each tp value is the accumulation over the step ending at its lead, so
    a window ending at lead L sums the last window_hours/step values.
    """
    steps = window_hours // LEAD_STEP_HOURS
    out = []
    for k in range(steps - 1, len(tp)):
        total = 0.0
        for v in tp[k - steps + 1 : k + 1]:
            total += float(v)
        out.append((lead_hours[k], total))
    return out


def assess_flood_risk(series: ForecastSeries, config: RiskConfig | None = None) -> RiskAssessment:
    """Classify one location's series as normal, elevated, or severe."""
    config = config or RiskConfig()
    for required in ("tcwv", "tp"):
        if required not in series.values:
            raise MissingSignalError(required)

    leads = series.lead_hours
    signals: list[RiskSignal] = []

    tcwv = series.values["tcwv"]
    breach_leads = [leads[k] for k, v in enumerate(tcwv) if v > config.tcwv_threshold_mm]
    if breach_leads:
        signals.append(
            RiskSignal(
                name="tcwv-peak",
                value=max(tcwv),
                threshold=config.tcwv_threshold_mm,
                window=(breach_leads[0], breach_leads[-1]),
            )
        )

    sums = rolling_accumulations(leads, series.values["tp"], config.accumulation_window_hours)
    breached = [(end, total) for end, total in sums if total > config.tp_24h_threshold_mm]
    if breached:
        first_end = breached[0][0]
        last_end = breached[-1][0]
        signals.append(
            RiskSignal(
                name="tp-24h",
                value=max(total for _, total in breached),
                threshold=config.tp_24h_threshold_mm,
                window=(
                    max(first_end - config.accumulation_window_hours, leads[0]),
                    last_end,
                ),
            )
        )

    kinds = {s.name for s in signals}
    if {"tcwv-peak", "tp-24h"} <= kinds:
        level = RiskLevel.SEVERE
    elif kinds:
        level = RiskLevel.ELEVATED
    else:
        level = RiskLevel.NORMAL

    if signals:
        lead_window = (min(s.window[0] for s in signals), max(s.window[1] for s in signals))
    else:
        lead_window = (0, 0)
    return RiskAssessment(
        level=level,
        signals=tuple(signals),
        label=series.label,
        forecast_run_time=series.forecast_run_time,
        lead_window=lead_window,
    )
