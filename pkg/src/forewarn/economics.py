"""Cost and capacity arithmetic for the deployment story.

All money is integer cents; ranges are (low, high) tuples. Ratios against
the incumbent alternative truncate toward zero: claims round down.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


def cents(dollars: float) -> int:
    """Exact for any amount below ~$90 trillion expressed to whole cents."""
    return round(dollars * 100)


def dollars(c: int) -> float:
    return c / 100.0


@dataclass(frozen=True)
class CostModel:
    """Monthly cost structure of the forecast service plus the capital
    cost range of the radar-network alternative it is compared against."""

    gpu_hourly_cents: int
    gpu_hours_per_month: int
    cpu_instances: tuple[int, int]
    cpu_monthly_each_cents: tuple[int, int]
    db_monthly_cents: tuple[int, int]
    radar_capital_cents: tuple[int, int]
    radar_maintenance_total_cents: int
    horizon_years: int = 5

    def __post_init__(self):
        for name in ("gpu_hourly_cents", "gpu_hours_per_month"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.horizon_years < 1:
            raise ValueError("horizon_years must be >= 1")
        for lo, hi in (
            self.cpu_instances,
            self.cpu_monthly_each_cents,
            self.db_monthly_cents,
            self.radar_capital_cents,
        ):
            if lo > hi:
                raise ValueError("range fields must be (low, high)")

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        return cls(
            gpu_hourly_cents=cents(d["gpu_hourly_usd"]),
            gpu_hours_per_month=int(d["gpu_hours_per_month"]),
            cpu_instances=(int(d["cpu_instances"][0]), int(d["cpu_instances"][1])),
            cpu_monthly_each_cents=(
                cents(d["cpu_monthly_each_usd"][0]),
                cents(d["cpu_monthly_each_usd"][1]),
            ),
            db_monthly_cents=(cents(d["db_monthly_usd"][0]), cents(d["db_monthly_usd"][1])),
            radar_capital_cents=(
                cents(d["radar_capital_usd"][0]),
                cents(d["radar_capital_usd"][1]),
            ),
            radar_maintenance_total_cents=cents(d["radar_maintenance_total_usd"]),
            horizon_years=int(d.get("horizon_years", 5)),
        )


@dataclass(frozen=True)
class CostReport:
    gpu_monthly_cents: int
    cpu_monthly_cents: tuple[int, int]
    db_monthly_cents: tuple[int, int]
    total_monthly_cents: tuple[int, int]
    total_annual_cents: tuple[int, int]
    total_horizon_cents: tuple[int, int]
    radar_horizon_cents: tuple[int, int]
    cost_ratio: tuple[int, int]
    horizon_years: int

    def as_dict(self) -> dict:
        return {
            "gpu_monthly_usd": dollars(self.gpu_monthly_cents),
            "cpu_monthly_usd": [dollars(v) for v in self.cpu_monthly_cents],
            "db_monthly_usd": [dollars(v) for v in self.db_monthly_cents],
            "total_monthly_usd": [dollars(v) for v in self.total_monthly_cents],
            "total_annual_usd": [dollars(v) for v in self.total_annual_cents],
            "total_horizon_usd": [dollars(v) for v in self.total_horizon_cents],
            "radar_horizon_usd": [dollars(v) for v in self.radar_horizon_cents],
            "cost_ratio": list(self.cost_ratio),
            "horizon_years": self.horizon_years,
        }


def compute_costs(model: CostModel) -> CostReport:
    """Roll the monthly structure to annual and horizon totals, then take
    the radar-to-service ratio range (cheap radar vs expensive service on
    the low end and vice versa, so the range brackets every pairing)."""
    gpu = model.gpu_hourly_cents * model.gpu_hours_per_month
    cpu = (
        model.cpu_instances[0] * model.cpu_monthly_each_cents[0],
        model.cpu_instances[1] * model.cpu_monthly_each_cents[1],
    )
    db = model.db_monthly_cents
    monthly = (gpu + cpu[0] + db[0], gpu + cpu[1] + db[1])
    annual = (monthly[0] * 12, monthly[1] * 12)
    months = 12 * model.horizon_years
    horizon = (monthly[0] * months, monthly[1] * months)
    radar = (
        model.radar_capital_cents[0] + model.radar_maintenance_total_cents,
        model.radar_capital_cents[1] + model.radar_maintenance_total_cents,
    )
    if horizon[1] == 0:
        ratio = (0, 0)
    else:
        ratio = (radar[0] // horizon[1], radar[1] // horizon[0])
    return CostReport(
        gpu_monthly_cents=gpu,
        cpu_monthly_cents=cpu,
        db_monthly_cents=db,
        total_monthly_cents=monthly,
        total_annual_cents=annual,
        total_horizon_cents=horizon,
        radar_horizon_cents=radar,
        cost_ratio=ratio,
        horizon_years=model.horizon_years,
    )


@dataclass(frozen=True)
class CapacityModel:
    """Audience funnel and instance sizing."""

    population: int
    addressable_fraction: float
    engagement_fraction: float
    peak_concurrent_fraction: float
    per_instance_rps: tuple[float, float]
    headroom: float = 1.8

    def __post_init__(self):
        if self.population < 0:
            raise ValueError("population must be >= 0")
        for name in ("addressable_fraction", "engagement_fraction", "peak_concurrent_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]: {v}")
        if self.per_instance_rps[0] <= 0 or self.per_instance_rps[0] > self.per_instance_rps[1]:
            raise ValueError("per_instance_rps must be a positive (low, high) range")
        if self.headroom < 1.0:
            raise ValueError("headroom must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "CapacityModel":
        return cls(
            population=int(d["population"]),
            addressable_fraction=float(d["addressable_fraction"]),
            engagement_fraction=float(d["engagement_fraction"]),
            peak_concurrent_fraction=float(d["peak_concurrent_fraction"]),
            per_instance_rps=(float(d["per_instance_rps"][0]), float(d["per_instance_rps"][1])),
            headroom=float(d.get("headroom", 1.8)),
        )


@dataclass(frozen=True)
class CapacityReport:
    addressable_users: int
    active_users: int
    peak_requests_per_minute: float
    peak_rps: float
    instances_raw: tuple[int, int]
    instances_with_headroom: tuple[int, int]
    headroom: float

    def as_dict(self) -> dict:
        return {
            "addressable_users": self.addressable_users,
            "active_users": self.active_users,
            "peak_requests_per_minute": self.peak_requests_per_minute,
            "peak_rps": self.peak_rps,
            "instances_raw": list(self.instances_raw),
            "instances_with_headroom": list(self.instances_with_headroom),
            "headroom": self.headroom,
        }


def compute_capacity(model: CapacityModel) -> CapacityReport:
    """Funnel population down to peak demand and instance counts.

    Raw counts take the conservative ceiling; headroom-adjusted counts are
    a planning figure and round to nearest. Demand rates stay as floats so
    tiny populations do not vanish into zero.
    """
    addressable = round(model.population * model.addressable_fraction)
    active = round(addressable * model.engagement_fraction)
    peak_per_minute = active * model.peak_concurrent_fraction
    peak_rps = peak_per_minute / 60.0
    lo_rps, hi_rps = model.per_instance_rps
    if peak_rps == 0.0:
        raw = (0, 0)
        padded = (0, 0)
    else:
        raw = (math.ceil(peak_rps / hi_rps), math.ceil(peak_rps / lo_rps))
        padded = (
            max(round(peak_rps * model.headroom / hi_rps), raw[0]),
            max(round(peak_rps * model.headroom / lo_rps), raw[1]),
        )
    return CapacityReport(
        addressable_users=addressable,
        active_users=active,
        peak_requests_per_minute=peak_per_minute,
        peak_rps=peak_rps,
        instances_raw=raw,
        instances_with_headroom=padded,
        headroom=model.headroom,
    )


def load_preset(name_or_path: str) -> dict:
    """Load a bundled preset by name or any JSON file by path."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return json.loads(path.read_text())
    candidate = resources.files("forewarn").joinpath(f"data/presets/{name_or_path}.json")
    try:
        return json.loads(candidate.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(
            f"no preset named {name_or_path!r} and no such file"
        ) from None
