"""Plain-language advisory rendering.

Templates are bundled JSON keyed by locale then risk level, each with a
body and a recommendation that fills the body's {recommendation} slot.
Rendering is pure: the output depends only on the assessment, the series,
the template set, and an explicit as-of time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path

from .errors import TemplateMissError
from .risk import RiskAssessment, RiskConfig, rolling_accumulations
from .serving import ForecastSeries

# Advisory-local display timezone offset; the service targets SAST.
DEFAULT_TZ_OFFSET_HOURS = 2.0

_WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")


@dataclass(frozen=True)
class AdvisoryTemplate:
    template_id: str
    text: str
    recommendation: str


class TemplateSet:
    def __init__(self, templates: dict[tuple[str, str], AdvisoryTemplate]):
        self._templates = dict(templates)

    def get(self, locale: str, level: str) -> AdvisoryTemplate:
        try:
            return self._templates[(locale, level)]
        except KeyError:
            raise TemplateMissError(
                f"no template for locale {locale!r} at level {level!r}"
            ) from None

    @property
    def locales(self) -> list[str]:
        return sorted({loc for loc, _ in self._templates})

    @classmethod
    def from_dict(cls, raw: dict) -> "TemplateSet":
        templates = {}
        for locale, levels in raw.items():
            for level, body in levels.items():
                templates[(locale, level)] = AdvisoryTemplate(
                    template_id=f"{locale}.{level}.v1",
                    text=body["text"],
                    recommendation=body["recommendation"],
                )
        return cls(templates)

    @classmethod
    def from_file(cls, path: str | Path) -> "TemplateSet":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def bundled(cls) -> "TemplateSet":
        raw = json.loads(
            resources.files("forewarn").joinpath("data/templates.json").read_text()
        )
        return cls.from_dict(raw)


def _local_day(base_utc: datetime, lead_hours: float, tz_offset_hours: float) -> str:
    local = base_utc + timedelta(hours=lead_hours + tz_offset_hours)
    return _WEEKDAYS[local.weekday()]


def render_summary(
    assessment: RiskAssessment,
    series: ForecastSeries,
    templates: TemplateSet,
    locale: str = "en",
    *,
    config: RiskConfig | None = None,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
    as_of: datetime | None = None,
) -> tuple[str, str]:
    """Render (template_id, text) for an assessment.

    as_of only feeds the run-age wording; passing the run time itself (the
    default) renders a fresh advisory.
    """
    template = templates.get(locale, assessment.level.value)
    config = config or RiskConfig()
    run_time = series.forecast_run_time
    if as_of is None:
        as_of = run_time
    age_hours = max((as_of - run_time).total_seconds() / 3600.0, 0.0)

    peak_tcwv = max(series.values.get("tcwv", (0.0,)))
    tp = series.values.get("tp")
    if tp:
        sums = rolling_accumulations(
            series.lead_hours, tp, config.accumulation_window_hours
        )
        peak_tp24 = max(total for _, total in sums) if sums else 0.0
    else:
        peak_tp24 = 0.0

    start_h, end_h = assessment.lead_window
    context = {
        "location": assessment.label,
        "run_day": _local_day(run_time, 0, tz_offset_hours),
        "window_start_day": _local_day(run_time, start_h, tz_offset_hours),
        "window_end_day": _local_day(run_time, end_h, tz_offset_hours),
        "horizon_days": series.lead_hours[-1] // 24 if series.lead_hours else 0,
        "peak_tcwv": peak_tcwv,
        "peak_tp24": peak_tp24,
        "age_hours": age_hours,
        "recommendation": template.recommendation,
    }
    return template.template_id, template.text.format(**context)
