"""HTTP service wrapping the query stack.

The app owns a read-only store handle plus the gazetteer, risk config,
templates, subscriber registry, and outbox; the forecast writer side is
deliberately absent so a compromised or buggy service cannot mutate runs.

Endpoints (all JSON):

    GET  /health
    GET  /v1/runs/latest
    GET  /v1/forecast?place=|lat=&lon=&vars=a,b&run=ISO
    GET  /v1/risk?place=|lat=&lon=
    POST /v1/subscribers
    POST /v1/dispatch
    GET  /v1/stats

Errors use {"error": {"kind": ..., "message": ...}} with the kind strings
from the exception taxonomy.
"""
from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import uvicorn
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .advisory import TemplateSet, render_summary
from .alerts import (
    AlertMessage,
    Outbox,
    Subscriber,
    SubscriberRegistry,
    dispatch_alerts,
)
from .errors import (
    ForewarnError,
    InvalidCoordinateError,
    StartupError,
    TemplateMissError,
)
from .gazetteer import Gazetteer, geocode
from .risk import RiskConfig, RiskLevel, assess_flood_risk
from .serving import StageTimer, get_point_forecast
from .store import ForecastReader

# Stage budgets from the end-to-end latency target: resolve, read, shape.
STAGE_BUDGET_MS = {"geocode": 50.0, "query": 100.0, "format": 50.0}

_404_KINDS = {"geocode-miss", "no-such-run", "no-runs", "missing-variable", "template-miss"}
_400_KINDS = {"invalid-coordinate", "invalid-resolution", "cycle-alignment", "missing-signal"}
_409_KINDS = {"conflict"}


@dataclass
class ServiceConfig:
    store_root: Path
    subscribers_path: Path
    outbox_path: Path
    gazetteer: Gazetteer | None = None
    templates: TemplateSet | None = None
    risk: RiskConfig = field(default_factory=RiskConfig)
    default_locale: str = "en"


class ErrorBody(BaseModel):
    kind: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorBody


class RunManifestModel(BaseModel):
    forecast_run_time: datetime
    resolution_deg: float
    nlat: int
    nlon: int
    variable_count: int
    timestep_count: int
    lead_hours: list[int]
    row_count: int


class ForecastResponse(BaseModel):
    location: str
    lat: float
    lon: float
    forecast_run_time: datetime
    lead_hours: list[int]
    series: dict[str, list[float]]


class RiskSignalModel(BaseModel):
    name: str
    value: float
    threshold: float
    window: tuple[int, int]


class RiskResponse(BaseModel):
    location: str
    forecast_run_time: datetime
    level: str
    signals: list[RiskSignalModel]
    lead_window: tuple[int, int]
    template_id: str
    summary: str


class SubscriberRequest(BaseModel):
    subscriber_id: str = Field(min_length=1, max_length=128)
    place: str = Field(min_length=1)
    opted_in: bool = True
    min_level: str = "elevated"
    locale: str = "en"


class SubscriberResponse(BaseModel):
    subscriber_id: str
    place: str
    opted_in: bool
    min_level: str
    locale: str


class DispatchRequest(BaseModel):
    run: datetime | None = None


class DispatchResponse(BaseModel):
    run_time: datetime
    sent: list[str]
    deduplicated: list[str]
    below_threshold: list[str]
    opted_out: list[str]
    sent_count: int
    skipped_count: int


class StageStatsModel(BaseModel):
    count: int
    p50: float
    p90: float
    p99: float
    budget_ms: float | None = None
    within_budget: bool | None = None


class StatsResponse(BaseModel):
    stages: dict[str, StageStatsModel]
    uptime_s: float


def _error_status(exc: ForewarnError) -> int:
    if exc.kind in _404_KINDS:
        return 404
    if exc.kind in _400_KINDS:
        return 400
    if exc.kind in _409_KINDS:
        return 409
    return 500


def create_app(config: ServiceConfig) -> FastAPI:
    reader = ForecastReader(config.store_root)
    gazetteer = config.gazetteer or Gazetteer.bundled()
    templates = config.templates or TemplateSet.bundled()
    registry = SubscriberRegistry(config.subscribers_path)
    outbox = Outbox(config.outbox_path)
    timer = StageTimer()
    started = time.monotonic()

    app = FastAPI(title="forewarn", version=__version__)
    app.state.reader = reader
    app.state.timer = timer

    @app.exception_handler(ForewarnError)
    async def forewarn_error_handler(request: Request, exc: ForewarnError):
        return JSONResponse(
            status_code=_error_status(exc),
            content={"error": {"kind": exc.kind, "message": exc.message}},
        )

    @app.get("/health")
    async def health():
        return {"status": "ok", "version": __version__}

    @app.get("/v1/runs/latest", response_model=RunManifestModel)
    async def latest_run():
        m = reader.latest_run()
        return RunManifestModel(
            forecast_run_time=m.forecast_run_time,
            resolution_deg=m.resolution_deg,
            nlat=m.nlat,
            nlon=m.nlon,
            variable_count=len(m.variables),
            timestep_count=m.timestep_count,
            lead_hours=list(m.lead_hours),
            row_count=m.row_count,
        )

    def _resolve_query_location(place: str | None, lat: float | None, lon: float | None):
        if place is None and (lat is None or lon is None):
            raise InvalidCoordinateError("pass place= or both lat= and lon=")

    @app.get("/v1/forecast", response_model=ForecastResponse)
    async def forecast(
        place: str | None = None,
        lat: float | None = None,
        lon: float | None = None,
        vars: str = Query("t2m,tp,tcwv"),
        run: datetime | None = None,
    ):
        _resolve_query_location(place, lat, lon)
        variables = [v for v in (s.strip() for s in vars.split(",")) if v]
        series = get_point_forecast(
            reader,
            variables=variables,
            place=place,
            lat=lat,
            lon=lon,
            run_time=run,
            gazetteer=gazetteer,
            timer=timer,
        )
        return ForecastResponse(
            location=series.label,
            lat=series.lat,
            lon=series.lon,
            forecast_run_time=series.forecast_run_time,
            lead_hours=list(series.lead_hours),
            series={k: list(v) for k, v in series.values.items()},
        )

    def _risk_payload(place: str | None, lat: float | None, lon: float | None,
                      run: datetime | None, locale: str) -> RiskResponse:
        _resolve_query_location(place, lat, lon)
        series = get_point_forecast(
            reader,
            variables=["tcwv", "tp"],
            place=place,
            lat=lat,
            lon=lon,
            run_time=run,
            gazetteer=gazetteer,
            timer=timer,
        )
        assessment = assess_flood_risk(series, config.risk)
        template_id, summary = render_summary(
            assessment, series, templates, locale, config=config.risk
        )
        return RiskResponse(
            location=series.label,
            forecast_run_time=series.forecast_run_time,
            level=assessment.level.value,
            signals=[
                RiskSignalModel(
                    name=s.name, value=s.value, threshold=s.threshold, window=s.window
                )
                for s in assessment.signals
            ],
            lead_window=assessment.lead_window,
            template_id=template_id,
            summary=summary,
        )

    @app.get("/v1/risk", response_model=RiskResponse)
    async def risk(
        place: str | None = None,
        lat: float | None = None,
        lon: float | None = None,
        run: datetime | None = None,
        locale: str = "en",
    ):
        return _risk_payload(place, lat, lon, run, locale)

    @app.post("/v1/subscribers", response_model=SubscriberResponse, status_code=201)
    async def add_subscriber(body: SubscriberRequest):
        geocode(body.place, gazetteer)  # reject unknown places on intake
        try:
            min_level = RiskLevel(body.min_level)
        except ValueError:
            raise InvalidCoordinateError(
                f"min_level must be one of {[l.value for l in RiskLevel]}"
            ) from None
        if body.locale not in templates.locales:
            raise TemplateMissError(f"no templates for locale {body.locale!r}")
        sub = Subscriber(
            subscriber_id=body.subscriber_id,
            place=body.place,
            opted_in=body.opted_in,
            min_level=min_level,
            locale=body.locale,
        )
        registry.upsert(sub)
        return SubscriberResponse(**sub.to_dict())

    @app.post("/v1/dispatch", response_model=DispatchResponse)
    async def dispatch(body: DispatchRequest | None = None):
        run_time = body.run if body else None
        manifest = reader.latest_run() if run_time is None else reader.get_manifest(run_time)
        batch = []
        for sub in registry:
            series = get_point_forecast(
                reader,
                variables=["tcwv", "tp"],
                place=sub.place,
                run_time=manifest.forecast_run_time,
                gazetteer=gazetteer,
            )
            assessment = assess_flood_risk(series, config.risk)
            template_id, text = render_summary(
                assessment, series, templates, sub.locale, config=config.risk
            )
            batch.append(
                (
                    sub,
                    AlertMessage(
                        recipient=sub.subscriber_id,
                        severity=assessment.level,
                        template_id=template_id,
                        text=text,
                        run_time=manifest.forecast_run_time,
                    ),
                )
            )
        report = dispatch_alerts(batch, outbox)
        return DispatchResponse(
            run_time=report.run_time,
            sent=list(report.sent),
            deduplicated=list(report.deduplicated),
            below_threshold=list(report.below_threshold),
            opted_out=list(report.opted_out),
            sent_count=report.sent_count,
            skipped_count=report.skipped_count,
        )

    @app.get("/v1/stats", response_model=StatsResponse)
    async def stats():
        snap = timer.snapshot()
        stages = {}
        for stage, data in snap.items():
            budget = STAGE_BUDGET_MS.get(stage)
            stages[stage] = StageStatsModel(
                count=int(data["count"]),
                p50=data["p50"],
                p90=data["p90"],
                p99=data["p99"],
                budget_ms=budget,
                within_budget=(data["p99"] < budget) if budget else None,
            )
        return StatsResponse(stages=stages, uptime_s=time.monotonic() - started)

    return app


class ServiceHandle:
    """In-process service for tests and embedding; binds its own socket so
    port conflicts surface as a typed startup error before serving."""

    def __init__(self, config: ServiceConfig, host: str = "127.0.0.1", port: int = 8181):
        self.config = config
        self.host = host
        self.port = port
        self._server: uvicorn.Server | None = None
        self._thread: threading.Thread | None = None
        self._socket: socket.socket | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self, timeout_s: float = 10.0) -> "ServiceHandle":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.host, self.port))
        except OSError as exc:
            sock.close()
            raise StartupError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        sock.listen(128)
        self._socket = sock
        if self.port == 0:
            self.port = sock.getsockname()[1]

        app = create_app(self.config)
        uv_config = uvicorn.Config(app, log_level="warning", access_log=False)
        self._server = uvicorn.Server(uv_config)
        self._thread = threading.Thread(
            target=self._server.run, kwargs={"sockets": [sock]}, daemon=True
        )
        self._thread.start()
        deadline = time.monotonic() + timeout_s
        while not self._server.started:
            if time.monotonic() > deadline:
                self.stop()
                raise StartupError("service did not start in time")
            if not self._thread.is_alive():
                raise StartupError("service thread died during startup")
            time.sleep(0.02)
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10)
        if self._socket is not None:
            try:
                self._socket.close()
            except OSError:
                pass
        self._server = None
        self._thread = None
        self._socket = None

    def __enter__(self) -> "ServiceHandle":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_api(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8181) -> ServiceHandle:
    """Start the service in a background thread and return its handle."""
    return ServiceHandle(config, host=host, port=port).start()
