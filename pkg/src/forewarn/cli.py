"""Command-line entry points.

Every subcommand is a thin composition of module operations; the heavy
lifting lives in the library so the same paths are exercised whether you
arrive via the CLI, the HTTP service, or an import. Failures print one
machine-parsable line, ``error[<kind>]: <message>``, and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from .advisory import TemplateSet, render_summary
from .alerts import AlertMessage, Outbox, SubscriberRegistry, dispatch_alerts
from .economics import (
    CapacityModel,
    CostModel,
    compute_capacity,
    compute_costs,
    dollars,
    load_preset,
)
from .errors import ConnectivityError, ForewarnError, StartupError
from .gazetteer import Gazetteer
from .grid import VariableCatalog, build_catalog, grid_spec
from .inference import ToyModelConfig, make_initial_state, run_and_stack_lean
from .ingest import (
    FetchRequest,
    FixtureStore,
    align_cycle,
    assemble_initial_tensor,
    fetch_initial_conditions,
    seed_fixture_cycle,
)
from .loadgen import DEFAULT_MIX, LoadgenConfig, run_loadgen
from .risk import RiskConfig, assess_flood_risk
from .serving import get_point_forecast
from .store import ForecastStore

DEFAULT_DB = "runs"


def _parse_cycle(text: str | None) -> datetime:
    if text is None:
        return align_cycle(datetime.now(timezone.utc))
    t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t


def _parse_vars(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    if not names:
        raise ValueError("expected a comma-separated variable list")
    return names


def _money(cents_value: int) -> str:
    return f"${dollars(cents_value):,.2f}"


def _money_range(pair: tuple[int, int]) -> str:
    if pair[0] == pair[1]:
        return _money(pair[0])
    return f"{_money(pair[0])} - {_money(pair[1])}"


def _write_out(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------- fixtures


def cmd_fixtures(args) -> int:
    spec = grid_spec(args.res)
    catalog = build_catalog()
    cycle = _parse_cycle(args.cycle)
    store = FixtureStore(root=Path(args.root))
    names = _parse_vars(args.vars) if args.vars else None
    t0 = time.monotonic()
    paths = seed_fixture_cycle(store, spec, catalog, cycle, seed=args.seed, variables=names)
    print(f"seeded {len(paths)} fields under {paths[0].parent}")
    print(f"elapsed_s: {time.monotonic() - t0:.2f}")
    return 0


# ------------------------------------------------------------------ ingest


def cmd_ingest(args) -> int:
    spec = grid_spec(args.res)
    catalog = build_catalog()
    cycle = _parse_cycle(args.cycle)
    store = FixtureStore(root=Path(args.root))
    if args.vars:
        # a subset fetch assembles against a trimmed catalog, keeping order
        names = _parse_vars(args.vars)
        target = VariableCatalog([catalog.lookup(n) for n in names])
    else:
        target = catalog
    request = FetchRequest(cycle_time=cycle, variables=target.names, timeout_s=args.timeout)
    t0 = time.monotonic()
    result = fetch_initial_conditions(request, store, catalog)
    tensor = assemble_initial_tensor(result, target, spec)
    print(f"cycle: {cycle.isoformat()}")
    print(f"variables: {len(result.variable)}")
    print(f"tensor shape: {tensor.values.shape}")
    print(f"elapsed_s: {time.monotonic() - t0:.2f}")
    return 0


# ---------------------------------------------------------------- forecast


def cmd_forecast(args) -> int:
    spec = grid_spec(args.res)
    catalog = build_catalog()
    cycle = _parse_cycle(args.cycle)
    states = args.steps + 1
    total_values = states * len(catalog) * spec.nlat * spec.nlon
    print(f"states: {states}")
    print(f"lead hours: 0..{args.steps * 6} step 6")
    print(f"grid: {spec.nlat} x {spec.nlon} ({args.res} deg)")
    print(f"variables: {len(catalog)}")
    print(f"values: {total_values}")
    if args.count_only:
        return 0

    t0 = time.monotonic()
    if args.from_fixtures:
        fixture = FixtureStore(root=Path(args.from_fixtures))
        request = FetchRequest(
            cycle_time=cycle, variables=catalog.names, timeout_s=args.timeout
        )
        result = fetch_initial_conditions(request, fixture, catalog)
        initial = assemble_initial_tensor(result, catalog, spec)
    else:
        initial = make_initial_state(spec, catalog, cycle, seed=args.seed)
    config = ToyModelConfig(
        zonal_shift_cells=args.shift, smoothing_weight=args.smoothing, seed=args.seed
    )
    stacked = run_and_stack_lean(config, initial, args.steps)
    print(f"model_elapsed_s: {time.monotonic() - t0:.2f}")

    t1 = time.monotonic()
    store = ForecastStore(args.db)
    manifest = store.store_forecast(
        stacked, overwrite=args.overwrite, batch_size=args.batch_size, durable=args.durable
    )
    print(f"insert_elapsed_s: {time.monotonic() - t1:.2f}")
    print(f"run: {manifest.forecast_run_time.isoformat()}")
    print(f"rows: {manifest.row_count}")
    print(f"db: {store.run_path(manifest.forecast_run_time)}")
    print(f"elapsed_s: {time.monotonic() - t0:.2f}")
    return 0


# ------------------------------------------------------------------- serve


def _service_config(args) -> "ServiceConfig":
    from .api import ServiceConfig

    root = Path(args.db)
    subscribers = Path(args.subscribers) if args.subscribers else root / "subscribers.json"
    outbox = Path(args.outbox) if args.outbox else root / "outbox.jsonl"
    return ServiceConfig(
        store_root=root, subscribers_path=subscribers, outbox_path=outbox
    )


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    app = create_app(_service_config(args))
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((args.host, args.port))
    except OSError as exc:
        sock.close()
        raise StartupError(f"cannot bind {args.host}:{args.port}: {exc}") from None
    sock.listen(128)
    host, port = sock.getsockname()[:2]
    # parsable by wrappers that pass --port 0 and need the real port
    print(f"serving on http://{host}:{port}", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning", access_log=False))
    server.run(sockets=[sock])
    return 0


# ------------------------------------------------------------------- query


def _print_series(location: str, lat: float, lon: float, run_iso: str,
                  lead_hours: list[int], series: dict[str, list[float]]) -> None:
    names = list(series)
    print(f"{location}  ({lat:.4f}, {lon:.4f})  run {run_iso}")
    print("lead_h  " + "  ".join(f"{n:>12s}" for n in names))
    for i, lead in enumerate(lead_hours):
        row = "  ".join(f"{series[n][i]:12.4f}" for n in names)
        print(f"{lead:>6d}  {row}")


def _print_risk(level: str, signals: list[dict], template_id: str, summary: str) -> None:
    print(f"risk: {level}")
    for s in signals:
        w = s["window"]
        print(f"  {s['name']}: {s['value']:.2f} > {s['threshold']:.2f} "
              f"within leads {w[0]}..{w[1]}")
    print(f"advisory [{template_id}]: {summary}")


def _http_get(url: str, params: dict) -> dict:
    import httpx

    try:
        response = httpx.get(url, params=params, timeout=30.0)
    except httpx.HTTPError as exc:
        raise ConnectivityError(f"cannot reach {url}: {exc}") from None
    payload = response.json()
    if response.status_code != 200:
        err = payload.get("error", {})
        raise _RemoteError(err.get("kind", "error"), err.get("message", response.text))
    return payload


class _RemoteError(ForewarnError):
    """Server-reported failure relayed with its original kind."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def cmd_query(args) -> int:
    variables = _parse_vars(args.vars)
    run_iso = args.run
    if args.url:
        base = args.url.rstrip("/")
        params: dict = {"vars": ",".join(variables)}
        if args.place:
            params["place"] = args.place
        else:
            params["lat"], params["lon"] = args.lat, args.lon
        if run_iso:
            params["run"] = run_iso
        forecast = _http_get(f"{base}/v1/forecast", params)
        risk_params = {k: v for k, v in params.items() if k != "vars"}
        risk = _http_get(f"{base}/v1/risk", risk_params)
        if args.json:
            print(json.dumps({"forecast": forecast, "risk": risk}, indent=2))
            return 0
        _print_series(forecast["location"], forecast["lat"], forecast["lon"],
                      forecast["forecast_run_time"], forecast["lead_hours"],
                      forecast["series"])
        _print_risk(risk["level"],
                    [s for s in risk["signals"]],
                    risk["template_id"], risk["summary"])
        return 0

    reader = ForecastStore(args.db).reader()
    gazetteer = Gazetteer.bundled()
    run_time = _parse_cycle(run_iso) if run_iso else None
    series = get_point_forecast(
        reader, variables=variables, place=args.place, lat=args.lat, lon=args.lon,
        run_time=run_time, gazetteer=gazetteer,
    )
    # risk always reads the two flood signals, whatever the user asked for
    risk_series = get_point_forecast(
        reader, variables=["tcwv", "tp"], place=args.place, lat=args.lat,
        lon=args.lon, run_time=run_time, gazetteer=gazetteer,
    )
    assessment = assess_flood_risk(risk_series, RiskConfig())
    template_id, summary = render_summary(
        assessment, risk_series, TemplateSet.bundled(), args.locale
    )
    if args.json:
        payload = {
            "forecast": {
                "location": series.label,
                "lat": series.lat,
                "lon": series.lon,
                "forecast_run_time": series.forecast_run_time.isoformat(),
                "lead_hours": list(series.lead_hours),
                "series": {k: list(v) for k, v in series.values.items()},
            },
            "risk": {
                "level": assessment.level.value,
                "signals": [
                    {"name": s.name, "value": s.value, "threshold": s.threshold,
                     "window": list(s.window)}
                    for s in assessment.signals
                ],
                "template_id": template_id,
                "summary": summary,
            },
        }
        print(json.dumps(payload, indent=2))
        return 0
    _print_series(series.label, series.lat, series.lon,
                  series.forecast_run_time.isoformat(),
                  list(series.lead_hours), {k: list(v) for k, v in series.values.items()})
    _print_risk(assessment.level.value,
                [{"name": s.name, "value": s.value, "threshold": s.threshold,
                  "window": s.window} for s in assessment.signals],
                template_id, summary)
    return 0


# ---------------------------------------------------------------- dispatch


def cmd_dispatch(args) -> int:
    if args.url:
        import httpx

        base = args.url.rstrip("/")
        body = {"run": args.run} if args.run else {}
        try:
            response = httpx.post(f"{base}/v1/dispatch", json=body, timeout=60.0)
        except httpx.HTTPError as exc:
            raise ConnectivityError(f"cannot reach {base}: {exc}") from None
        payload = response.json()
        if response.status_code != 200:
            err = payload.get("error", {})
            raise _RemoteError(err.get("kind", "error"), err.get("message", ""))
        print(f"run: {payload['run_time']}")
        print(f"sent: {payload['sent_count']} {payload['sent']}")
        print(f"deduplicated: {payload['deduplicated']}")
        print(f"below_threshold: {payload['below_threshold']}")
        print(f"opted_out: {payload['opted_out']}")
        return 0

    root = Path(args.db)
    reader = ForecastStore(root).reader()
    registry = SubscriberRegistry(
        Path(args.subscribers) if args.subscribers else root / "subscribers.json"
    )
    outbox = Outbox(Path(args.outbox) if args.outbox else root / "outbox.jsonl")
    gazetteer = Gazetteer.bundled()
    templates = TemplateSet.bundled()
    risk_config = RiskConfig()
    run_time = _parse_cycle(args.run) if args.run else None
    manifest = reader.latest_run() if run_time is None else reader.get_manifest(run_time)
    batch = []
    for sub in registry:
        series = get_point_forecast(
            reader, variables=["tcwv", "tp"], place=sub.place,
            run_time=manifest.forecast_run_time, gazetteer=gazetteer,
        )
        assessment = assess_flood_risk(series, risk_config)
        template_id, text = render_summary(
            assessment, series, templates, sub.locale, config=risk_config
        )
        batch.append((sub, AlertMessage(
            recipient=sub.subscriber_id, severity=assessment.level,
            template_id=template_id, text=text,
            run_time=manifest.forecast_run_time,
        )))
    report = dispatch_alerts(batch, outbox)
    print(f"run: {manifest.forecast_run_time.isoformat()}")
    print(f"sent: {report.sent_count} {list(report.sent)}")
    print(f"deduplicated: {list(report.deduplicated)}")
    print(f"below_threshold: {list(report.below_threshold)}")
    print(f"opted_out: {list(report.opted_out)}")
    return 0


# --------------------------------------------------------------- retention


def cmd_retention(args) -> int:
    store = ForecastStore(args.db)
    removed = store.apply_retention(args.max_runs)
    for t in removed:
        print(f"removed: {t.isoformat()}")
    print(f"removed {len(removed)} runs, kept {len(store.reader().list_runs())}")
    return 0


# ------------------------------------------------------- costs / capacity


def _resolve_preset(name: str, suffix: str) -> dict:
    # bare names pick the per-calculator bundled file; paths load verbatim
    if Path(name).suffix == ".json":
        return load_preset(name)
    return load_preset(f"{name}_{suffix}")


def cmd_costs(args) -> int:
    model = CostModel.from_dict(_resolve_preset(args.preset, "costs"))
    report = compute_costs(model)
    years = report.horizon_years
    print(f"cost model ({years}-year horizon)")
    print(f"  gpu monthly      {_money(report.gpu_monthly_cents)}")
    print(f"  cpu monthly      {_money_range(report.cpu_monthly_cents)}")
    print(f"  db monthly       {_money_range(report.db_monthly_cents)}")
    print(f"  total monthly    {_money_range(report.total_monthly_cents)}")
    print(f"  total annual     {_money_range(report.total_annual_cents)}")
    print(f"  total {years}-year     {_money_range(report.total_horizon_cents)}")
    print(f"  radar {years}-year     {_money_range(report.radar_horizon_cents)}")
    print(f"  cost ratio       {report.cost_ratio[0]:,}x - {report.cost_ratio[1]:,}x")
    _write_out(args.out, report.as_dict())
    return 0


def cmd_capacity(args) -> int:
    model = CapacityModel.from_dict(_resolve_preset(args.preset, "capacity"))
    report = compute_capacity(model)
    raw = report.instances_raw
    padded = report.instances_with_headroom
    print("capacity model")
    print(f"  addressable users   {report.addressable_users:,}")
    print(f"  active users        {report.active_users:,}")
    print(f"  peak demand         {report.peak_requests_per_minute:,.0f}/min"
          f"  ({report.peak_rps:,.0f}/s)")
    print(f"  instances raw       {raw[0]}-{raw[1]}")
    print(f"  instances x{report.headroom:g}      {padded[0]}-{padded[1]}")
    _write_out(args.out, report.as_dict())
    return 0


# ----------------------------------------------------------------- loadgen


def cmd_loadgen(args) -> int:
    mix = tuple(args.mix.split(";")) if args.mix else DEFAULT_MIX
    config = LoadgenConfig(
        base_url=args.url.rstrip("/"),
        offered_rps=args.rps,
        duration_s=args.duration,
        concurrency_cap=args.cap,
        mix=mix,
        request_timeout_s=args.timeout,
        seed=args.seed,
    )
    report = run_loadgen(config)
    print(f"offered_rps: {report.offered_rps:.1f}")
    print(f"achieved_rps: {report.achieved_rps:.1f}")
    print(f"duration_s: {report.duration_s:.1f}")
    print(f"requests_sent: {report.requests_sent}")
    print(f"completed: {report.completed}")
    print(f"errors: {report.errors}")
    print(f"dropped: {report.dropped}")
    print(f"latency_ms p50: {report.latency_ms_p50:.1f}")
    print(f"latency_ms p90: {report.latency_ms_p90:.1f}")
    print(f"latency_ms p99: {report.latency_ms_p99:.1f}")
    print(f"latency_ms max: {report.latency_ms_max:.1f}")
    _write_out(args.out, report.as_dict())
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forewarn", description="forecast, store, serve, and alert"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="seed one analysis cycle of synthetic fields")
    p.add_argument("--root", required=True, help="fixture store directory")
    p.add_argument("--cycle", help="analysis time, ISO-8601 (default: latest aligned)")
    p.add_argument("--res", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vars", help="comma-separated subset (default: full catalog)")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("ingest", help="fetch a cycle through the isolated worker")
    p.add_argument("--root", required=True, help="fixture store directory")
    p.add_argument("--cycle", help="analysis time, ISO-8601 (default: latest aligned)")
    p.add_argument("--res", type=float, default=1.0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--vars", help="comma-separated subset (default: full catalog)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("forecast", help="run the model and store the stacked run")
    p.add_argument("--res", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cycle", help="analysis time, ISO-8601 (default: latest aligned)")
    p.add_argument("--db", default=DEFAULT_DB, help="store directory")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--batch-size", type=int, default=20_000)
    p.add_argument("--durable", action="store_true", help="fsync before commit")
    p.add_argument("--count-only", action="store_true",
                   help="print the output-size arithmetic and exit without allocating")
    p.add_argument("--from-fixtures", metavar="DIR",
                   help="pull initial conditions from a fixture store instead of synthesizing")
    p.add_argument("--timeout", type=float, default=30.0,
                   help="fetch timeout when --from-fixtures is set")
    p.add_argument("--shift", type=int, default=1, help="zonal cells per step")
    p.add_argument("--smoothing", type=float, default=0.0)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("serve", help="run the HTTP service in the foreground")
    p.add_argument("--db", default=DEFAULT_DB)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8181)
    p.add_argument("--subscribers", help="default: <db>/subscribers.json")
    p.add_argument("--outbox", help="default: <db>/outbox.jsonl")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("query", help="one-shot point forecast and flood risk")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--place")
    where.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--vars", default="tcwv,tp")
    p.add_argument("--run", help="forecast run time (default: latest)")
    p.add_argument("--db", default=DEFAULT_DB)
    p.add_argument("--url", help="query a running service instead of local files")
    p.add_argument("--locale", default="en")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("dispatch", help="render and send alerts for a run")
    p.add_argument("--db", default=DEFAULT_DB)
    p.add_argument("--subscribers", help="default: <db>/subscribers.json")
    p.add_argument("--outbox", help="default: <db>/outbox.jsonl")
    p.add_argument("--run", help="forecast run time (default: latest)")
    p.add_argument("--url", help="dispatch via a running service instead")
    p.set_defaults(func=cmd_dispatch)

    p = sub.add_parser("retention", help="drop oldest runs beyond a budget")
    p.add_argument("--db", default=DEFAULT_DB)
    p.add_argument("--max-runs", type=int, required=True)
    p.set_defaults(func=cmd_retention)

    p = sub.add_parser("costs", help="deployment cost table")
    p.add_argument("--preset", default="paper", help="bundled name or JSON path")
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_costs)

    p = sub.add_parser("capacity", help="audience funnel and instance sizing")
    p.add_argument("--preset", default="paper", help="bundled name or JSON path")
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("loadgen", help="open-loop load against a running service")
    p.add_argument("--url", required=True)
    p.add_argument("--rps", type=float, required=True)
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--cap", type=int, default=100, help="max in-flight requests")
    p.add_argument("--mix", help="semicolon-separated path templates")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_loadgen)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "query" and args.lat is not None and args.lon is None:
        parser.error("--lat requires --lon")
    try:
        return args.func(args)
    except ForewarnError as exc:
        print(f"error[{exc.kind}]: {exc.message}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error[invalid-input]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
