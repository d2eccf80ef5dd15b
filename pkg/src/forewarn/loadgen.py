"""Open-loop HTTP load generator for the query service.

Requests launch on a fixed tick schedule derived from the offered rate,
whether or not earlier ones have finished, which is what exposes queueing
collapse; a closed loop would politely slow down instead of measuring it.
An in-flight cap bounds memory: ticks that would exceed it are counted as
dropped rather than deferred, so the offered rate stays honest.

Achieved throughput divides completions by max(elapsed, scheduled span),
so it can never exceed the offered rate by rounding artifacts.
"""
from __future__ import annotations

import asyncio
import random
import time
from dataclasses import dataclass

import httpx

from .serving import percentile

DEFAULT_PLACES = (
    "Johannesburg",
    "Cape Town",
    "Durban",
    "Pretoria",
    "Gqeberha",
    "Bloemfontein",
    "Polokwane",
    "Maseru",
    "Gaborone",
    "Windhoek",
    "Maputo",
    "Harare",
)

DEFAULT_MIX = ("/v1/forecast?place={place}&vars=t2m,tp,tcwv",)


@dataclass(frozen=True)
class LoadgenConfig:
    base_url: str
    offered_rps: float
    duration_s: float
    concurrency_cap: int = 100
    mix: tuple[str, ...] = DEFAULT_MIX
    places: tuple[str, ...] = DEFAULT_PLACES
    request_timeout_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.offered_rps < 0:
            raise ValueError("offered_rps must be >= 0")
        if self.duration_s < 0:
            raise ValueError("duration_s must be >= 0")
        if self.concurrency_cap < 1:
            raise ValueError("concurrency_cap must be >= 1")


@dataclass(frozen=True)
class LoadReport:
    offered_rps: float
    achieved_rps: float
    duration_s: float
    requests_sent: int
    completed: int
    errors: int
    dropped: int
    latency_ms_p50: float
    latency_ms_p90: float
    latency_ms_p99: float
    latency_ms_max: float

    def as_dict(self) -> dict:
        return {
            "offered_rps": self.offered_rps,
            "achieved_rps": self.achieved_rps,
            "duration_s": self.duration_s,
            "requests_sent": self.requests_sent,
            "completed": self.completed,
            "errors": self.errors,
            "dropped": self.dropped,
            "latency_ms": {
                "p50": self.latency_ms_p50,
                "p90": self.latency_ms_p90,
                "p99": self.latency_ms_p99,
                "max": self.latency_ms_max,
            },
        }


async def _run_async(config: LoadgenConfig) -> LoadReport:
    n_ticks = int(config.offered_rps * config.duration_s)
    rng = random.Random(config.seed)
    latencies: list[float] = []
    errors = 0
    dropped = 0
    in_flight = 0
    tasks: set[asyncio.Task] = set()

    if n_ticks == 0:
        return LoadReport(
            offered_rps=config.offered_rps,
            achieved_rps=0.0,
            duration_s=0.0,
            requests_sent=0,
            completed=0,
            errors=0,
            dropped=0,
            latency_ms_p50=0.0,
            latency_ms_p90=0.0,
            latency_ms_p99=0.0,
            latency_ms_max=0.0,
        )

    paths = [
        template.format(place=rng.choice(config.places)) for template in
        (rng.choice(config.mix) for _ in range(n_ticks))
    ]

    limits = httpx.Limits(
        max_connections=config.concurrency_cap,
        max_keepalive_connections=config.concurrency_cap,
    )
    async with httpx.AsyncClient(
        base_url=config.base_url,
        timeout=config.request_timeout_s,
        limits=limits,
    ) as client:

        async def one(path: str):
            nonlocal errors, in_flight
            start = time.perf_counter()
            try:
                response = await client.get(path)
                if response.status_code != 200:
                    errors += 1
                else:
                    latencies.append((time.perf_counter() - start) * 1e3)
            except httpx.HTTPError:
                errors += 1
            finally:
                in_flight -= 1

        interval = 1.0 / config.offered_rps
        t0 = time.perf_counter()
        for k in range(n_ticks):
            target = t0 + k * interval
            delay = target - time.perf_counter()
            if delay > 0:
                await asyncio.sleep(delay)
            if in_flight >= config.concurrency_cap:
                dropped += 1
                continue
            in_flight += 1
            task = asyncio.create_task(one(paths[k]))
            tasks.add(task)
            task.add_done_callback(tasks.discard)
        if tasks:
            await asyncio.gather(*tasks)
        elapsed = time.perf_counter() - t0

    duration = max(elapsed, n_ticks / config.offered_rps)
    ordered = sorted(latencies)
    completed = len(ordered)
    return LoadReport(
        offered_rps=config.offered_rps,
        achieved_rps=completed / duration,
        duration_s=elapsed,
        requests_sent=n_ticks - dropped,
        completed=completed,
        errors=errors,
        dropped=dropped,
        latency_ms_p50=percentile(ordered, 50),
        latency_ms_p90=percentile(ordered, 90),
        latency_ms_p99=percentile(ordered, 99),
        latency_ms_max=ordered[-1] if ordered else 0.0,
    )


def run_loadgen(config: LoadgenConfig) -> LoadReport:
    """Drive the configured load and summarize latency percentiles."""
    return asyncio.run(_run_async(config))
