"""Initial-condition ingestion through an isolated worker process.

Upstream analysis fields arrive as one flat binary object per (cycle,
variable) in a fixture directory. Reading them happens in a separate
spawned process that talks back over a queue, so a wedged or crashing
reader can never take down the caller: a stall becomes a fetch-timeout
after terminate(), a dead worker becomes a worker-failure with its exit
code, and data problems come back as typed errors distinguishable from
both.

Grid blob format (little-endian throughout):

    magic    5 bytes  b"GBLB1"
    nlat     u32
    nlon     u32
    res      f64      degrees
    lat_desc u8       1 when row 0 is +90
    name_len u32      then that many UTF-8 bytes (variable name)
    cycle    i64      UNIX seconds UTC
    data     nlat*nlon f32, row-major, north to south

Fixture layout: <root>/<YYYYMMDDTHHMMSSZ>/<variable>.grid
A file named ``_fault.json`` in the fixture root injects worker faults for
tests ({"mode": "crash"} or {"mode": "stall", "seconds": N}); the parent
process never reads it.
"""
from __future__ import annotations

import json
import os
import pickle
import struct
import time
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from multiprocessing import get_context
from pathlib import Path
from queue import Empty
from typing import Sequence

import numpy as np

from .errors import (
    AssemblyError,
    FetchTimeoutError,
    MissingVariableError,
    WorkerFailureError,
)
from .grid import (
    CYCLE_HOURS,
    ForecastTensor,
    GridSpec,
    VariableCatalog,
    coords_for_grid,
    ensure_utc,
    grid_spec,
)
from .inference import check_cycle_alignment, variable_field

_MAGIC = b"GBLB1"
_HEADER = struct.Struct("<IIdBI")


def align_cycle(t: datetime) -> datetime:
    """Latest 00/06/12/18Z boundary at or before t."""
    t = ensure_utc(t)
    floored = t.replace(minute=0, second=0, microsecond=0)
    return floored - timedelta(hours=floored.hour % CYCLE_HOURS)


def cycle_stem(cycle_time: datetime) -> str:
    return ensure_utc(cycle_time).strftime("%Y%m%dT%H%M%SZ")


def write_grid_blob(
    path: str | Path,
    spec: GridSpec,
    variable: str,
    cycle_time: datetime,
    values: np.ndarray,
) -> None:
    values = np.asarray(values, dtype="<f4")
    if values.shape != (spec.nlat, spec.nlon):
        raise ValueError(f"field shape {values.shape} does not match grid")
    name = variable.encode()
    cycle = int(ensure_utc(cycle_time).timestamp())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(_HEADER.pack(spec.nlat, spec.nlon, spec.resolution_deg, 1, len(name)))
        f.write(name)
        f.write(struct.pack("<q", cycle))
        f.write(np.ascontiguousarray(values).tobytes())


def read_grid_blob(path: str | Path) -> tuple[GridSpec, str, datetime, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        nlat, nlon, res, lat_desc, name_len = _HEADER.unpack(f.read(_HEADER.size))
        name = f.read(name_len).decode()
        (cycle,) = struct.unpack("<q", f.read(8))
        data = np.frombuffer(f.read(nlat * nlon * 4), dtype="<f4").reshape(nlat, nlon)
    if not lat_desc:
        data = data[::-1]
    spec = grid_spec(res)
    if (spec.nlat, spec.nlon) != (nlat, nlon):
        raise ValueError(f"{path}: dimensions {nlat}x{nlon} do not match resolution {res}")
    cycle_time = datetime.fromtimestamp(cycle, tz=timezone.utc)
    return spec, name, cycle_time, data


@dataclass(frozen=True)
class FixtureStore:
    """Directory of grid blobs standing in for an upstream data service."""

    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    def object_path(self, cycle_time: datetime, variable: str) -> Path:
        return self.root / cycle_stem(cycle_time) / f"{variable}.grid"

    def available_cycles(self) -> list[datetime]:
        if not self.root.is_dir():
            return []
        out = []
        for p in self.root.iterdir():
            if p.is_dir():
                try:
                    out.append(datetime.strptime(p.name, "%Y%m%dT%H%M%SZ").replace(tzinfo=timezone.utc))
                except ValueError:
                    continue
        return sorted(out)

    def write_field(
        self, spec: GridSpec, variable: str, cycle_time: datetime, values: np.ndarray
    ) -> Path:
        path = self.object_path(cycle_time, variable)
        write_grid_blob(path, spec, variable, cycle_time, values)
        return path


def seed_fixture_cycle(
    store: FixtureStore,
    spec: GridSpec,
    catalog: VariableCatalog,
    cycle_time: datetime,
    seed: int = 0,
    variables: Sequence[str] | None = None,
) -> list[Path]:
    """Populate one cycle with synthetic analysis fields."""
    cycle_time = check_cycle_alignment(cycle_time)
    names = list(variables) if variables is not None else list(catalog.names)
    paths = []
    for name in names:
        entry = catalog.lookup(name)
        values = variable_field(spec, entry.name, entry.kind, catalog.index_of(name), seed)
        paths.append(store.write_field(spec, name, cycle_time, values))
    return paths


@dataclass(frozen=True)
class FetchRequest:
    cycle_time: datetime
    variables: tuple[str, ...]
    timeout_s: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "cycle_time", check_cycle_alignment(self.cycle_time))
        object.__setattr__(self, "variables", tuple(self.variables))
        if not self.variables:
            raise ValueError("request must name at least one variable")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass(frozen=True)
class FetchResult:
    """Worker payload: a dense [time, variable, lat, lon] array plus the
    coordinate lists needed to rebuild a frame, all plain values so the
    whole thing survives pickling between processes."""

    values: np.ndarray
    dims: tuple[str, ...]
    time: tuple[str, ...]  # ISO-8601
    variable: tuple[str, ...]
    lat: tuple[float, ...]
    lon: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    def to_bytes(self) -> bytes:
        return pickle.dumps(self, protocol=pickle.HIGHEST_PROTOCOL)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FetchResult":
        obj = pickle.loads(raw)
        if not isinstance(obj, cls):
            raise ValueError("payload is not a FetchResult")
        return obj


def _apply_fault(root: Path) -> None:
    fault_path = root / "_fault.json"
    if not fault_path.exists():
        return
    fault = json.loads(fault_path.read_text())
    if fault.get("mode") == "crash":
        os._exit(fault.get("exitcode", 3))
    if fault.get("mode") == "stall":
        time.sleep(float(fault.get("seconds", 3600)))


def _worker_fetch(queue, root: str, cycle_iso: str, variables: list[str]) -> None:
    """Runs in the spawned process; communicates only through the queue."""
    try:
        root_path = Path(root)
        _apply_fault(root_path)
        cycle_time = datetime.fromisoformat(cycle_iso)
        store = FixtureStore(root_path)
        fields = []
        lat = lon = None
        for name in variables:
            path = store.object_path(cycle_time, name)
            if not path.exists():
                queue.put(
                    ("missing-variable",
                     (name, f"no object for variable {name} at cycle {cycle_iso}"))
                )
                return
            spec, blob_name, blob_cycle, data = read_grid_blob(path)
            if blob_name != name:
                queue.put(("data-error", f"{path} holds {blob_name!r}, expected {name!r}"))
                return
            if blob_cycle != cycle_time:
                queue.put(("data-error", f"{path} is for cycle {blob_cycle.isoformat()}"))
                return
            if lat is None:
                lat = tuple(float(v) for v in spec.latitudes())
                lon = tuple(float(v) for v in spec.longitudes())
            fields.append(data)
        values = np.stack(fields)[None]  # (time=1, V, nlat, nlon)
        result = FetchResult(
            values=values,
            dims=("time", "variable", "lat", "lon"),
            time=(cycle_iso,),
            variable=tuple(variables),
            lat=lat,
            lon=lon,
        )
        queue.put(("ok", result.to_bytes()))
    except Exception as exc:  # surfaced to the parent as a typed error
        queue.put(("data-error", f"{type(exc).__name__}: {exc}"))


_POLL_S = 0.05


def fetch_initial_conditions(request: FetchRequest, store: FixtureStore,
                             catalog: VariableCatalog | None = None) -> FetchResult:
    """Fetch one cycle's fields via an isolated worker process.

    Raises missing-variable before any worker launch when the request
    names variables outside the catalog; after launch, failures map to
    fetch-timeout (stall), worker-failure (crash), or typed data errors.
    """
    if catalog is not None:
        for name in request.variables:
            if name not in catalog:
                raise MissingVariableError(name)

    ctx = get_context("spawn")
    queue = ctx.Queue()
    proc = ctx.Process(
        target=_worker_fetch,
        args=(queue, str(store.root), request.cycle_time.isoformat(), list(request.variables)),
        daemon=True,
    )
    proc.start()
    deadline = time.monotonic() + request.timeout_s
    try:
        while True:
            try:
                status, payload = queue.get(timeout=_POLL_S)
                break
            except Empty:
                pass
            if not proc.is_alive() and queue.empty():
                proc.join()
                raise WorkerFailureError(
                    f"fetch worker died with exit code {proc.exitcode}",
                    exitcode=proc.exitcode,
                )
            if time.monotonic() > deadline:
                proc.terminate()
                proc.join()
                raise FetchTimeoutError(
                    f"fetch for {request.cycle_time.isoformat()} exceeded "
                    f"{request.timeout_s:g}s; worker terminated"
                )
    finally:
        if proc.is_alive():
            proc.terminate()
        proc.join()
        queue.close()

    if status == "ok":
        return FetchResult.from_bytes(payload)
    if status == "missing-variable":
        name, message = payload
        raise MissingVariableError(name, message=message)
    raise AssemblyError(payload)


def assemble_initial_tensor(
    result: FetchResult, catalog: VariableCatalog, spec: GridSpec
) -> ForecastTensor:
    """Reorder fetched fields into a catalog-ordered lead-0 tensor."""
    missing = [n for n in catalog.names if n not in result.variable]
    if missing:
        raise AssemblyError(f"fetch result lacks catalog variables: {missing}")
    lat = tuple(float(v) for v in spec.latitudes())
    lon = tuple(float(v) for v in spec.longitudes())
    if result.lat != lat or result.lon != lon:
        raise AssemblyError("fetched grid does not match the requested grid")
    if len(result.time) != 1:
        raise AssemblyError(f"expected a single analysis time, got {len(result.time)}")
    order = [result.variable.index(n) for n in catalog.names]
    values = np.ascontiguousarray(result.values[:, order], dtype=np.float32)
    if not np.isfinite(values).all():
        raise AssemblyError("fetched fields contain non-finite values")
    run_time = check_cycle_alignment(datetime.fromisoformat(result.time[0]))
    coords = coords_for_grid(spec, catalog, run_time, lead_hours=(0,))
    # (time=1, V, nlat, nlon) -> (batch=1, time=1, lead=1, V, nlat, nlon)
    return ForecastTensor(values=values[None, None], coords=coords)
