"""Write-global, query-local forecast store.

Layout on disk, under a single store root:

    runs/<YYYYMMDDTHHMMSSZ>.db    one sqlite database per forecast run
    manifests/<same stem>.json    commit marker + run metadata

A run database holds one row per grid node:

    CREATE TABLE grid_rows (
        lat_idx INTEGER NOT NULL,
        lon_idx INTEGER NOT NULL,
        lat     REAL    NOT NULL,
        lon     REAL    NOT NULL,
        block   BLOB    NOT NULL,
        PRIMARY KEY (lat_idx, lon_idx)
    ) WITHOUT ROWID

``block`` is the node's full forecast: float32 little-endian, lead-time
major, shape (timesteps, variables) in catalog order. The composite key
(run, lat_idx, lon_idx) from the single-file design maps here to
(run file, lat_idx, lon_idx); the encoding is documented so an alternate
backend can be validated byte-for-byte.

Commit protocol: the writer builds ``runs/.tmp-<stem>.db`` (no reader ever
opens dotfiles), renames it into place, then writes the manifest via
tmp + atomic rename. A run is visible if and only if its manifest exists,
so readers never observe a partial run and the writer never blocks them.
Retention deletes the manifest first, then the database; readers holding
an open file descriptor finish their queries unharmed.

The writer opens its private database with journaling and fsyncs off: the
file is invisible until the final renames, so a crash mid-write leaves
only a temp file to garbage-collect. Power-loss durability for the rename
sequence itself costs an fsync of ~1.4 GB of dirty pages at 1 degree; pass
``durable=True`` when that trade is wanted.
"""
from __future__ import annotations

import json
import os
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from itertools import repeat
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConflictError, NoRunsError, NoSuchRunError
from .grid import (
    LEAD_STEP_HOURS,
    BoundingBox,
    ForecastTensor,
    GridSpec,
    bbox_indices,
    ensure_utc,
    grid_spec,
    latlon_to_index,
)
from .inference import check_cycle_alignment

_SCHEMA = """
CREATE TABLE grid_rows (
    lat_idx INTEGER NOT NULL,
    lon_idx INTEGER NOT NULL,
    lat     REAL    NOT NULL,
    lon     REAL    NOT NULL,
    block   BLOB    NOT NULL,
    PRIMARY KEY (lat_idx, lon_idx)
) WITHOUT ROWID
"""


def _stem(run_time: datetime) -> str:
    return ensure_utc(run_time).strftime("%Y%m%dT%H%M%SZ")


def _parse_stem(stem: str) -> datetime:
    return datetime.strptime(stem, "%Y%m%dT%H%M%SZ").replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class RunManifest:
    """Metadata for one committed run."""

    forecast_run_time: datetime
    resolution_deg: float
    nlat: int
    nlon: int
    variables: tuple[str, ...]
    timestep_count: int
    lead_hours: tuple[int, ...]
    row_count: int
    created_at: datetime

    def to_json(self) -> str:
        return json.dumps(
            {
                "forecast_run_time": self.forecast_run_time.isoformat(),
                "resolution_deg": self.resolution_deg,
                "nlat": self.nlat,
                "nlon": self.nlon,
                "variables": list(self.variables),
                "timestep_count": self.timestep_count,
                "lead_hours": list(self.lead_hours),
                "row_count": self.row_count,
                "created_at": self.created_at.isoformat(),
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            forecast_run_time=datetime.fromisoformat(d["forecast_run_time"]),
            resolution_deg=d["resolution_deg"],
            nlat=d["nlat"],
            nlon=d["nlon"],
            variables=tuple(d["variables"]),
            timestep_count=d["timestep_count"],
            lead_hours=tuple(d["lead_hours"]),
            row_count=d["row_count"],
            created_at=datetime.fromisoformat(d["created_at"]),
        )

    @property
    def grid(self) -> GridSpec:
        return grid_spec(self.resolution_deg)


@dataclass(frozen=True)
class GridRow:
    """One queried grid node; block has shape (timesteps, variables)."""

    forecast_run_time: datetime
    lat_idx: int
    lon_idx: int
    lat: float
    lon: float
    block: np.ndarray


def estimate_storage(
    spec: GridSpec,
    timesteps: int,
    variables: int,
    bytes_per_value: int | float,
    runs_retained: int,
) -> int:
    """Raw payload bound in bytes: nodes x timesteps x variables x width x
    retained runs. Excludes index and page overhead."""
    total = spec.npoints * timesteps * variables * bytes_per_value * runs_retained
    return int(round(total))


class ForecastStore:
    """Writer handle over a store root. Create one per writing process."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)
        (self.root / "manifests").mkdir(parents=True, exist_ok=True)

    # -- paths ------------------------------------------------------------

    def run_path(self, run_time: datetime) -> Path:
        return self.root / "runs" / f"{_stem(run_time)}.db"

    def manifest_path(self, run_time: datetime) -> Path:
        return self.root / "manifests" / f"{_stem(run_time)}.json"

    # -- writes -----------------------------------------------------------

    def store_forecast(
        self,
        stacked: ForecastTensor,
        *,
        overwrite: bool = False,
        batch_size: int = 20_000,
        durable: bool = False,
    ) -> RunManifest:
        """Commit a stacked run (all leads, all variables) as grid rows.

        Fails with a conflict, leaving the store unchanged, if the run
        already exists and overwrite is not set.
        """
        coords = stacked.coords
        if len(coords.batch) != 1 or len(coords.time) != 1:
            raise ValueError("store_forecast expects a single-run tensor")
        run_time = check_cycle_alignment(coords.time[0])
        leads = coords.lead_time
        for a, b in zip(leads, leads[1:]):
            if b - a != LEAD_STEP_HOURS:
                raise ValueError(f"lead_hours must step by {LEAD_STEP_HOURS}: {a} -> {b}")
        if batch_size < 1:
            raise ValueError("batch_size must be positive")

        manifest_path = self.manifest_path(run_time)
        if manifest_path.exists():
            if not overwrite:
                raise ConflictError(
                    f"run {run_time.isoformat()} already stored; "
                    "pass overwrite to replace it"
                )
            self._delete_run(run_time)

        nlat = len(coords.lat)
        nlon = len(coords.lon)
        if nlat < 2:
            raise ValueError("store_forecast expects a global latitude axis")
        res = float(coords.lat[0] - coords.lat[1])
        core = stacked.values[0, 0]  # (T, V, nlat, nlon)
        if core.dtype != np.float32:
            core = core.astype(np.float32)
        t_count, v_count = core.shape[0], core.shape[1]

        tmp = self.root / "runs" / f".tmp-{_stem(run_time)}.db"
        tmp.unlink(missing_ok=True)
        conn = sqlite3.connect(tmp)
        try:
            cur = conn.cursor()
            # Private file until the rename below, so crash safety does not
            # depend on sqlite's journal; turn it all off for write speed.
            # 16K pages fit one ~18K block in two pages instead of five,
            # cutting both file size and insert time; must precede the DDL.
            cur.execute("PRAGMA page_size=16384")
            cur.execute("PRAGMA journal_mode=OFF")
            cur.execute("PRAGMA synchronous=OFF")
            cur.execute("PRAGMA locking_mode=EXCLUSIVE")
            cur.execute("PRAGMA cache_size=-64000")
            cur.execute(_SCHEMA)
            cur.execute("BEGIN")
            lon_idx_range = range(nlon)
            lon_values = [float(v) for v in coords.lon]
            pending: list[tuple] = []
            for i in range(nlat):
                # Gather one latitude band: (nlon, T*V) so each row of the
                # band is one node's lead-major block, contiguous for blobbing.
                # Two copies on purpose: a contiguous slab copy streams the
                # big tensor, then the transpose shuffles only the small
                # T x V x nlon slab; much faster than one strided gather.
                slab = np.ascontiguousarray(core[:, :, i, :])
                band = np.ascontiguousarray(
                    slab.transpose(2, 0, 1)
                ).reshape(nlon, t_count * v_count)
                pending.extend(
                    zip(
                        repeat(i),
                        lon_idx_range,
                        repeat(float(coords.lat[i])),
                        lon_values,
                        map(memoryview, band),
                    )
                )
                if len(pending) >= batch_size:
                    cur.executemany("INSERT INTO grid_rows VALUES (?,?,?,?,?)", pending)
                    pending.clear()
            if pending:
                cur.executemany("INSERT INTO grid_rows VALUES (?,?,?,?,?)", pending)
            conn.commit()
        finally:
            conn.close()

        if durable:
            fd = os.open(tmp, os.O_RDONLY)
            try:
                os.fsync(fd)
            finally:
                os.close(fd)
        os.replace(tmp, self.run_path(run_time))

        manifest = RunManifest(
            forecast_run_time=run_time,
            resolution_deg=res,
            nlat=nlat,
            nlon=nlon,
            variables=coords.variable,
            timestep_count=t_count,
            lead_hours=tuple(int(h) for h in leads),
            row_count=nlat * nlon,
            created_at=datetime.now(timezone.utc),
        )
        tmp_manifest = manifest_path.with_name(f".tmp-{manifest_path.name}")
        tmp_manifest.write_text(manifest.to_json())
        if durable:
            fd = os.open(tmp_manifest, os.O_RDONLY)
            try:
                os.fsync(fd)
            finally:
                os.close(fd)
        os.replace(tmp_manifest, manifest_path)
        if durable:
            for d in (self.root / "runs", self.root / "manifests"):
                fd = os.open(d, os.O_RDONLY)
                try:
                    os.fsync(fd)
                finally:
                    os.close(fd)
        return manifest

    def _delete_run(self, run_time: datetime) -> None:
        # Manifest first: once it is gone the run is invisible, and an open
        # reader descriptor keeps the unlinked database alive until it is done.
        self.manifest_path(run_time).unlink(missing_ok=True)
        self.run_path(run_time).unlink(missing_ok=True)

    def apply_retention(self, max_runs: int) -> list[datetime]:
        """Drop the oldest runs beyond max_runs; returns what was removed."""
        if max_runs < 0:
            raise ValueError("max_runs must be >= 0")
        runs = sorted(self.reader().list_runs(), reverse=True)
        victims = runs[max_runs:]
        for run_time in victims:
            self._delete_run(run_time)
        return victims

    def reader(self) -> "ForecastReader":
        return ForecastReader(self.root)


class ForecastReader:
    """Read-only handle; holds no write methods by construction."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._manifest_dir = self.root / "manifests"

    def list_runs(self) -> list[datetime]:
        if not self._manifest_dir.is_dir():
            return []
        out = []
        for p in self._manifest_dir.glob("*.json"):
            try:
                out.append(_parse_stem(p.stem))
            except ValueError:
                continue
        return sorted(out)

    def latest_run(self) -> RunManifest:
        runs = self.list_runs()
        if not runs:
            raise NoRunsError("store has no committed runs")
        return self.get_manifest(runs[-1])

    def get_manifest(self, run_time: datetime) -> RunManifest:
        path = self._manifest_dir / f"{_stem(run_time)}.json"
        try:
            return RunManifest.from_json(path.read_text())
        except FileNotFoundError:
            raise NoSuchRunError(f"no run stored for {run_time.isoformat()}") from None

    def _connect(self, run_time: datetime) -> sqlite3.Connection:
        path = self.root / "runs" / f"{_stem(run_time)}.db"
        uri = f"file:{path}?mode=ro&immutable=1"
        return sqlite3.connect(uri, uri=True)

    def _block_shape(self, manifest: RunManifest) -> tuple[int, int]:
        return manifest.timestep_count, len(manifest.variables)

    def query_bbox(self, run_time: datetime, box: BoundingBox) -> list[GridRow]:
        """All rows inside the box, ordered by lat_idx then lon_idx."""
        manifest = self.get_manifest(run_time)
        lat_range, lon_ranges = bbox_indices(manifest.grid, box)
        if len(lat_range) == 0 or not lon_ranges:
            return []
        lon_sql = " OR ".join("lon_idx BETWEEN ? AND ?" for _ in lon_ranges)
        params: list[int] = [lat_range[0], lat_range[-1]]
        for r in lon_ranges:
            params.extend((r[0], r[-1]))
        t, v = self._block_shape(manifest)
        conn = self._connect(run_time)
        try:
            rows = conn.execute(
                "SELECT lat_idx, lon_idx, lat, lon, block FROM grid_rows "
                f"WHERE lat_idx BETWEEN ? AND ? AND ({lon_sql}) "
                "ORDER BY lat_idx, lon_idx",
                params,
            ).fetchall()
        finally:
            conn.close()
        return [
            GridRow(
                forecast_run_time=run_time,
                lat_idx=r[0],
                lon_idx=r[1],
                lat=r[2],
                lon=r[3],
                block=np.frombuffer(r[4], dtype="<f4").reshape(t, v),
            )
            for r in rows
        ]

    def query_point(self, run_time: datetime, lat: float, lon: float) -> GridRow:
        """Row for the grid node nearest the coordinate pair."""
        manifest = self.get_manifest(run_time)
        i, j = latlon_to_index(manifest.grid, lat, lon)
        t, v = self._block_shape(manifest)
        conn = self._connect(run_time)
        try:
            r = conn.execute(
                "SELECT lat_idx, lon_idx, lat, lon, block FROM grid_rows "
                "WHERE lat_idx = ? AND lon_idx = ?",
                (i, j),
            ).fetchone()
        finally:
            conn.close()
        if r is None:
            raise NoSuchRunError(
                f"run {run_time.isoformat()} has no row at index ({i}, {j})"
            )
        return GridRow(
            forecast_run_time=run_time,
            lat_idx=r[0],
            lon_idx=r[1],
            lat=r[2],
            lon=r[3],
            block=np.frombuffer(r[4], dtype="<f4").reshape(t, v),
        )

    def iter_band_blocks(
        self, run_time: datetime, lat_idx: int
    ) -> Iterator[tuple[int, np.ndarray]]:
        """Stream (lon_idx, block) for one latitude band; used by bulk
        verification without materializing the whole run."""
        manifest = self.get_manifest(run_time)
        t, v = self._block_shape(manifest)
        conn = self._connect(run_time)
        try:
            for lon_idx, blob in conn.execute(
                "SELECT lon_idx, block FROM grid_rows WHERE lat_idx = ? "
                "ORDER BY lon_idx",
                (lat_idx,),
            ):
                yield lon_idx, np.frombuffer(blob, dtype="<f4").reshape(t, v)
        finally:
            conn.close()

    def row_count(self, run_time: datetime) -> int:
        conn = self._connect(run_time)
        try:
            return conn.execute("SELECT COUNT(*) FROM grid_rows").fetchone()[0]
        finally:
            conn.close()
