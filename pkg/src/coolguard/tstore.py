"""Embedded append-optimized time-series store.

Layout: one append log per series plus a JSON manifest, all under a single
directory. Each log starts with a magic header and carries fixed-width
little-endian (timestamp ns: int64, value: float64) records. The in-memory
index (full point arrays per series) is rebuilt on open by replaying logs;
a torn or disordered tail from a crash is truncated away, so a reopened
store holds exactly a prefix of acknowledged writes.

Desk-scale volumes (under a million points per simulated week) make
correctness, not LSM machinery, the design target. Out-of-order points are
rejected per series rather than reordered, to surface pipeline bugs.

Concurrency: a single lock serializes writers; readers run lock-free
against append-only lists, so they never block the writer. A reader racing
a write sees at most a consistent prefix that excludes the in-flight,
not-yet-acknowledged point.
"""

from __future__ import annotations

import bisect
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

_MAGIC = b"CGTS\x01"
_RECORD = struct.Struct("<qd")
_MANIFEST_VERSION = 1


class StorageError(RuntimeError):
    """Raised when the backing directory cannot be read or written."""


@dataclass(frozen=True)
class Series:
    """A named stream of (timestamp, value) points with identifying tags."""

    name: str
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.name or "/" in self.name or "\x00" in self.name:
            raise ValueError("series name must be non-empty without '/'")
        object.__setattr__(self, "tags", tuple(sorted(self.tags)))

    @classmethod
    def of(cls, name: str, **tags: str) -> "Series":
        return cls(name, tuple(tags.items()))

    @property
    def key(self) -> str:
        if not self.tags:
            return self.name
        tag_part = ",".join(f"{k}={v}" for k, v in self.tags)
        return f"{self.name}{{{tag_part}}}"


@dataclass(frozen=True)
class Rejection:
    """One refused point from a batch, with the reason."""

    series: str
    timestamp: int
    reason: str


@dataclass(frozen=True)
class QueryResult:
    """Range-query outcome; `known` distinguishes empty from missing series."""

    points: tuple[tuple[int, float], ...]
    known: bool


@dataclass
class _SeriesState:
    file_name: str
    timestamps: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    @property
    def tail(self) -> int:
        return self.timestamps[-1] if self.timestamps else -(1 << 63)


def _safe_file_name(key: str, taken: set[str]) -> str:
    base = "".join(c if c.isalnum() or c in "-_." else "_" for c in key)[:80]
    name = f"{base}.log"
    n = 1
    while name in taken:
        n += 1
        name = f"{base}.{n}.log"
    return name


class TimeSeriesStore:
    """Append-log store: one writer lock, lock-free concurrent readers."""

    def __init__(self, root: str | os.PathLike):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._series: dict[str, _SeriesState] = {}
        self._handles: dict[str, object] = {}
        self._manifest_path = self._root / "manifest.json"
        self._load()

    # -- lifecycle -------------------------------------------------------

    def _load(self) -> None:
        if self._manifest_path.exists():
            try:
                manifest = json.loads(self._manifest_path.read_text())
            except ValueError as exc:
                raise StorageError(f"unreadable manifest in {self._root}") from exc
            if manifest.get("magic") != _MAGIC.hex() or (
                manifest.get("version") != _MANIFEST_VERSION
            ):
                raise StorageError(f"unrecognized manifest in {self._root}")
            entries = manifest["series"]
        else:
            entries = {}
        for key, file_name in entries.items():
            state = _SeriesState(file_name=file_name)
            self._replay_log(self._root / file_name, state)
            self._series[key] = state

    def _replay_log(self, path: Path, state: _SeriesState) -> None:
        if not path.exists():
            return
        raw = path.read_bytes()
        if raw[: len(_MAGIC)] != _MAGIC:
            raise StorageError(f"bad magic in {path.name}")
        body = raw[len(_MAGIC):]
        clean = 0
        usable = len(body) - len(body) % _RECORD.size
        for ts, value in _RECORD.iter_unpack(body[:usable]):
            # A torn tail can also scramble ordering; keep the clean prefix.
            if state.timestamps and ts <= state.timestamps[-1]:
                break
            state.timestamps.append(ts)
            state.values.append(value)
            clean += _RECORD.size
        if clean != len(body):
            with path.open("r+b") as fh:
                fh.truncate(len(_MAGIC) + clean)

    def _write_manifest(self) -> None:
        manifest = {
            "magic": _MAGIC.hex(),
            "version": _MANIFEST_VERSION,
            "series": {k: s.file_name for k, s in self._series.items()},
        }
        tmp = self._manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        os.replace(tmp, self._manifest_path)

    def close(self) -> None:
        with self._lock:
            for fh in self._handles.values():
                fh.close()
            self._handles.clear()

    def __enter__(self) -> "TimeSeriesStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- writes ----------------------------------------------------------

    def _handle(self, state: _SeriesState):
        fh = self._handles.get(state.file_name)
        if fh is None:
            path = self._root / state.file_name
            fresh = not path.exists()
            fh = path.open("ab")
            if fresh:
                fh.write(_MAGIC)
            self._handles[state.file_name] = fh
        return fh

    def write_batch(
        self, points: Iterable[tuple[Series | str, int, float]]
    ) -> tuple[int, list[Rejection]]:
        """Append points; returns (count written, per-point rejections).

        Durable (flushed to the append log) before returning. A point older
        than or equal to its series tail is rejected; the rest of the batch
        still lands.
        """
        written = 0
        rejections: list[Rejection] = []
        with self._lock:
            touched: set[str] = set()
            new_series = False
            for series, ts, value in points:
                key = series.key if isinstance(series, Series) else str(series)
                state = self._series.get(key)
                if state is None:
                    taken = {s.file_name for s in self._series.values()}
                    state = _SeriesState(file_name=_safe_file_name(key, taken))
                    self._series[key] = state
                    new_series = True
                ts = int(ts)
                if ts <= state.tail:
                    rejections.append(
                        Rejection(key, ts, f"out of order (tail {state.tail})")
                    )
                    continue
                try:
                    self._handle(state).write(_RECORD.pack(ts, float(value)))
                except OSError as exc:
                    raise StorageError(f"append failed for {key}: {exc}") from exc
                state.timestamps.append(ts)
                state.values.append(float(value))
                touched.add(state.file_name)
                written += 1
            for file_name in touched:
                fh = self._handles[file_name]
                try:
                    fh.flush()
                    os.fsync(fh.fileno())
                except OSError as exc:
                    raise StorageError(f"flush failed: {exc}") from exc
            if new_series:
                self._write_manifest()
        return written, rejections

    # -- reads (lock-free) -------------------------------------------------

    def series_names(self) -> list[str]:
        return sorted(list(self._series))

    def query_range(
        self,
        series: Series | str,
        t0: int,
        t1: int,
        aggregation: str | None = None,
        bucket_ns: int | None = None,
    ) -> QueryResult:
        """Points with t0 <= t < t1, optionally aggregated into buckets.

        Buckets are left-aligned to t0; empty buckets are omitted. Unknown
        series yield an empty result with known=False.
        """
        if t0 > t1:
            raise ValueError("t0 must be <= t1")
        key = series.key if isinstance(series, Series) else str(series)
        state = self._series.get(key)
        if state is None:
            return QueryResult((), known=False)
        lo = bisect.bisect_left(state.timestamps, int(t0))
        hi = bisect.bisect_left(state.timestamps, int(t1))
        ts = state.timestamps[lo:hi]
        vals = state.values[lo:hi]
        pts = tuple(zip(ts, vals))
        if aggregation is None:
            return QueryResult(pts, known=True)
        if aggregation not in ("mean", "min", "max"):
            raise ValueError(f"unknown aggregation {aggregation!r}")
        if not bucket_ns or bucket_ns <= 0:
            raise ValueError("aggregation requires a positive bucket_ns")
        buckets: dict[int, list[float]] = {}
        for t, v in pts:
            buckets.setdefault((t - t0) // bucket_ns, []).append(v)
        fold = {"mean": lambda xs: sum(xs) / len(xs), "min": min, "max": max}
        out = tuple(
            (t0 + idx * bucket_ns, float(fold[aggregation](buckets[idx])))
            for idx in sorted(buckets)
        )
        return QueryResult(out, known=True)

    def last_point(self, series: Series | str) -> tuple[int, float] | None:
        key = series.key if isinstance(series, Series) else str(series)
        state = self._series.get(key)
        if state is None or not state.timestamps:
            return None
        ts = state.timestamps
        vals = state.values
        n = min(len(ts), len(vals))
        if n == 0:
            return None
        return ts[n - 1], vals[n - 1]
