"""Window construction and labeling: raw reading streams become normalized
60-minute windows with time-to-leak labels, split chronologically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import (
    CENSOR_HORIZON_HOURS,
    CHANNELS,
    NS_PER_HOUR,
    NS_PER_MINUTE,
    LabeledWindow,
    LeakEvent,
    SensorReading,
)

WINDOW_MINUTES = 60

_CACHE_MAGIC = b"CGWC"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class NormStats:
    """Z-score parameters per channel, fitted on the training split only."""

    mean: tuple[float, float, float, float]
    stddev: tuple[float, float, float, float]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - np.asarray(self.mean)) / np.asarray(self.stddev)

    def invert(self, zscores: np.ndarray) -> np.ndarray:
        return zscores * np.asarray(self.stddev) + np.asarray(self.mean)


def fit_norm(train_readings: Sequence[SensorReading]) -> NormStats:
    """Population mean/stddev per channel; rejects constant channels."""
    if len(train_readings) < 2:
        raise ValueError("need at least two readings to fit normalization")
    arr = np.array([r.channel_values() for r in train_readings], dtype=np.float64)
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)  # population, written into the contract
    for idx, name in enumerate(CHANNELS):
        if std[idx] == 0.0:
            raise ValueError(f"channel {name} is constant; cannot z-score")
    return NormStats(mean=tuple(float(m) for m in mean), stddev=tuple(float(s) for s in std))


def _labels_for(readings: Sequence[SensorReading], events: Sequence[LeakEvent],
                horizon_hours: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-reading (time_to_leak hours, is_leaking) from event intervals."""
    n = len(readings)
    onsets = sorted(ev.onset for ev in events)
    intervals = [(ev.onset, ev.end) for ev in events]
    ttl = np.full(n, horizon_hours)
    leaking = np.zeros(n, dtype=bool)
    for i, r in enumerate(readings):
        ts = r.timestamp
        for lo, hi in intervals:
            if lo <= ts < hi:
                leaking[i] = True
                ttl[i] = 0.0
                break
        else:
            for onset in onsets:
                if onset >= ts:
                    ttl[i] = min(horizon_hours, (onset - ts) / NS_PER_HOUR)
                    break
    return ttl, leaking


def make_windows(
    readings: Sequence[SensorReading],
    events: Sequence[LeakEvent],
    stats: NormStats,
    horizon_hours: float = CENSOR_HORIZON_HOURS,
) -> tuple[list[LabeledWindow], int]:
    """Build one window per minute t >= 60; returns (windows, skipped count).

    A window ending at minute t stacks the z-scored readings for minutes
    t-59..t. Windows whose 60 minutes are not exactly contiguous (a gap in
    the stream) are skipped and counted, not silently mislabeled.
    """
    n = len(readings)
    if n < WINDOW_MINUTES:
        return [], 0
    raw = np.array([r.channel_values() for r in readings], dtype=np.float64)
    z = stats.apply(raw)
    ts = np.array([r.timestamp for r in readings], dtype=np.int64)
    ttl, leaking = _labels_for(readings, events, horizon_hours)

    windows: list[LabeledWindow] = []
    skipped = 0
    for t in range(WINDOW_MINUTES - 1, n):
        lo = t - WINDOW_MINUTES + 1
        if ts[t] - ts[lo] != (WINDOW_MINUTES - 1) * NS_PER_MINUTE:
            skipped += 1
            continue
        windows.append(
            LabeledWindow(
                features=z[lo:t + 1].copy(),
                time_to_leak=float(ttl[t]),
                is_leaking=bool(leaking[t]),
                end_timestamp=int(ts[t]),
                rack_id=readings[t].rack_id,
            )
        )
    return windows, skipped


@dataclass(frozen=True)
class SplitResult:
    train: tuple[LabeledWindow, ...]
    validation: tuple[LabeledWindow, ...]
    test: tuple[LabeledWindow, ...]


def chronological_split(
    windows: Sequence[LabeledWindow],
    fraction: float = 0.8,
    holdout_minutes: int = 0,
) -> SplitResult:
    """Time-ordered train/validation split, optionally reserving a tail.

    With holdout_minutes > 0 the final span of that length becomes the test
    partition; the remaining windows split train/validation at `fraction` by
    count. Every partition boundary respects time order, and an empty train
    or validation side is an error.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    stamps = [w.end_timestamp for w in windows]
    if any(b <= a for a, b in zip(stamps, stamps[1:])):
        raise ValueError("windows not time-ordered")
    if holdout_minutes > 0 and windows:
        cut = windows[-1].end_timestamp - holdout_minutes * NS_PER_MINUTE
        body = [w for w in windows if w.end_timestamp <= cut]
        test = tuple(w for w in windows if w.end_timestamp > cut)
    else:
        body = list(windows)
        test = ()
    k = int(len(body) * fraction)
    train, val = tuple(body[:k]), tuple(body[k:])
    if not train or not val:
        raise ValueError("split produced an empty train or validation side")
    return SplitResult(train=train, validation=val, test=test)


def windows_to_arrays(windows: Sequence[LabeledWindow]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(X, y, leak) arrays: X (n,60,4) float64, y (n,) hours, leak (n,) bool."""
    x = np.stack([w.features for w in windows]).astype(np.float64)
    y = np.array([w.time_to_leak for w in windows], dtype=np.float64)
    leak = np.array([w.is_leaking for w in windows], dtype=bool)
    return x, y, leak


def save_window_cache(path: str | Path, windows: Sequence[LabeledWindow],
                      stats: NormStats) -> None:
    """Binary cache: magic, version, stats, then per-window records.

    Layout (little-endian): 4-byte magic "CGWC", uint32 version, 4 float64
    means, 4 float64 stddevs, uint32 window count; each record is uint64
    end timestamp, float64 label, uint8 leak flag, uint16 rack-id length,
    rack id UTF-8 bytes, then 60*4 float64 features in row-major order.
    """
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<I", _CACHE_VERSION))
        fh.write(struct.pack("<4d", *stats.mean))
        fh.write(struct.pack("<4d", *stats.stddev))
        fh.write(struct.pack("<I", len(windows)))
        for w in windows:
            rack = w.rack_id.encode("utf-8")
            fh.write(struct.pack("<QdBH", w.end_timestamp, w.time_to_leak,
                                 int(w.is_leaking), len(rack)))
            fh.write(rack)
            fh.write(np.ascontiguousarray(w.features, dtype=np.float64).tobytes())


def load_window_cache(path: str | Path) -> tuple[list[LabeledWindow], NormStats]:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != _CACHE_MAGIC:
            raise ValueError("not a window cache file (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        mean = struct.unpack("<4d", fh.read(32))
        std = struct.unpack("<4d", fh.read(32))
        (count,) = struct.unpack("<I", fh.read(4))
        windows: list[LabeledWindow] = []
        rec = struct.Struct("<QdBH")
        feat_bytes = WINDOW_MINUTES * len(CHANNELS) * 8
        for _ in range(count):
            end_ts, label, leak, rack_len = rec.unpack(fh.read(rec.size))
            rack = fh.read(rack_len).decode("utf-8")
            feats = np.frombuffer(fh.read(feat_bytes), dtype=np.float64).reshape(
                WINDOW_MINUTES, len(CHANNELS)
            ).copy()
            windows.append(
                LabeledWindow(
                    features=feats,
                    time_to_leak=label,
                    is_leaking=bool(leak),
                    end_timestamp=end_ts,
                    rack_id=rack,
                )
            )
    return windows, NormStats(mean=mean, stddev=std)
