"""Domain types and the dataset/wire contracts shared by the whole pipeline.

All timestamps are integer nanoseconds since the Unix epoch. Channel values
on the wire and in dataset files carry exactly 4 fractional digits; values
quantized to that precision round-trip bit-exactly through serialize/parse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

NS_PER_SECOND = 1_000_000_000
NS_PER_MINUTE = 60 * NS_PER_SECOND
NS_PER_HOUR = 60 * NS_PER_MINUTE

#: Channel order used everywhere a reading becomes a feature vector.
CHANNELS = ("pressure", "flow", "humidity", "temperature")

#: Sanity envelope per channel, deliberately wider than the operating range.
SANITY_BOUNDS = {
    "pressure": (0.0, 5.0),
    "flow": (0.0, 10.0),
    "humidity": (0.0, 100.0),
    "temperature": (-10.0, 60.0),
}

#: Hours assigned to "no leak within the horizon" labels.
CENSOR_HORIZON_HOURS = 8.0

DATASET_COLUMNS = (
    "timestamp_ns",
    "rack_id",
    "pressure_bar",
    "flow_lpm",
    "humidity_rh",
    "temp_c",
    "is_leaking",
)
LABEL_COLUMN = "time_to_leak_h"


def quantize(value: float) -> float:
    """Collapse a channel value onto the 4-decimal wire grid."""
    return float(format(value, ".4f"))


class ParseError(ValueError):
    """Raised on malformed wire lines; carries the offending column index."""

    def __init__(self, message: str, column: int | None = None, position: int | None = None):
        detail = message
        if column is not None:
            detail += f" (column {column}"
            detail += f", position {position})" if position is not None else ")"
        super().__init__(detail)
        self.column = column
        self.position = position


@dataclass(frozen=True)
class SensorReading:
    """One timestamped four-channel measurement from a rack enclosure."""

    timestamp: int
    rack_id: str
    pressure: float
    flow: float
    humidity: float
    temperature: float

    def channel_values(self) -> tuple[float, float, float, float]:
        return (self.pressure, self.flow, self.humidity, self.temperature)


@dataclass(frozen=True)
class SteadyState:
    """Target per-channel levels a fully developed leak settles at."""

    pressure: float
    flow: float
    humidity: float


@dataclass(frozen=True)
class LeakEvent:
    """Ground-truth leak episode injected by the simulator."""

    id: str
    rack_id: str
    onset: int
    ramp_minutes: int
    duration_minutes: int
    severity: float
    steady_state: SteadyState

    @property
    def end(self) -> int:
        return self.onset + self.duration_minutes * NS_PER_MINUTE

    def covers(self, timestamp: int) -> bool:
        return self.onset <= timestamp < self.end


@dataclass(frozen=True)
class LabeledWindow:
    """A 60-minute feature window with its time-to-leak label.

    ``features`` is a 60x4 array of z-scored channel values in CHANNELS
    order; ``time_to_leak`` is hours until the next onset, clipped to the
    censoring horizon, and exactly 0.0 while a leak is in progress.
    """

    features: object  # numpy (60, 4) float array; kept untyped to keep numpy out of the contract
    time_to_leak: float
    is_leaking: bool
    end_timestamp: int
    rack_id: str


@dataclass(frozen=True)
class ForecastResult:
    """Point time-to-leak estimate with its calibrated uncertainty."""

    issued_at: int
    rack_id: str
    point_estimate: float
    eps90: float
    prob_within: tuple[tuple[float, float], ...]

    def probability_within(self, horizon_hours: float) -> float:
        for horizon, prob in self.prob_within:
            if horizon == horizon_hours:
                return prob
        raise KeyError(f"no probability recorded for horizon {horizon_hours}h")


@dataclass(frozen=True)
class DetectionResult:
    """Binary leak classification for a single reading."""

    issued_at: int
    rack_id: str
    is_leak: bool
    vote_score: float


class AlertKind(Enum):
    FORECAST_PROBABILITY = "forecast_probability"
    PRESSURE_DROP = "pressure_drop"


@dataclass(frozen=True)
class AlertRecord:
    """A fired operator alert."""

    id: str
    rack_id: str
    fired_at: int
    rule: AlertKind
    payload: tuple[tuple[str, float], ...]
    acknowledged: bool = False

    def payload_dict(self) -> dict[str, float]:
        return dict(self.payload)


def validate_reading(reading: SensorReading) -> list[str]:
    """Return every violated sanity bound; empty list when the reading is valid."""
    violations = []
    for name in CHANNELS:
        value = getattr(reading, name)
        low, high = SANITY_BOUNDS[name]
        if not math.isfinite(value):
            violations.append(f"{name} is not finite")
        elif not (low <= value <= high):
            violations.append(f"{name} out of range [{low}, {high}]: {value}")
    if reading.timestamp < 0:
        violations.append(f"timestamp negative: {reading.timestamp}")
    return violations


def serialize_reading(reading: SensorReading) -> str:
    """Render a reading as one wire line (no trailing newline)."""
    return (
        f"{reading.timestamp},{reading.rack_id},"
        f"{reading.pressure:.4f},{reading.flow:.4f},"
        f"{reading.humidity:.4f},{reading.temperature:.4f}"
    )


_NUMERIC_COLUMNS = ((2, "pressure"), (3, "flow"), (4, "humidity"), (5, "temperature"))


def parse_reading(line: str) -> SensorReading:
    """Parse one wire line; raises ParseError naming the bad column."""
    parts = line.rstrip("\n").split(",")
    if len(parts) < 6:
        raise ParseError(f"missing column: expected 6 fields, got {len(parts)}", column=len(parts))
    if len(parts) > 6:
        raise ParseError(f"extra column: expected 6 fields, got {len(parts)}", column=6)
    position = 0
    try:
        timestamp = int(parts[0])
    except ValueError:
        raise ParseError(f"timestamp not an integer: {parts[0]!r}", column=0, position=0) from None
    rack_id = parts[1]
    if not rack_id:
        raise ParseError("empty rack_id", column=1, position=len(parts[0]) + 1)
    values = {}
    for column, name in _NUMERIC_COLUMNS:
        position = sum(len(parts[i]) + 1 for i in range(column))
        try:
            value = float(parts[column])
        except ValueError:
            raise ParseError(f"{name} not numeric: {parts[column]!r}", column=column, position=position) from None
        if not math.isfinite(value):
            raise ParseError(f"{name} not finite: {parts[column]!r}", column=column, position=position)
        values[name] = value
    return SensorReading(timestamp=timestamp, rack_id=rack_id, **values)


def write_dataset(
    path,
    readings: Sequence[SensorReading],
    leak_flags: Sequence[bool],
    labels: Sequence[float] | None = None,
    header_comments: Iterable[str] = (),
) -> None:
    """Write the CSV dataset contract (UTF-8, LF, 4-decimal channels).

    ``labels`` adds the time_to_leak_h column (labeled exports only).
    Comment lines (prefixed ``#``) carry generator config for provenance.
    """
    if len(leak_flags) != len(readings):
        raise ValueError("leak_flags length must match readings")
    if labels is not None and len(labels) != len(readings):
        raise ValueError("labels length must match readings")
    columns = DATASET_COLUMNS + ((LABEL_COLUMN,) if labels is not None else ())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write(",".join(columns) + "\n")
        for i, r in enumerate(readings):
            row = (
                f"{r.timestamp},{r.rack_id},{r.pressure:.4f},{r.flow:.4f},"
                f"{r.humidity:.4f},{r.temperature:.4f},{1 if leak_flags[i] else 0}"
            )
            if labels is not None:
                row += f",{labels[i]:.4f}"
            fh.write(row + "\n")


def read_dataset(path) -> tuple[list[SensorReading], list[bool], list[float] | None]:
    """Read a dataset file back; returns (readings, leak_flags, labels-or-None)."""
    readings: list[SensorReading] = []
    flags: list[bool] = []
    labels: list[float] | None = None
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for raw in fh:
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = tuple(line.split(","))
                if header[: len(DATASET_COLUMNS)] != DATASET_COLUMNS:
                    raise ParseError(f"unexpected dataset header: {line!r}")
                if len(header) == len(DATASET_COLUMNS) + 1 and header[-1] == LABEL_COLUMN:
                    labels = []
                elif len(header) != len(DATASET_COLUMNS):
                    raise ParseError(f"unexpected dataset header: {line!r}")
                continue
            parts = line.split(",")
            expected = len(DATASET_COLUMNS) + (1 if labels is not None else 0)
            if len(parts) != expected:
                raise ParseError(
                    f"row has {len(parts)} fields, expected {expected}", column=min(len(parts), expected)
                )
            readings.append(parse_reading(",".join(parts[:6])))
            flags.append(parts[6] == "1")
            if labels is not None:
                labels.append(float(parts[7]))
    if header is None:
        raise ParseError("dataset file has no header row")
    return readings, flags, labels
