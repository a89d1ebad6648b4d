"""Rule engine turning forecasts and detections into deduplicated alerts.

Two rules ship by default:
- ForecastProbability: probability of onset within 4 h exceeds 0.8.
- PressureDrop: current pressure below 0.85x the rolling baseline, where
  the baseline is the mean of the prior 60 minutes excluding the current
  reading (the threshold is stated upstream, the baseline definition here).

A debounce window (default 15 min) suppresses repeats of the same
rule+rack, and forecast alerts are gated off while the detector reports
an active leak (warning about a leak "within 4 h" is meaningless once one
is in progress). Every fired alert is appended to a JSON-lines audit file
when one is configured; acknowledgement is idempotent.
"""

from __future__ import annotations

import json
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .model import (
    NS_PER_MINUTE,
    AlertKind,
    AlertRecord,
    DetectionResult,
    ForecastResult,
    SensorReading,
)


@dataclass(frozen=True)
class AlertRules:
    """Thresholds for the two stock rules."""

    forecast_threshold: float = 0.8
    forecast_horizon_hours: float = 4.0
    pressure_drop_fraction: float = 0.15
    baseline_window_minutes: int = 60
    debounce_minutes: int = 15
    # Forecast alerts are suppressed for this long after a positive
    # detection: an in-progress (or just-repaired) leak is the detector's
    # story, and the forecaster's estimates are unstable across the repair.
    detection_gate_minutes: int = 10

    def __post_init__(self):
        if not 0.0 < self.forecast_threshold <= 1.0:
            raise ValueError("forecast_threshold must be in (0, 1]")
        if not 0.0 < self.pressure_drop_fraction < 1.0:
            raise ValueError("pressure_drop_fraction must be in (0, 1)")
        if self.baseline_window_minutes <= 0 or self.debounce_minutes < 0:
            raise ValueError("window lengths must be positive")
        if self.detection_gate_minutes < 0:
            raise ValueError("detection_gate_minutes must be >= 0")


class UnknownAlertError(KeyError):
    """Acknowledgement of an id the engine has never issued."""


@dataclass
class _RackState:
    # (timestamp, pressure) of the trailing baseline window
    pressure_history: deque = field(default_factory=deque)
    last_fired: dict = field(default_factory=dict)
    last_detection: int | None = None


class AlertEngine:
    """Single-threaded rule evaluation; thread-safe acknowledgement."""

    def __init__(
        self,
        rules: AlertRules | None = None,
        audit_path: str | Path | None = None,
        sink: Callable[[AlertRecord], None] | None = None,
        id_factory: Callable[[], str] | None = None,
    ):
        self.rules = rules or AlertRules()
        self._alerts: dict[str, AlertRecord] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._racks: dict[str, _RackState] = {}
        self._audit_path = Path(audit_path) if audit_path else None
        self._sink = sink
        self._id_factory = id_factory or (lambda: uuid.uuid4().hex[:12])
        self.malformed_count = 0

    # -- ingest ------------------------------------------------------------

    def ingest(self, item) -> list[AlertRecord]:
        """Feed one pipeline result; returns alerts fired by it (often none).

        Malformed inputs are counted and dropped, never raised.
        """
        try:
            if isinstance(item, ForecastResult):
                return self._on_forecast(item)
            if isinstance(item, SensorReading):
                return self._on_reading(item)
            if isinstance(item, DetectionResult):
                return self._on_detection(item)
        except (TypeError, ValueError, KeyError):
            pass
        self.malformed_count += 1
        return []

    def _on_detection(self, det: DetectionResult) -> list[AlertRecord]:
        # Detections surface via the stream, not a rule; they only arm the
        # gate that silences forecast alerts around an active leak.
        if det.is_leak:
            state = self._racks.setdefault(det.rack_id, _RackState())
            if state.last_detection is None or det.issued_at > state.last_detection:
                state.last_detection = det.issued_at
        return []

    def _on_forecast(self, fc: ForecastResult) -> list[AlertRecord]:
        prob = fc.probability_within(self.rules.forecast_horizon_hours)
        if prob <= self.rules.forecast_threshold:
            return []
        state = self._racks.setdefault(fc.rack_id, _RackState())
        gate_ns = self.rules.detection_gate_minutes * NS_PER_MINUTE
        if (
            gate_ns
            and state.last_detection is not None
            and 0 <= fc.issued_at - state.last_detection < gate_ns
        ):
            return []
        record = self._fire(
            AlertKind.FORECAST_PROBABILITY,
            fc.rack_id,
            fc.issued_at,
            (
                ("probability", prob),
                ("horizon_hours", self.rules.forecast_horizon_hours),
                ("point_estimate_hours", fc.point_estimate),
            ),
        )
        return [record] if record else []

    def _on_reading(self, reading: SensorReading) -> list[AlertRecord]:
        state = self._racks.setdefault(reading.rack_id, _RackState())
        fired: list[AlertRecord] = []
        history = state.pressure_history
        span_ns = self.rules.baseline_window_minutes * NS_PER_MINUTE
        while history and history[0][0] < reading.timestamp - span_ns:
            history.popleft()
        # Baseline excludes the current reading: evaluate before appending.
        if history:
            baseline = sum(p for _, p in history) / len(history)
            threshold = (1.0 - self.rules.pressure_drop_fraction) * baseline
            if reading.pressure < threshold:
                record = self._fire(
                    AlertKind.PRESSURE_DROP,
                    reading.rack_id,
                    reading.timestamp,
                    (
                        ("pressure", reading.pressure),
                        ("baseline", baseline),
                        ("threshold", threshold),
                    ),
                )
                if record:
                    fired.append(record)
        history.append((reading.timestamp, reading.pressure))
        return fired

    def _fire(
        self,
        kind: AlertKind,
        rack_id: str,
        timestamp: int,
        payload: tuple[tuple[str, float], ...],
    ) -> AlertRecord | None:
        state = self._racks.setdefault(rack_id, _RackState())
        last = state.last_fired.get(kind)
        debounce_ns = self.rules.debounce_minutes * NS_PER_MINUTE
        if last is not None and timestamp - last < debounce_ns:
            return None
        state.last_fired[kind] = timestamp
        record = AlertRecord(
            id=self._id_factory(),
            rack_id=rack_id,
            fired_at=timestamp,
            rule=kind,
            payload=payload,
        )
        with self._lock:
            self._alerts[record.id] = record
            self._order.append(record.id)
        self._audit(record)
        if self._sink is not None:
            self._sink(record)
        return record

    # -- queries and lifecycle ----------------------------------------------

    def acknowledge(self, alert_id: str) -> AlertRecord:
        """Mark an alert acknowledged; idempotent; unknown id errors."""
        with self._lock:
            record = self._alerts.get(alert_id)
            if record is None:
                raise UnknownAlertError(alert_id)
            if not record.acknowledged:
                record = replace(record, acknowledged=True)
                self._alerts[alert_id] = record
            return record

    def get(self, alert_id: str) -> AlertRecord | None:
        with self._lock:
            return self._alerts.get(alert_id)

    def alerts_since(self, since_ns: int = 0) -> list[AlertRecord]:
        with self._lock:
            return [
                self._alerts[i]
                for i in self._order
                if self._alerts[i].fired_at >= since_ns
            ]

    def _audit(self, record: AlertRecord) -> None:
        if self._audit_path is None:
            return
        line = json.dumps(
            {
                "id": record.id,
                "rack_id": record.rack_id,
                "fired_at": str(record.fired_at),
                "rule": record.rule.value,
                "payload": record.payload_dict(),
            },
            sort_keys=True,
        )
        with self._audit_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
