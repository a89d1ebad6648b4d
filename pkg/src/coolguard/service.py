"""Pipeline orchestration and the operator-facing HTTP/WebSocket API.

The live loop wires generator -> broker -> store -> models -> alerts:
readings stream at one message per simulated second, detection runs on
every reading, and a forecast is issued once per simulated minute from the
trailing 60-minute window. Store writes are batched per simulated minute,
so a crash loses at most the last unflushed batch.

`replay` runs the same inference path over a dataset file at full speed and
returns a deterministic report (stable alert ids, sorted keys), so two
replays of the same inputs are byte-identical when serialized.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from . import analytics, forest, lstm
from .alerts import AlertEngine, AlertRules, UnknownAlertError
from .broker import Broker
from .features import make_windows, windows_to_arrays
from .model import (
    CHANNELS,
    NS_PER_MINUTE,
    AlertRecord,
    DetectionResult,
    ForecastResult,
    LeakEvent,
    ParseError,
    SensorReading,
    parse_reading,
    read_dataset,
    serialize_reading,
    validate_reading,
)
from .simgen import InjectionError, SimConfig, StreamHandle, events_from_flags
from .tstore import Series, TimeSeriesStore

FORECAST_HORIZONS = (2.0, 4.0)


class ServiceError(RuntimeError):
    """Startup refused (missing models, bad config)."""


@dataclass
class PipelineConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    checkpoint_path: str = "checkpoint.npz"
    forest_path: str = "forest.json"
    data_dir: str = "coolguard-data"
    rules: AlertRules = field(default_factory=AlertRules)
    speedup: float = 60.0
    host: str = "127.0.0.1"
    port: int = 8000
    audit_path: str | None = None
    static_dir: str | None = None


def _load_models(checkpoint_path: str, forest_path: str):
    ckpt = Path(checkpoint_path)
    fpath = Path(forest_path)
    if not ckpt.exists():
        raise ServiceError(
            f"forecaster checkpoint not found at {ckpt}; run `coolguard train`"
            " or pass --checkpoint"
        )
    if not fpath.exists():
        raise ServiceError(
            f"detector model not found at {fpath}; run `coolguard train`"
            " or pass --forest"
        )
    try:
        model, norm, cal = lstm.load_checkpoint(ckpt)
    except Exception as exc:
        raise ServiceError(f"unreadable checkpoint {ckpt}: {exc}") from exc
    if cal is None:
        raise ServiceError(f"checkpoint {ckpt} has no calibration; retrain")
    try:
        rf = forest.load(fpath)
    except Exception as exc:
        raise ServiceError(f"unreadable detector model {fpath}: {exc}") from exc
    return model, norm, cal, rf


def _forecast_from_window(model, norm, cal, values: np.ndarray,
                          issued_at: int, rack_id: str) -> ForecastResult:
    z = (values - np.asarray(norm.mean)) / np.asarray(norm.stddev)
    point = lstm.predict(model, z)
    probs = tuple(
        (h, lstm.prob_within(cal, point, h)) for h in FORECAST_HORIZONS
    )
    return ForecastResult(
        issued_at=issued_at,
        rack_id=rack_id,
        point_estimate=point,
        eps90=cal.eps90,
        prob_within=probs,
    )


# -- JSON encoding (timestamps as strings: JS numbers lose ns precision) ----


def reading_json(r: SensorReading) -> dict:
    return {
        "timestamp_ns": str(r.timestamp),
        "rack_id": r.rack_id,
        "pressure": r.pressure,
        "flow": r.flow,
        "humidity": r.humidity,
        "temperature": r.temperature,
    }


def forecast_json(f: ForecastResult) -> dict:
    return {
        "issued_at_ns": str(f.issued_at),
        "rack_id": f.rack_id,
        "point_estimate_hours": f.point_estimate,
        "eps90_hours": f.eps90,
        "prob_within": {f"{h:g}": p for h, p in f.prob_within},
    }


def detection_json(d: DetectionResult) -> dict:
    return {
        "issued_at_ns": str(d.issued_at),
        "rack_id": d.rack_id,
        "is_leak": d.is_leak,
        "vote_score": d.vote_score,
    }


def alert_json(a: AlertRecord) -> dict:
    return {
        "id": a.id,
        "rack_id": a.rack_id,
        "fired_at_ns": str(a.fired_at),
        "rule": a.rule.value,
        "payload": a.payload_dict(),
        "acknowledged": a.acknowledged,
    }


def event_json(e: LeakEvent) -> dict:
    return {
        "id": e.id,
        "rack_id": e.rack_id,
        "onset_ns": str(e.onset),
        "ramp_minutes": e.ramp_minutes,
        "duration_minutes": e.duration_minutes,
        "severity": e.severity,
    }


class _WsHub:
    """Fan-out of tagged events to WebSocket clients, drop-oldest per client."""

    def __init__(self, maxlen: int = 512):
        self._clients: list[deque] = []
        self._lock = threading.Lock()
        self._maxlen = maxlen

    def register(self) -> deque:
        q: deque = deque(maxlen=self._maxlen)
        with self._lock:
            self._clients.append(q)
        return q

    def unregister(self, q: deque) -> None:
        with self._lock:
            if q in self._clients:
                self._clients.remove(q)

    def broadcast(self, kind: str, data: dict) -> None:
        msg = json.dumps({"type": kind, "data": data}, sort_keys=True)
        with self._lock:
            clients = list(self._clients)
        for q in clients:
            q.append(msg)  # deque(maxlen) drops oldest when full


class PipelineService:
    """Live pipeline: own the broker, store, models, rules, and stream."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.model, self.norm, self.cal, self.rf = _load_models(
            cfg.checkpoint_path, cfg.forest_path
        )
        self.store = TimeSeriesStore(cfg.data_dir)
        self.hub = _WsHub()
        self.engine = AlertEngine(
            rules=cfg.rules, audit_path=cfg.audit_path, sink=self._on_alert
        )
        self.broker = Broker()
        self._publisher = self.broker.publisher(cfg.sim.rack_id)
        self._subscription = None
        self.stream: StreamHandle | None = None
        self.latest_forecast: ForecastResult | None = None
        self._minute_values: deque = deque(maxlen=60)
        self._last_minute: int | None = None
        self._write_buffer: list = []
        self._forecast_alerts: list[tuple[int, float]] = []
        self._detections: list[DetectionResult] = []
        self._arrival_wall: float = 0.0
        self._alert_latencies: list[float] = []
        self.counters = {
            "readings": 0,
            "malformed": 0,
            "forecasts": 0,
            "forecast_alerts": 0,
            "pressure_alerts": 0,
            "detections_positive": 0,
            "store_rejections": 0,
        }
        self._started = False

    # -- lifecycle ---------------------------------------------------------

    def start(self, max_minutes: int | None = None) -> "PipelineService":
        if self._started:
            return self
        self._started = True
        self._subscription = self.broker.subscribe(
            "dc/+/telemetry", callback=self._on_envelope
        )
        self.stream = StreamHandle(
            self.cfg.sim,
            self.cfg.speedup,
            sink=self._publish_reading,
            max_minutes=max_minutes,
        ).start()
        return self

    def stop(self) -> None:
        if self.stream is not None:
            self.stream.stop()
        if self._subscription is not None:
            self._subscription.close()
        self._flush_writes()
        self.store.close()

    def _publish_reading(self, reading: SensorReading) -> None:
        self._publisher.publish(
            f"dc/{reading.rack_id}/telemetry", serialize_reading(reading), qos=1
        )

    # -- hot path ------------------------------------------------------------

    def _on_envelope(self, env) -> None:
        self._arrival_wall = time.perf_counter()
        try:
            reading = parse_reading(env.payload)
        except ParseError:
            self.counters["malformed"] += 1
            return
        if validate_reading(reading):
            self.counters["malformed"] += 1
            return
        self.counters["readings"] += 1
        self.hub.broadcast("reading", reading_json(reading))
        for ch in CHANNELS:
            self._write_buffer.append(
                (Series.of(ch, rack=reading.rack_id), reading.timestamp,
                 getattr(reading, ch))
            )
        detection = forest.predict(self.rf, reading)
        if detection.is_leak:
            self.counters["detections_positive"] += 1
            self._detections.append(detection)
            self._write_buffer.append(
                (Series.of("detection", rack=reading.rack_id),
                 reading.timestamp, detection.vote_score)
            )
            self.hub.broadcast("detection", detection_json(detection))
        self.engine.ingest(detection)
        self.engine.ingest(reading)
        minute = reading.timestamp // NS_PER_MINUTE
        if minute != self._last_minute:
            self._last_minute = minute
            self._on_minute(reading)

    def _on_minute(self, reading: SensorReading) -> None:
        self._minute_values.append(
            [getattr(reading, ch) for ch in CHANNELS]
        )
        self._flush_writes()
        if len(self._minute_values) < 60:
            return
        fc = _forecast_from_window(
            self.model, self.norm, self.cal,
            np.asarray(self._minute_values, dtype=np.float64),
            reading.timestamp, reading.rack_id,
        )
        self.counters["forecasts"] += 1
        self.latest_forecast = fc
        self._write_buffer.append(
            (Series.of("forecast_ttl", rack=fc.rack_id), fc.issued_at,
             fc.point_estimate)
        )
        self.hub.broadcast("forecast", forecast_json(fc))
        self.engine.ingest(fc)

    def _on_alert(self, record: AlertRecord) -> None:
        if record.rule.value == "forecast_probability":
            self.counters["forecast_alerts"] += 1
            self._forecast_alerts.append(
                (record.fired_at, record.payload_dict().get("probability", 0.0))
            )
        else:
            self.counters["pressure_alerts"] += 1
        self._alert_latencies.append(time.perf_counter() - self._arrival_wall)
        self._write_buffer.append(
            (Series.of("alert", rack=record.rack_id), record.fired_at, 1.0)
        )
        self.hub.broadcast("alert", alert_json(record))

    def _flush_writes(self) -> None:
        if not self._write_buffer:
            return
        batch, self._write_buffer = self._write_buffer, []
        _, rejections = self.store.write_batch(batch)
        self.counters["store_rejections"] += len(rejections)

    # -- API support -----------------------------------------------------------

    def readings_between(self, rack: str, t0: int, t1: int) -> list[dict]:
        columns = {}
        for ch in CHANNELS:
            res = self.store.query_range(Series.of(ch, rack=rack), t0, t1)
            columns[ch] = dict(res.points)
        timestamps = sorted(columns["pressure"])
        out = []
        for ts in timestamps:
            if all(ts in columns[ch] for ch in CHANNELS):
                row = {"timestamp_ns": str(ts), "rack_id": rack}
                row.update({ch: columns[ch][ts] for ch in CHANNELS})
                out.append(row)
        return out

    def inject_leak(self, severity: float, ramp_minutes: int,
                    duration_minutes: int) -> LeakEvent:
        if self.stream is None:
            raise ServiceError("stream is not running")
        return self.stream.inject_leak(severity, ramp_minutes, duration_minutes)

    def alert_latency_p95(self) -> float:
        lat = sorted(self._alert_latencies)
        if not lat:
            return 0.0
        return lat[min(len(lat) - 1, int(0.95 * len(lat)))]

    def report(self) -> dict:
        events = self.stream.events if self.stream is not None else []
        now_ns = None
        if self.stream is not None:
            now_ns = (self.cfg.sim.start_ns
                      + self.stream.current_minute() * NS_PER_MINUTE)
        # Score only episodes whose detection window has fully elapsed.
        scoreable = [
            e for e in events if now_ns is None or e.end <= now_ns
        ]
        cov = analytics.integrated_coverage(
            self._forecast_alerts, self._detections, scoreable
        ) if scoreable else None
        out = {
            "counters": dict(self.counters),
            "events": [event_json(e) for e in events],
            "alerts": len(self.engine.alerts_since(0)),
            "stream_dropped": self.stream.dropped if self.stream else 0,
            "broker_p99_latency_ms": self.broker.latency_quantile(0.99) * 1e3,
            "alert_latency_p95_ms": self.alert_latency_p95() * 1e3,
        }
        if cov is not None:
            out["integrated_coverage"] = cov.integrated_coverage
            out["attribution"] = cov.attribution
            out["projected_annual_kwh_saved"] = analytics.energy_savings(
                *analytics.DEFAULT_FLEET, cov.integrated_coverage
            )
        return out


# -- FastAPI wiring -----------------------------------------------------------


class ScenarioBody(BaseModel):
    severity: float
    ramp_minutes: int = 30
    duration_minutes: int = 120


def create_app(service: PipelineService):
    import asyncio

    app = FastAPI(title="coolguard", version="1.0")

    @app.get("/api/v1/readings")
    def get_readings(
        rack: str | None = None,
        from_ns: str | None = Query(None, alias="from"),
        to_ns: str | None = Query(None, alias="to"),
    ):
        rack = rack or service.cfg.sim.rack_id
        try:
            t0 = int(from_ns) if from_ns is not None else 0
            t1 = int(to_ns) if to_ns is not None else (1 << 62)
        except ValueError:
            raise HTTPException(422, "from/to must be integer nanoseconds")
        return service.readings_between(rack, t0, t1)

    @app.get("/api/v1/forecast/latest")
    def get_latest_forecast():
        fc = service.latest_forecast
        if fc is None:
            raise HTTPException(404, "no forecast issued yet")
        return forecast_json(fc)

    @app.get("/api/v1/alerts")
    def get_alerts(since: str | None = None):
        try:
            since_ns = int(since) if since is not None else 0
        except ValueError:
            raise HTTPException(422, "since must be integer nanoseconds")
        return [alert_json(a) for a in service.engine.alerts_since(since_ns)]

    @app.post("/api/v1/alerts/{alert_id}/ack")
    def ack_alert(alert_id: str):
        try:
            return alert_json(service.engine.acknowledge(alert_id))
        except UnknownAlertError:
            raise HTTPException(404, f"unknown alert id {alert_id!r}")

    @app.post("/api/v1/scenario/leak")
    def scenario_leak(body: ScenarioBody):
        try:
            event = service.inject_leak(
                body.severity, body.ramp_minutes, body.duration_minutes
            )
        except InjectionError as exc:
            raise HTTPException(409, str(exc))
        except (ValueError, ServiceError) as exc:
            raise HTTPException(422, str(exc))
        return event_json(event)

    @app.get("/api/v1/report")
    def get_report():
        return service.report()

    @app.websocket("/api/v1/stream")
    async def ws_stream(ws: WebSocket):
        await ws.accept()
        q = service.hub.register()
        try:
            while True:
                sent = 0
                while q and sent < 100:
                    await ws.send_text(q.popleft())
                    sent += 1
                await asyncio.sleep(0.05)
        except WebSocketDisconnect:
            pass
        finally:
            service.hub.unregister(q)

    if service.cfg.static_dir and Path(service.cfg.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount(
            "/", StaticFiles(directory=service.cfg.static_dir, html=True),
            name="console",
        )
    return app


# -- offline replay -------------------------------------------------------------


def replay(dataset_path: str, checkpoint_path: str, forest_path: str,
           rules: AlertRules | None = None) -> dict:
    """Run the full inference path over a dataset file at maximum speed.

    Returns a deterministic report dict mirroring the evaluation metrics;
    serializing it with sorted keys is byte-identical across runs.
    """
    readings, flags, _ = read_dataset(dataset_path)
    if not readings:
        raise ValueError(f"dataset {dataset_path} is empty")
    events = events_from_flags(readings, flags)
    model, norm, cal, rf = _load_models(checkpoint_path, forest_path)
    rules = rules or AlertRules()

    counter = itertools.count(1)
    engine = AlertEngine(
        rules=rules, id_factory=lambda: f"alert-{next(counter):05d}"
    )
    detections: list[DetectionResult] = []
    forecast_alerts: list[tuple[int, float]] = []
    minute_values: deque = deque(maxlen=60)
    preds: list[bool] = []

    for reading in readings:
        detection = forest.predict(rf, reading)
        preds.append(detection.is_leak)
        if detection.is_leak:
            detections.append(detection)
        engine.ingest(detection)
        engine.ingest(reading)
        minute_values.append([getattr(reading, ch) for ch in CHANNELS])
        if len(minute_values) == 60:
            fc = _forecast_from_window(
                model, norm, cal,
                np.asarray(minute_values, dtype=np.float64),
                reading.timestamp, reading.rack_id,
            )
            for record in engine.ingest(fc):
                if record.rule.value == "forecast_probability":
                    forecast_alerts.append(
                        (record.fired_at,
                         record.payload_dict().get("probability", 0.0))
                    )

    det_report = analytics.evaluate_detector(
        lambda i: preds[i], flags, events, readings[0].timestamp
    ) if events else None

    stats_windows, _ = make_windows(readings, events, norm)
    fc_report = None
    if stats_windows:
        x, y, _ = windows_to_arrays(stats_windows)
        if (y < 7.999).any():
            test_tail = [w for w in stats_windows
                         if w.end_timestamp > readings[-1].timestamp
                         - 1440 * NS_PER_MINUTE]
            if test_tail:
                fc_report = analytics.evaluate_forecaster(model, cal, test_tail)

    cov = analytics.integrated_coverage(forecast_alerts, detections, events)

    # False-positive rate among high-confidence forecast alerts: an alert is
    # justified when an onset follows within the horizon or a leak is active
    # as it fires; anything else cried wolf.
    horizon_ns = int(rules.forecast_horizon_hours * 60 * NS_PER_MINUTE)
    strong = [
        a for a in engine.alerts_since(0)
        if a.rule.value == "forecast_probability"
        and a.payload_dict().get("probability", 0.0) >= 0.90
    ]

    def _justified(fired_at: int) -> bool:
        for ev in events:
            end = ev.onset + ev.duration_minutes * NS_PER_MINUTE
            if ev.onset - horizon_ns <= fired_at < end:
                return True
        return False

    fp_strong = sum(1 for a in strong if not _justified(a.fired_at))

    report: dict = {
        "dataset": {
            "readings": len(readings),
            "episodes": len(events),
            "leak_fraction": sum(flags) / len(flags),
        },
        "alerts": {
            "total": len(engine.alerts_since(0)),
            "forecast": sum(
                1 for a in engine.alerts_since(0)
                if a.rule.value == "forecast_probability"
            ),
            "forecast_at_90": len(strong),
            "forecast_fp_rate_at_90": (fp_strong / len(strong)) if strong else 0.0,
            "pressure_drop": sum(
                1 for a in engine.alerts_since(0)
                if a.rule.value == "pressure_drop"
            ),
        },
        "integrated_coverage": cov.integrated_coverage,
        "attribution": cov.attribution,
        "projected_annual_kwh_saved": analytics.energy_savings(
            *analytics.DEFAULT_FLEET, cov.integrated_coverage
        ),
    }
    if det_report is not None:
        report["detector"] = det_report.as_dict()
    if fc_report is not None:
        report["forecaster"] = fc_report.as_dict()
    return report
