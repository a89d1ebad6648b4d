"""In-process pub/sub broker with MQTT-style topics and QoS 0/1 semantics.

Topics are `/`-separated segments (`dc/rack-01/telemetry`); filters may use
the single-level wildcard `+`. qos=1 publishes are retried with exponential
backoff until every matching subscriber acknowledges, so delivery is
at-least-once across a broker stop/restart; consumers dedupe on
(publisher_id, message_id). Each subscription delivers on its own consumer
thread, preserving per-publisher FIFO order.

An optional bridge mirrors qos=1 traffic to an external MQTT 3.1.1 broker
when COOLGUARD_MQTT_URL is set; the in-process path stays authoritative so
the test suite runs hermetically.
"""

from __future__ import annotations

import itertools
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

RETRY_BASE_SECONDS = 0.1
RETRY_CAP_SECONDS = 5.0


class FilterError(ValueError):
    """Malformed topic filter; the message names the offending segment."""


class PublishError(RuntimeError):
    """Raised when the disconnected-publish buffer overflows."""


def _split_topic(topic: str) -> list[str]:
    if not topic or topic.startswith("/") or topic.endswith("/"):
        raise FilterError(f"malformed topic {topic!r}")
    segments = topic.split("/")
    for seg in segments:
        if seg == "":
            raise FilterError(f"empty segment in {topic!r}")
    return segments


def validate_filter(topic_filter: str) -> list[str]:
    """Check a subscription filter; `+` matches one level, `#` is refused."""
    segments = _split_topic(topic_filter)
    for i, seg in enumerate(segments):
        if seg == "#":
            raise FilterError(
                f"multi-level wildcard '#' not supported (segment {i + 1} of"
                f" {topic_filter!r})"
            )
        if ("+" in seg or "#" in seg) and seg != "+":
            raise FilterError(
                f"wildcard must stand alone in its segment (segment {i + 1}:"
                f" {seg!r})"
            )
    return segments


def filter_matches(filter_segments: list[str], topic: str) -> bool:
    parts = topic.split("/")
    if len(parts) != len(filter_segments):
        return False
    return all(f == "+" or f == p for f, p in zip(filter_segments, parts))


@dataclass(frozen=True)
class Envelope:
    """One routed message."""

    topic: str
    payload: str
    qos: int
    message_id: int
    publisher_id: str


@dataclass
class DeliveryReceipt:
    """Async completion handle for a publish."""

    envelope: Envelope
    _done: threading.Event = field(default_factory=threading.Event)

    def wait(self, timeout: float | None = None) -> bool:
        return self._done.wait(timeout)

    @property
    def completed(self) -> bool:
        return self._done.is_set()


class _Subscription:
    def __init__(self, broker: "Broker", topic_filter: str,
                 callback: Callable[[Envelope], None] | None, maxsize: int):
        self.filter_segments = validate_filter(topic_filter)
        self.topic_filter = topic_filter
        self._broker = broker
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._callback = callback
        self._closed = threading.Event()
        # Pull-style subscriptions (no callback) keep their queue intact
        # until drain(); only callback delivery needs a consumer thread.
        self._thread: threading.Thread | None = None
        if callback is not None:
            self._thread = threading.Thread(
                target=self._run, name=f"sub:{topic_filter}", daemon=True
            )
            self._thread.start()

    def _run(self) -> None:
        while not self._closed.is_set():
            try:
                env, ack = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                if self._callback is not None:
                    self._callback(env)
            finally:
                ack()

    def _offer(self, env: Envelope, ack: Callable[[], None]) -> bool:
        if self._closed.is_set():
            return False
        try:
            self._queue.put_nowait((env, ack))
            return True
        except queue.Full:
            return False

    def drain(self, max_items: int | None = None) -> list[Envelope]:
        """Pull delivered envelopes when no callback was supplied."""
        if self._callback is not None:
            raise RuntimeError("subscription delivers via callback")
        out: list[Envelope] = []
        while max_items is None or len(out) < max_items:
            try:
                env, ack = self._queue.get_nowait()
            except queue.Empty:
                break
            ack()
            out.append(env)
        return out

    def close(self) -> None:
        self._closed.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._broker._drop_subscription(self)


class Broker:
    """Thread-safe in-process broker; see the module docstring for semantics."""

    def __init__(self, offline_buffer: int = 10_000):
        self._lock = threading.Lock()
        self._subs: list[_Subscription] = []
        self._running = True
        self._offline_buffer = offline_buffer
        self._pending: list[tuple[Envelope, DeliveryReceipt]] = []
        self._draining = False
        self._retry_thread: threading.Thread | None = None
        self._retry_wake = threading.Event()
        self._latencies: list[float] = []
        self._bridge = _maybe_bridge()

    # -- lifecycle -------------------------------------------------------

    def stop(self) -> None:
        """Simulate broker death: deliveries halt, qos=1 publishes buffer."""
        with self._lock:
            self._running = False

    def restart(self) -> None:
        with self._lock:
            self._running = True
        self._retry_wake.set()

    @property
    def running(self) -> bool:
        return self._running

    # -- publishing ------------------------------------------------------

    def publisher(self, publisher_id: str) -> "Publisher":
        return Publisher(self, publisher_id)

    def _publish(self, env: Envelope) -> DeliveryReceipt:
        receipt = DeliveryReceipt(env)
        started = time.perf_counter()
        with self._lock:
            backlog = self._pending or self._draining
            if not self._running or backlog:
                if env.qos == 0 and not self._running:
                    receipt._done.set()  # qos 0 is fire-and-forget; drop
                    return receipt
                # While a backlog drains, new messages queue behind it so
                # per-publisher order survives the restart.
                if len(self._pending) >= self._offline_buffer:
                    raise PublishError("offline buffer full")
                self._pending.append((env, receipt))
                self._ensure_retry_thread()
                self._retry_wake.set()
                return receipt
            targets = [s for s in self._subs
                       if filter_matches(s.filter_segments, env.topic)]
        self._deliver(env, receipt, targets, started)
        return receipt

    def _deliver(self, env: Envelope, receipt: DeliveryReceipt,
                 targets: list[_Subscription], started: float) -> None:
        if not targets:
            receipt._done.set()
            self._latencies.append(time.perf_counter() - started)
            return
        remaining = {"n": len(targets)}
        done_lock = threading.Lock()

        def make_ack():
            def ack():
                with done_lock:
                    remaining["n"] -= 1
                    if remaining["n"] == 0:
                        receipt._done.set()
                        self._latencies.append(time.perf_counter() - started)
            return ack

        for sub in targets:
            delay = RETRY_BASE_SECONDS
            while True:
                if sub._offer(env, make_ack()):
                    break
                if env.qos == 0 or sub._closed.is_set():
                    make_ack()()  # drop for qos 0 / dead subscriber
                    break
                time.sleep(delay)
                delay = min(delay * 2, RETRY_CAP_SECONDS)
        if env.qos == 1 and self._bridge is not None:
            self._bridge.publish(env.topic, env.payload)

    # -- retry of buffered qos=1 publishes ---------------------------------

    def _ensure_retry_thread(self) -> None:
        if self._retry_thread is None or not self._retry_thread.is_alive():
            self._retry_thread = threading.Thread(
                target=self._retry_loop, name="broker-retry", daemon=True
            )
            self._retry_thread.start()

    def _retry_loop(self) -> None:
        delay = RETRY_BASE_SECONDS
        while True:
            with self._lock:
                if not self._pending:
                    self._draining = False
                    return
                if self._running:
                    batch, self._pending = self._pending, []
                    self._draining = True
                else:
                    batch = None
            if batch is None:
                self._retry_wake.wait(delay)
                self._retry_wake.clear()
                delay = min(delay * 2, RETRY_CAP_SECONDS)
                continue
            delay = RETRY_BASE_SECONDS
            for env, receipt in batch:
                with self._lock:
                    targets = [s for s in self._subs
                               if filter_matches(s.filter_segments, env.topic)]
                self._deliver(env, receipt, targets, time.perf_counter())

    # -- subscribing -------------------------------------------------------

    def subscribe(
        self,
        topic_filter: str,
        callback: Callable[[Envelope], None] | None = None,
        maxsize: int = 100_000,
    ) -> _Subscription:
        sub = _Subscription(self, topic_filter, callback, maxsize)
        with self._lock:
            self._subs.append(sub)
        return sub

    def _drop_subscription(self, sub: _Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    # -- instrumentation ---------------------------------------------------

    def latency_quantile(self, q: float) -> float:
        """Publish→full-acknowledgement latency quantile, in seconds."""
        lat = sorted(self._latencies)
        if not lat:
            return 0.0
        idx = min(len(lat) - 1, max(0, int(q * len(lat)) - (0 if q < 1 else 1)))
        return lat[idx]


class Publisher:
    """Per-publisher handle stamping monotone message ids."""

    def __init__(self, broker: Broker, publisher_id: str):
        self._broker = broker
        self.publisher_id = publisher_id
        self._counter = itertools.count(1)

    def publish(self, topic: str, payload: str, qos: int = 1) -> DeliveryReceipt:
        if qos not in (0, 1):
            raise ValueError("qos must be 0 or 1")
        _split_topic(topic)
        env = Envelope(
            topic=topic,
            payload=payload,
            qos=qos,
            message_id=next(self._counter),
            publisher_id=self.publisher_id,
        )
        return self._broker._publish(env)


class Deduper:
    """Consumer-side dedupe on (publisher_id, message_id)."""

    def __init__(self):
        self._seen: set[tuple[str, int]] = set()

    def fresh(self, env: Envelope) -> bool:
        key = (env.publisher_id, env.message_id)
        if key in self._seen:
            return False
        self._seen.add(key)
        return True


def _maybe_bridge():
    url = os.environ.get("COOLGUARD_MQTT_URL")
    if not url:
        return None
    from .mqtt_bridge import MqttBridge

    return MqttBridge(url)
