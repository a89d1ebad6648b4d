"""Synthetic telemetry generator: 7 days of Gaussian rack telemetry with
injected cold-plate leak episodes, plus a pausable real-time streamer.

Leak physics, per episode:

  precursor  — seal seepage; channels drift from baseline toward a small
               fraction of the full signature over several hours (exponential
               approach, so the drift accelerates toward onset)
  onset      — seal failure; humidity and pressure step partway to the full
               signature (vapor burst / loop breach), flow starts a gradual
               decline (the pump compensates at first), all three then ramp
               linearly to the severity-scaled steady state over ramp_minutes
  steady     — plateau at the steady state until the episode ends
  recovery   — repair; linear return to baseline over recovery_minutes

Temperature never steps: it drifts at the configured slow rate only after a
leak has been sustained past the thermal lag (server and rack air thermal
mass buffer the enclosure), and relaxes back at the same rate afterwards.
"""

from __future__ import annotations

import dataclasses
import json
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import (
    CHANNELS,
    NS_PER_MINUTE,
    NS_PER_SECOND,
    LeakEvent,
    SensorReading,
    SteadyState,
    quantize,
)

PRNG_NAME = "numpy PCG64 (per-minute SeedSequence substreams)"

#: Default stream start: 2025-01-06T00:00:00Z, as integer nanoseconds.
DEFAULT_START_NS = 1_736_121_600_000_000_000


@dataclass(frozen=True)
class ChannelSpec:
    mean: float
    stddev: float


@dataclass(frozen=True)
class SimConfig:
    """Full generator configuration; defaults reproduce the reference dataset."""

    seed: int = 42
    duration_minutes: int = 10_080
    start_ns: int = DEFAULT_START_NS
    rack_id: str = "rack-01"

    pressure: ChannelSpec = ChannelSpec(2.0, 0.05)
    flow: ChannelSpec = ChannelSpec(1.5, 0.03)
    humidity: ChannelSpec = ChannelSpec(50.0, 2.0)
    temperature: ChannelSpec = ChannelSpec(25.0, 0.3)

    leak_fraction: float = 0.05
    ramp_minutes: int = 30
    recovery_minutes: int = 5
    episode_minutes: tuple[int, int] = (60, 120)
    severity_range: tuple[float, float] = (0.6, 1.0)

    # Severity-1.0 steady-state targets.
    pressure_band: tuple[float, float] = (1.65, 1.9)     # bar, absolute
    humidity_band_rel: tuple[float, float] = (0.10, 0.22)  # relative elevation
    flow_band_rel: tuple[float, float] = (0.10, 0.22)      # relative reduction

    temp_drift_per_hour: float = 0.1
    thermal_lag_minutes: int = 120

    # Pre-onset degradation. cap = fraction of the full signature the drift
    # reaches at onset; jump = fraction the channel lands on right after the
    # seal fails (flow has no jump, it declines continuously from its cap).
    precursor_minutes: int = 480
    precursor_tau_minutes: int = 280
    precursor_cap: dict = field(
        default_factory=lambda: {"pressure": 0.40, "flow": 0.15, "humidity": 0.30}
    )
    onset_jump: dict = field(
        default_factory=lambda: {"pressure": 0.70, "humidity": 0.95}
    )
    # Two-phase flow past a failed seal is turbulent: the hydraulic channels'
    # noise stddev grows by (factor x response level) while a leak is active.
    # Enclosure humidity integrates the released vapor, so it stays smooth.
    leak_turbulence: dict = field(
        default_factory=lambda: {"pressure": 0.5, "flow": 3.0}
    )

    def channel_spec(self, name: str) -> ChannelSpec:
        return getattr(self, name)

    @property
    def precursor_severity(self) -> float:
        """Severity used to scale pre-onset seepage.

        Seepage through a degrading seal reflects the developing fault, not
        the size of the eventual breach, so every episode's precursor uses
        the same reference amplitude (the midpoint of severity_range).
        """
        return 0.5 * (self.severity_range[0] + self.severity_range[1])

    def full_deviation(self, severity: float) -> dict[str, float]:
        """Signed steady-state deviation per channel at the given severity."""
        return {
            "pressure": severity * (self.pressure_band[0] - self.pressure.mean),
            "flow": -severity * self.flow_band_rel[1] * self.flow.mean,
            "humidity": severity * self.humidity_band_rel[1] * self.humidity.mean,
        }

    def steady_state(self, severity: float) -> SteadyState:
        dev = self.full_deviation(severity)
        return SteadyState(
            pressure=self.pressure.mean + dev["pressure"],
            flow=self.flow.mean + dev["flow"],
            humidity=self.humidity.mean + dev["humidity"],
        )


class ConfigError(ValueError):
    """Raised for configurations the generator refuses to honor."""


def validate_config(cfg: SimConfig) -> None:
    for name in CHANNELS:
        if cfg.channel_spec(name).stddev <= 0:
            raise ConfigError(f"{name} stddev must be > 0")
    if not (0.0 <= cfg.leak_fraction < 0.5):
        raise ConfigError("leak_fraction must be in [0, 0.5)")
    for band_name in ("pressure_band", "humidity_band_rel", "flow_band_rel"):
        low, high = getattr(cfg, band_name)
        if not low < high:
            raise ConfigError(f"{band_name} must be ordered (low < high)")
    if not (0 < cfg.severity_range[0] <= cfg.severity_range[1] <= 1.0):
        raise ConfigError("severity_range must satisfy 0 < low <= high <= 1")
    # The deepest configured signature must clear the normal +-3 sigma
    # envelope, otherwise the classes are inseparable by construction.
    checks = (
        ("pressure", cfg.pressure_band[0], cfg.pressure),
        ("humidity", cfg.humidity.mean * (1 + cfg.humidity_band_rel[1]), cfg.humidity),
        ("flow", cfg.flow.mean * (1 - cfg.flow_band_rel[1]), cfg.flow),
    )
    for name, extreme, spec in checks:
        if abs(extreme - spec.mean) < 3.0 * spec.stddev:
            raise ConfigError(
                f"{name} leak band overlaps the normal +-3 sigma envelope "
                f"(target {extreme} vs mean {spec.mean}, stddev {spec.stddev})"
            )


@dataclass(frozen=True)
class _Episode:
    """Internal schedule entry; onset_minute is an index into the stream."""

    event: LeakEvent
    onset_minute: int
    duration: int
    ramp: int
    severity: float
    precursor_minutes: int

    @property
    def end_minute(self) -> int:
        return self.onset_minute + self.duration


def _minute_noise(seed: int, minute: int) -> np.ndarray:
    """Four iid standard normals for one minute, independent of schedule."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, minute))))
    return rng.standard_normal(4)


def _precursor_level(tau_minutes: float, cfg: SimConfig) -> float:
    """Normalized drift level in [0, 1]: 0 at precursor start, 1 at onset."""
    if tau_minutes >= cfg.precursor_minutes:
        return 0.0
    s = float(cfg.precursor_tau_minutes)
    floor = math.exp(-cfg.precursor_minutes / s)
    return (math.exp(-tau_minutes / s) - floor) / (1.0 - floor)


def _channel_response(ch: str, episode: _Episode, minute: int, cfg: SimConfig) -> float:
    """Fraction of the full deviation channel ch shows at this minute.

    The caller scales pre-onset fractions by the reference severity and
    active/recovery fractions by the episode's own.
    """
    cap = cfg.precursor_cap.get(ch, 0.0)
    onset, end = episode.onset_minute, episode.end_minute
    if minute < onset:
        tau = onset - minute
        if episode.precursor_minutes <= 0 or tau > episode.precursor_minutes:
            return 0.0
        return cap * _precursor_level(tau, cfg)
    if minute < end:
        k = minute - onset
        start = cfg.onset_jump.get(ch, cap)
        if episode.ramp <= 0 or k >= episode.ramp:
            return 1.0
        return start + (1.0 - start) * (k / episode.ramp)
    k = minute - end
    if cfg.recovery_minutes <= 0 or k >= cfg.recovery_minutes:
        return 0.0
    return 1.0 - k / cfg.recovery_minutes


def _temperature_offset(episode: _Episode, minute: int, cfg: SimConfig) -> float:
    """Slow drift: starts thermal_lag_minutes into the episode, relaxes after."""
    rate = cfg.temp_drift_per_hour * episode.severity / 60.0
    drift_start = episode.onset_minute + cfg.thermal_lag_minutes
    if minute < drift_start:
        return 0.0
    peak_minutes = max(0, episode.end_minute - drift_start)
    if minute < episode.end_minute:
        return rate * (minute - drift_start)
    peak = rate * peak_minutes
    return max(0.0, peak - rate * (minute - episode.end_minute))


def _schedule_episodes(cfg: SimConfig, rng: np.random.Generator) -> list[_Episode]:
    """Place episodes so leaking minutes land within +-10% of the target.

    One episode is anchored inside the final 24 hours so the held-out test
    day always contains an onset; earlier episodes are strewn across the
    remaining span with enough clearance for precursor and recovery tails.
    """
    target = cfg.leak_fraction * cfg.duration_minutes
    if target <= 0:
        return []
    lo, hi = cfg.episode_minutes
    # The last episode's tail runs off-record (see below), so provision for
    # the largest possible off-record slice when drawing durations, then trim
    # earlier episodes until the in-data total sits within +-5% of target.
    durations: list[int] = []
    while sum(durations) < 0.95 * target + 40:
        durations.append(int(rng.integers(lo, hi + 1)))
    off_record = int(rng.integers(10, 41))
    off_record = min(off_record, max(10, durations[-1] - 45))
    overshoot = sum(durations) - off_record - 1.05 * target
    for i in range(len(durations) - 1):
        if overshoot <= 0:
            break
        give = int(min(math.ceil(overshoot), durations[i] - lo))
        durations[i] -= give
        overshoot -= give

    clearance = cfg.precursor_minutes + cfg.recovery_minutes + 30
    episodes: list[_Episode] = []
    final_day_start = max(0, cfg.duration_minutes - 1440)

    def _severity() -> float:
        s_lo, s_hi = cfg.severity_range
        return float(rng.uniform(s_lo, s_hi))

    def _make(onset_minute: int, duration: int, severity: float, idx: int) -> _Episode:
        event = LeakEvent(
            id=f"leak-{idx:03d}",
            rack_id=cfg.rack_id,
            onset=cfg.start_ns + onset_minute * NS_PER_MINUTE,
            ramp_minutes=min(cfg.ramp_minutes, duration),
            duration_minutes=duration,
            severity=severity,
            steady_state=cfg.steady_state(severity),
        )
        return _Episode(
            event=event,
            onset_minute=onset_minute,
            duration=duration,
            ramp=min(cfg.ramp_minutes, duration),
            severity=severity,
            precursor_minutes=cfg.precursor_minutes,
        )

    # All placements draw from the same rng stream, so the whole schedule is
    # a pure function of the seed.
    #
    # The last episode runs into the end of the recorded span (the repair
    # happens off-record), so the final day exercises the complete forecast
    # cycle: quiet baseline, the 8 h approach, onset, and the active leak.
    last_dur = durations[-1]
    last_onset = cfg.duration_minutes - (last_dur - off_record)
    if last_onset - cfg.precursor_minutes < final_day_start:
        raise ConfigError("duration too short to anchor an episode in the final day")

    # The second-to-last episode ends just before the final day, so the
    # span right behind the holdout boundary (the tail of the validation
    # split) sees a full approach, an active leak, and the recovery back
    # to baseline rather than only quiet telemetry.
    remaining = durations[:-1]
    straddle: tuple[int, int] | None = None
    if remaining:
        dur = remaining[-1]
        onset_lo = final_day_start - 240
        onset_hi = final_day_start - dur - cfg.recovery_minutes - 5
        if onset_hi <= max(onset_lo, clearance):
            raise ConfigError("duration too short to place an episode before the final day")
        straddle = (int(rng.integers(max(onset_lo, clearance), onset_hi + 1)), dur)
        remaining = remaining[:-1]

    span_hi = (straddle[0] if straddle else last_onset - cfg.precursor_minutes) - clearance
    slots = len(remaining)
    if slots:
        span = span_hi - clearance
        if span <= 0:
            raise ConfigError("duration too short for the requested leak fraction")
        seg = span / slots
        for i, dur in enumerate(remaining):
            seg_lo = clearance + i * seg
            seg_hi = clearance + (i + 1) * seg - dur - cfg.recovery_minutes
            if seg_hi <= seg_lo:
                raise ConfigError("episodes do not fit; lower leak_fraction or shorten episodes")
            onset = int(rng.integers(int(seg_lo), int(seg_hi) + 1))
            episodes.append(_make(onset, dur, _severity(), len(episodes)))
    if straddle:
        episodes.append(_make(straddle[0], straddle[1], _severity(), len(episodes)))
    episodes.append(_make(last_onset, last_dur, _severity(), len(episodes)))
    episodes.sort(key=lambda e: e.onset_minute)
    return episodes


def _active_episode(episodes: Sequence[_Episode], minute: int) -> _Episode | None:
    for ep in episodes:
        if ep.onset_minute <= minute < ep.end_minute:
            return ep
    return None


def _compose_reading(
    cfg: SimConfig, minute: int, episodes: Sequence[_Episode], timestamp: int | None = None
) -> tuple[SensorReading, bool]:
    noise = _minute_noise(cfg.seed, minute)
    values = {}
    for i, ch in enumerate(("pressure", "flow", "humidity")):
        spec = cfg.channel_spec(ch)
        dev = 0.0
        sigma = spec.stddev
        turb = cfg.leak_turbulence.get(ch, 0.0)
        for ep in episodes:
            response = _channel_response(ch, ep, minute, cfg)
            if response:
                # Pre-onset seepage is severity-independent (see
                # SimConfig.precursor_severity); the breach itself scales.
                sev = ep.severity if minute >= ep.onset_minute else cfg.precursor_severity
                dev += cfg.full_deviation(sev)[ch] * response
                if turb and ep.onset_minute <= minute < ep.end_minute:
                    sigma = spec.stddev * (1.0 + turb * response)
        values[ch] = quantize(spec.mean + sigma * noise[i] + dev)
    temp_dev = sum(_temperature_offset(ep, minute, cfg) for ep in episodes)
    values["temperature"] = quantize(
        cfg.temperature.mean + cfg.temperature.stddev * noise[3] + temp_dev
    )
    ts = timestamp if timestamp is not None else cfg.start_ns + minute * NS_PER_MINUTE
    reading = SensorReading(timestamp=ts, rack_id=cfg.rack_id, **values)
    leaking = _active_episode(episodes, minute) is not None
    return reading, leaking


def generate_dataset(cfg: SimConfig) -> tuple[list[SensorReading], list[LeakEvent]]:
    """Generate the full minute-resolution dataset; deterministic per seed."""
    validate_config(cfg)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 0xC001))))
    episodes = _schedule_episodes(cfg, rng)
    readings = [
        _compose_reading(cfg, minute, episodes)[0] for minute in range(cfg.duration_minutes)
    ]
    return readings, [ep.event for ep in episodes]


def leak_flags(readings: Sequence[SensorReading], events: Sequence[LeakEvent]) -> list[bool]:
    """Ground-truth is_leaking flag per reading, from the event intervals."""
    return [any(ev.covers(r.timestamp) for ev in events) for r in readings]


def events_from_flags(
    readings: Sequence[SensorReading], flags: Sequence[bool]
) -> list[LeakEvent]:
    """Reconstruct episode intervals from a flagged dataset.

    Onset and duration are exact inverses of leak_flags for minute-resolution
    data. Severity is not recoverable from flags alone, so it is reported as
    0.0 and the steady state echoes the first in-leak reading.
    """
    if len(readings) != len(flags):
        raise ValueError("flags length must match readings")
    events: list[LeakEvent] = []
    start: int | None = None
    for i in range(len(flags) + 1):
        active = i < len(flags) and flags[i]
        if active and start is None:
            start = i
        elif not active and start is not None:
            first = readings[start]
            events.append(
                LeakEvent(
                    id=f"episode-{len(events):03d}",
                    rack_id=first.rack_id,
                    onset=first.timestamp,
                    ramp_minutes=0,
                    duration_minutes=i - start,
                    severity=0.0,
                    steady_state=SteadyState(
                        pressure=first.pressure,
                        flow=first.flow,
                        humidity=first.humidity,
                    ),
                )
            )
            start = None
    return events


def config_header_comments(cfg: SimConfig) -> list[str]:
    """Provenance comments embedded at the top of dataset exports."""
    payload = dataclasses.asdict(cfg)
    return [
        f"generator=coolguard.simgen prng={PRNG_NAME}",
        "config=" + json.dumps(payload, sort_keys=True, default=str),
    ]


class InjectionError(RuntimeError):
    """Raised when a leak injection overlaps an active episode."""

    def __init__(self, active_id: str):
        super().__init__(f"injection overlaps active event {active_id}")
        self.active_id = active_id


class StreamHandle:
    """Pausable 1 Hz telemetry stream with operator leak injection.

    Two threads: a clock thread paces simulated seconds and enqueues into a
    bounded buffer (drop-oldest, never blocks), a delivery thread drains the
    buffer into the sink. pause/resume/inject/stop are safe from any thread.
    """

    def __init__(self, cfg: SimConfig, speedup: float, sink: Callable[[SensorReading], None],
                 buffer_size: int = 1000, max_minutes: int | None = None):
        if speedup < 1:
            raise ValueError("speedup must be >= 1")
        validate_config(cfg)
        self._cfg = cfg
        self._speedup = speedup
        self._sink = sink
        self._max_minutes = max_minutes if max_minutes is not None else cfg.duration_minutes
        self._buffer: list[SensorReading] = []
        self._buffer_size = buffer_size
        self._lock = threading.Lock()
        self._wake = threading.Condition(self._lock)
        self._paused = False
        self._stopped = False
        self._dropped = 0
        self._emitted = 0
        self._sim_second = 0
        self._episodes: list[_Episode] = []
        self._next_injection = 0
        self._clock = threading.Thread(target=self._run_clock, daemon=True)
        self._delivery = threading.Thread(target=self._run_delivery, daemon=True)

    def start(self) -> "StreamHandle":
        self._clock.start()
        self._delivery.start()
        return self

    # -- control ---------------------------------------------------------

    def pause(self) -> None:
        with self._lock:
            self._paused = True

    def resume(self) -> None:
        with self._lock:
            self._paused = False
            self._wake.notify_all()

    def stop(self) -> None:
        with self._lock:
            self._stopped = True
            self._wake.notify_all()
        self._clock.join(timeout=5)
        self._delivery.join(timeout=5)

    @property
    def dropped(self) -> int:
        return self._dropped

    @property
    def emitted(self) -> int:
        return self._emitted

    @property
    def running(self) -> bool:
        return self._clock.is_alive()

    @property
    def events(self) -> list[LeakEvent]:
        """Ground truth so far: scheduled plus operator-injected episodes."""
        with self._lock:
            return [ep.event for ep in self._episodes]

    def current_minute(self) -> int:
        with self._lock:
            return self._sim_second // 60

    def inject_leak(self, severity: float, ramp_minutes: int, duration_minutes: int) -> LeakEvent:
        """Schedule an operator-triggered leak starting at the next minute."""
        if not (0 < severity <= 1):
            raise ValueError("severity must be in (0, 1]")
        if ramp_minutes <= 0 or duration_minutes <= 0 or ramp_minutes > duration_minutes:
            raise ValueError("need 0 < ramp_minutes <= duration_minutes")
        with self._lock:
            if self._stopped or not self._clock.is_alive():
                raise RuntimeError("stream is not running")
            minute = self._sim_second // 60
            for ep in self._episodes:
                if minute < ep.end_minute + self._cfg.recovery_minutes:
                    raise InjectionError(ep.event.id)
            onset_minute = minute + 1
            event = LeakEvent(
                id=f"inject-{self._next_injection:03d}",
                rack_id=self._cfg.rack_id,
                onset=self._cfg.start_ns + onset_minute * NS_PER_MINUTE,
                ramp_minutes=ramp_minutes,
                duration_minutes=duration_minutes,
                severity=severity,
                steady_state=self._cfg.steady_state(severity),
            )
            self._next_injection += 1
            self._episodes.append(
                _Episode(
                    event=event,
                    onset_minute=onset_minute,
                    duration=duration_minutes,
                    ramp=ramp_minutes,
                    severity=severity,
                    precursor_minutes=0,  # operator injections have no pre-history
                )
            )
            return event

    # -- internals ---------------------------------------------------------

    def _reading_for_second(self, sim_second: int) -> SensorReading:
        minute, second = divmod(sim_second, 60)
        reading, _ = _compose_reading(
            self._cfg,
            minute,
            self._episodes,
            timestamp=self._cfg.start_ns + minute * NS_PER_MINUTE + second * NS_PER_SECOND,
        )
        return reading

    def _run_clock(self) -> None:
        interval = 1.0 / self._speedup
        next_deadline = time.monotonic()
        while True:
            with self._lock:
                if self._stopped or self._sim_second >= self._max_minutes * 60:
                    self._wake.notify_all()
                    return
                if self._paused:
                    pass
                else:
                    reading = self._reading_for_second(self._sim_second)
                    self._sim_second += 1
                    if len(self._buffer) >= self._buffer_size:
                        self._buffer.pop(0)
                        self._dropped += 1
                    self._buffer.append(reading)
                    self._wake.notify_all()
            next_deadline += interval
            delay = next_deadline - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_deadline = time.monotonic()  # fell behind; do not burst

    def _run_delivery(self) -> None:
        while True:
            with self._lock:
                while not self._buffer and not self._stopped:
                    if self._sim_second >= self._max_minutes * 60 and not self._buffer:
                        return
                    self._wake.wait(timeout=0.1)
                if self._stopped and not self._buffer:
                    return
                reading = self._buffer.pop(0)
            try:
                self._sink(reading)
            finally:
                self._emitted += 1


def stream(cfg: SimConfig, speedup: float, sink: Callable[[SensorReading], None],
           buffer_size: int = 1000, max_minutes: int | None = None) -> StreamHandle:
    """Start streaming readings at 1 reading per simulated second."""
    return StreamHandle(cfg, speedup, sink, buffer_size=buffer_size, max_minutes=max_minutes).start()
