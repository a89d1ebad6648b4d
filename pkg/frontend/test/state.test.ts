import { describe, expect, it } from "vitest";

import * as st from "../src/state.js";
import type { Alert, Forecast, Reading, Report, StreamEvent } from "../src/types.js";

const NS_PER_MIN = 60_000_000_000n;

function reading(minute: number, rack = "rack-a1"): Reading {
  return {
    timestamp_ns: String(BigInt(minute) * NS_PER_MIN),
    rack_id: rack,
    pressure: 1.8,
    flow: 120,
    humidity: 42,
    temperature: 27,
  };
}

function readingEvent(minute: number): StreamEvent {
  return { type: "reading", data: reading(minute) };
}

function alert(id: string, minute: number, acked = false): Alert {
  return {
    id,
    rack_id: "rack-a1",
    fired_at_ns: String(BigInt(minute) * NS_PER_MIN),
    rule: "forecast_probability",
    payload: {},
    acknowledged: acked,
  };
}

function forecast(minute: number): Forecast {
  return {
    issued_at_ns: String(BigInt(minute) * NS_PER_MIN),
    rack_id: "rack-a1",
    point_estimate_hours: 3.5,
    eps90_hours: 0.8,
    prob_within: { "2": 0.1, "4": 0.6 },
  };
}

describe("live integration", () => {
  it("appends readings and advances the counter", () => {
    let s = st.initialState();
    s = st.applyEvent(s, readingEvent(1));
    s = st.applyEvent(s, readingEvent(2));
    expect(s.readings).toHaveLength(2);
    expect(s.eventCounter).toBe(2);
    expect(s.rack).toBe("rack-a1");
    expect(s.racks).toEqual(["rack-a1"]);
  });

  it("drops out-of-order readings to keep the time axis monotone", () => {
    let s = st.initialState();
    s = st.applyEvent(s, readingEvent(5));
    s = st.applyEvent(s, readingEvent(3));
    expect(s.readings).toHaveLength(1);
    expect(s.readings[0].timestamp_ns).toBe(reading(5).timestamp_ns);
    expect(s.eventCounter).toBe(2);
  });

  it("trims readings older than the buffer window", () => {
    let s = st.initialState(60, 240);
    s = st.applyEvent(s, readingEvent(0));
    s = st.applyEvent(s, readingEvent(100));
    s = st.applyEvent(s, readingEvent(400));
    const kept = s.readings.map((r) => r.timestamp_ns);
    expect(kept).toEqual([reading(400).timestamp_ns]);
  });

  it("caps forecast history", () => {
    let s = st.initialState();
    for (let i = 0; i < 4200; i += 1) {
      s = st.applyEvent(s, { type: "forecast", data: forecast(i) });
    }
    expect(s.forecasts.length).toBe(4096);
    expect(st.latestForecast(s)?.issued_at_ns).toBe(forecast(4199).issued_at_ns);
  });

  it("upserts alerts by id", () => {
    let s = st.initialState();
    s = st.applyEvent(s, { type: "alert", data: alert("a1", 10) });
    s = st.applyEvent(s, { type: "alert", data: alert("a1", 10, true) });
    expect(s.alerts).toHaveLength(1);
    expect(s.alerts[0].acknowledged).toBe(true);
  });
});

describe("paused buffering", () => {
  it("freezes chart data but keeps counting and buffering", () => {
    let s = st.initialState();
    s = st.applyEvent(s, readingEvent(1));
    s = st.setLive(s, false);
    s = st.applyEvent(s, readingEvent(2));
    s = st.applyEvent(s, { type: "alert", data: alert("a1", 2) });
    expect(s.readings).toHaveLength(1);
    expect(s.alerts).toHaveLength(0);
    expect(s.pending).toHaveLength(2);
    expect(s.eventCounter).toBe(3);
  });

  it("drains the buffer in arrival order on resume", () => {
    let s = st.initialState();
    s = st.setLive(s, false);
    s = st.applyEvent(s, readingEvent(1));
    s = st.applyEvent(s, readingEvent(2));
    s = st.applyEvent(s, readingEvent(3));
    s = st.setLive(s, true);
    expect(s.pending).toHaveLength(0);
    expect(s.readings.map((r) => r.timestamp_ns)).toEqual(
      [1, 2, 3].map((m) => reading(m).timestamp_ns),
    );
    expect(s.eventCounter).toBe(3);
  });

  it("drops the oldest buffered entries past the cap", () => {
    let s = st.initialState();
    s = st.setLive(s, false);
    for (let i = 0; i < st.MAX_PENDING + 5; i += 1) {
      s = st.applyEvent(s, readingEvent(i));
    }
    expect(s.pending).toHaveLength(st.MAX_PENDING);
    const first = s.pending[0];
    expect(first.type).toBe("reading");
    expect((first.data as Reading).timestamp_ns).toBe(reading(5).timestamp_ns);
  });

  it("pausing twice is a no-op", () => {
    let s = st.initialState();
    const paused = st.setLive(s, false);
    expect(st.setLive(paused, false)).toBe(paused);
    s = st.setLive(paused, true);
    expect(st.setLive(s, true)).toBe(s);
  });
});

describe("hydrate and merge", () => {
  const report: Report = {
    counters: {},
    events: [
      {
        id: "ev-1",
        rack_id: "rack-a1",
        onset_ns: String(100n * NS_PER_MIN),
        ramp_minutes: 30,
        duration_minutes: 120,
        severity: 0.8,
      },
    ],
    alerts: 1,
    stream_dropped: 0,
    broker_p99_latency_ms: 0.4,
    alert_latency_p95_ms: 12,
  };

  it("reconstructs the view from REST payloads alone", () => {
    let s = st.initialState();
    s = st.hydrate(s, {
      report,
      alerts: [alert("a1", 110)],
      forecast: forecast(115),
      readings: [reading(99), reading(98), reading(100)],
    });
    expect(s.events).toHaveLength(1);
    expect(s.alerts).toHaveLength(1);
    expect(st.latestForecast(s)).not.toBeNull();
    expect(s.readings.map((r) => r.timestamp_ns)).toEqual(
      [98, 99, 100].map((m) => reading(m).timestamp_ns),
    );
    expect(s.rack).toBe("rack-a1");
  });

  it("merge deduplicates against buffered readings", () => {
    let s = st.initialState();
    s = st.applyEvent(s, readingEvent(1));
    s = st.applyEvent(s, readingEvent(2));
    s = st.mergeReadings(s, [reading(2), reading(3)]);
    expect(s.readings.map((r) => r.timestamp_ns)).toEqual(
      [1, 2, 3].map((m) => reading(m).timestamp_ns),
    );
  });

  it("hydrate leaves prior alerts updated, not duplicated", () => {
    let s = st.initialState();
    s = st.hydrate(s, { alerts: [alert("a1", 5)] });
    s = st.hydrate(s, { alerts: [alert("a1", 5, true), alert("a2", 6)] });
    expect(s.alerts).toHaveLength(2);
    expect(s.alerts[0].acknowledged).toBe(true);
  });
});

describe("scenario markers and view controls", () => {
  it("records an optimistic event and replaces it by id", () => {
    let s = st.initialState();
    const optimistic = {
      id: "inj-1",
      rack_id: "rack-a1",
      onset_ns: String(50n * NS_PER_MIN),
      ramp_minutes: 10,
      duration_minutes: 60,
      severity: 1.0,
    };
    s = st.upsertEvent(s, optimistic);
    s = st.upsertEvent(s, { ...optimistic, duration_minutes: 65 });
    expect(s.events).toHaveLength(1);
    expect(s.events[0].duration_minutes).toBe(65);
  });

  it("tracks zoom, rack, connection, and inline scenario errors", () => {
    let s = st.initialState();
    s = st.setZoom(s, 15);
    s = st.setRack(s, "rack-b2");
    s = st.setConnection(s, "closed");
    s = st.setScenarioError(s, "overlaps an active event");
    expect(s.zoomMinutes).toBe(15);
    expect(s.rack).toBe("rack-b2");
    expect(s.connection).toBe("closed");
    expect(s.scenarioError).toBe("overlaps an active event");
    expect(st.setScenarioError(s, null).scenarioError).toBeNull();
  });

  it("computes the visible span from the newest reading", () => {
    let s = st.initialState(60);
    expect(st.visibleSpan(s)).toBeNull();
    s = st.applyEvent(s, readingEvent(120));
    const span = st.visibleSpan(s);
    expect(span).not.toBeNull();
    expect(span!.to - span!.from).toBe(60 * 60_000);
    expect(span!.to).toBe(120 * 60_000);
  });
});
