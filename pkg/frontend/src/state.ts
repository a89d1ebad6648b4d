/**
 * Console view state and its reducer.
 *
 * Every transition returns a fresh state object so the render loop can
 * compare references, and so the transitions stay trivially testable
 * without a DOM. The one contract that matters most: pausing freezes
 * what the charts show, but the stream keeps buffering underneath and
 * the event counter keeps ticking.
 */

import type {
  Alert,
  Detection,
  Forecast,
  LeakEventInfo,
  Reading,
  Report,
  StreamEvent,
} from "./types.js";
import { nsToMs } from "./geometry.js";

export type Connection = "connecting" | "open" | "closed";

export interface ConsoleState {
  rack: string;
  racks: string[];
  zoomMinutes: number;
  live: boolean;
  readings: Reading[];
  forecasts: Forecast[];
  detections: Detection[];
  alerts: Alert[];
  events: LeakEventInfo[];
  /** Total stream messages seen, including those buffered while paused. */
  eventCounter: number;
  /** Messages held back while paused, drained in order on resume. */
  pending: StreamEvent[];
  connection: Connection;
  scenarioError: string | null;
  report: Report | null;
  maxBufferMinutes: number;
}

/** Paused-buffer cap; oldest entries drop first, matching the server hub. */
export const MAX_PENDING = 10_000;
const MAX_FORECASTS = 4_096;
const MAX_DETECTIONS = 4_096;

export function initialState(zoomMinutes = 60, maxBufferMinutes = 240): ConsoleState {
  return {
    rack: "",
    racks: [],
    zoomMinutes,
    live: true,
    readings: [],
    forecasts: [],
    detections: [],
    alerts: [],
    events: [],
    eventCounter: 0,
    pending: [],
    connection: "connecting",
    scenarioError: null,
    report: null,
    maxBufferMinutes,
  };
}

function byTimestamp(a: Reading, b: Reading): number {
  return nsToMs(a.timestamp_ns) - nsToMs(b.timestamp_ns);
}

function trimReadings(readings: Reading[], maxBufferMinutes: number): Reading[] {
  const last = readings[readings.length - 1];
  if (last === undefined) {
    return readings;
  }
  const floor = nsToMs(last.timestamp_ns) - maxBufferMinutes * 60_000;
  let i = 0;
  while (i < readings.length && nsToMs(readings[i].timestamp_ns) < floor) {
    i += 1;
  }
  return i === 0 ? readings : readings.slice(i);
}

function upsertById<T extends { id: string }>(items: T[], item: T): T[] {
  const idx = items.findIndex((x) => x.id === item.id);
  if (idx < 0) {
    return [...items, item];
  }
  const out = items.slice();
  out[idx] = item;
  return out;
}

/** Seed the state from REST responses; used at boot and after reconnects. */
export function hydrate(
  state: ConsoleState,
  data: {
    readings?: Reading[];
    forecast?: Forecast | null;
    alerts?: Alert[];
    report?: Report | null;
  },
): ConsoleState {
  let next = { ...state };
  if (data.report) {
    next.report = data.report;
    for (const ev of data.report.events) {
      next.events = upsertById(next.events, ev);
    }
  }
  if (data.alerts) {
    for (const a of data.alerts) {
      next.alerts = upsertById(next.alerts, a);
    }
  }
  if (data.forecast) {
    next = integrate(next, { type: "forecast", data: data.forecast });
  }
  if (data.readings && data.readings.length > 0) {
    next = mergeReadings(next, data.readings);
  }
  return next;
}

/** Insert REST-fetched readings, deduplicating against what is on screen. */
export function mergeReadings(state: ConsoleState, rows: Reading[]): ConsoleState {
  if (rows.length === 0) {
    return state;
  }
  const seen = new Set(state.readings.map((r) => r.timestamp_ns));
  const fresh = rows.filter((r) => !seen.has(r.timestamp_ns));
  if (fresh.length === 0) {
    return state;
  }
  const merged = [...state.readings, ...fresh].sort(byTimestamp);
  const rack = state.rack || fresh[0].rack_id;
  const racks = state.racks.includes(rack) ? state.racks : [...state.racks, rack];
  return {
    ...state,
    rack,
    racks,
    readings: trimReadings(merged, state.maxBufferMinutes),
  };
}

function integrate(state: ConsoleState, ev: StreamEvent): ConsoleState {
  switch (ev.type) {
    case "reading": {
      const last = state.readings[state.readings.length - 1];
      // Out-of-order samples would fold the time axis; drop them.
      if (last !== undefined && ev.data.timestamp_ns <= last.timestamp_ns) {
        return state;
      }
      const rack = state.rack || ev.data.rack_id;
      const racks = state.racks.includes(ev.data.rack_id)
        ? state.racks
        : [...state.racks, ev.data.rack_id];
      return {
        ...state,
        rack,
        racks,
        readings: trimReadings([...state.readings, ev.data], state.maxBufferMinutes),
      };
    }
    case "forecast":
      return {
        ...state,
        forecasts: [...state.forecasts, ev.data].slice(-MAX_FORECASTS),
      };
    case "detection":
      return {
        ...state,
        detections: [...state.detections, ev.data].slice(-MAX_DETECTIONS),
      };
    case "alert":
      return { ...state, alerts: upsertById(state.alerts, ev.data) };
  }
}

/**
 * Apply one stream message. Live states integrate immediately; paused
 * states buffer the message but still advance the counter so the
 * operator can see traffic accumulating behind the freeze.
 */
export function applyEvent(state: ConsoleState, ev: StreamEvent): ConsoleState {
  const counted = { ...state, eventCounter: state.eventCounter + 1 };
  if (!state.live) {
    const pending = [...state.pending, ev];
    if (pending.length > MAX_PENDING) {
      pending.splice(0, pending.length - MAX_PENDING);
    }
    return { ...counted, pending };
  }
  return integrate(counted, ev);
}

/** Toggle live mode. Resuming drains the paused buffer in arrival order. */
export function setLive(state: ConsoleState, live: boolean): ConsoleState {
  if (live === state.live) {
    return state;
  }
  if (!live) {
    return { ...state, live: false };
  }
  let next: ConsoleState = { ...state, live: true, pending: [] };
  for (const ev of state.pending) {
    next = integrate(next, ev);
  }
  return next;
}

export function setZoom(state: ConsoleState, zoomMinutes: number): ConsoleState {
  return { ...state, zoomMinutes };
}

export function setRack(state: ConsoleState, rack: string): ConsoleState {
  return { ...state, rack };
}

export function setConnection(state: ConsoleState, connection: Connection): ConsoleState {
  return { ...state, connection };
}

export function setScenarioError(state: ConsoleState, msg: string | null): ConsoleState {
  return { ...state, scenarioError: msg };
}

/** Record an injected leak immediately; the server copy later replaces it. */
export function upsertEvent(state: ConsoleState, ev: LeakEventInfo): ConsoleState {
  return { ...state, events: upsertById(state.events, ev) };
}

export function replaceAlert(state: ConsoleState, alert: Alert): ConsoleState {
  return { ...state, alerts: upsertById(state.alerts, alert) };
}

export function latestForecast(state: ConsoleState): Forecast | null {
  return state.forecasts[state.forecasts.length - 1] ?? null;
}

export function latestDetection(state: ConsoleState): Detection | null {
  return state.detections[state.detections.length - 1] ?? null;
}

/** Visible time window in ms, anchored to the newest buffered reading. */
export function visibleSpan(state: ConsoleState): { from: number; to: number } | null {
  const last = state.readings[state.readings.length - 1];
  if (last === undefined) {
    return null;
  }
  const to = nsToMs(last.timestamp_ns);
  return { from: to - state.zoomMinutes * 60_000, to };
}
