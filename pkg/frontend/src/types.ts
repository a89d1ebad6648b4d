/** Wire types for the /api/v1 surface. Field names mirror the server JSON. */

export interface Reading {
  timestamp_ns: string;
  rack_id: string;
  pressure: number;
  flow: number;
  humidity: number;
  temperature: number;
}

export interface Forecast {
  issued_at_ns: string;
  rack_id: string;
  point_estimate_hours: number;
  eps90_hours: number;
  /** Horizon keys are hour strings, e.g. "2" and "4". */
  prob_within: Record<string, number>;
}

export interface Detection {
  issued_at_ns: string;
  rack_id: string;
  is_leak: boolean;
  vote_score: number;
}

export interface Alert {
  id: string;
  rack_id: string;
  fired_at_ns: string;
  rule: string;
  payload: Record<string, unknown>;
  acknowledged: boolean;
}

export interface LeakEventInfo {
  id: string;
  rack_id: string;
  onset_ns: string;
  ramp_minutes: number;
  duration_minutes: number;
  severity: number;
}

export interface Report {
  counters: Record<string, number>;
  events: LeakEventInfo[];
  alerts: number;
  stream_dropped: number;
  broker_p99_latency_ms: number;
  alert_latency_p95_ms: number;
  integrated_coverage?: number;
  attribution?: Record<string, number>;
  projected_annual_kwh_saved?: number;
}

/** One message off the /api/v1/stream WebSocket. */
export type StreamEvent =
  | { type: "reading"; data: Reading }
  | { type: "forecast"; data: Forecast }
  | { type: "detection"; data: Detection }
  | { type: "alert"; data: Alert };

export const STREAM_KINDS = ["reading", "forecast", "detection", "alert"] as const;

export const CHANNELS = ["pressure", "flow", "humidity", "temperature"] as const;
export type Channel = (typeof CHANNELS)[number];

export const CHANNEL_UNITS: Record<Channel, string> = {
  pressure: "bar",
  flow: "L/min",
  humidity: "%RH",
  temperature: "degC",
};
