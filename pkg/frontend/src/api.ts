/**
 * Typed client for the /api/v1 REST surface.
 *
 * `fetch` is injectable for tests. Scenario injection never throws:
 * it folds transport and HTTP failures into a result object so the
 * form can render the message inline.
 */

import type { Alert, Forecast, LeakEventInfo, Reading, Report } from "./types.js";

export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<ResponseLike>;

export interface ScenarioRequest {
  severity: number;
  ramp_minutes: number;
  duration_minutes: number;
}

export type ScenarioResult =
  | { ok: true; event: LeakEventInfo }
  | { ok: false; error: string };

/** Flatten a FastAPI error body ({detail: string | [{msg}...]}) to text. */
export function errorDetail(payload: unknown, fallback: string): string {
  if (typeof payload === "object" && payload !== null && "detail" in payload) {
    const detail = (payload as { detail: unknown }).detail;
    if (typeof detail === "string") {
      return detail;
    }
    if (Array.isArray(detail)) {
      const msgs = detail
        .map((d) => (typeof d === "object" && d !== null && "msg" in d
          ? String((d as { msg: unknown }).msg)
          : String(d)))
        .filter((m) => m.length > 0);
      if (msgs.length > 0) {
        return msgs.join("; ");
      }
    }
  }
  return fallback;
}

export class ApiClient {
  constructor(
    private readonly base: string = "/api/v1",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) {
      throw new Error(`GET ${path} failed with status ${res.status}`);
    }
    return res.json();
  }

  async readings(rack?: string, fromNs?: string, toNs?: string): Promise<Reading[]> {
    const params = new URLSearchParams();
    if (rack !== undefined) params.set("rack", rack);
    if (fromNs !== undefined) params.set("from", fromNs);
    if (toNs !== undefined) params.set("to", toNs);
    const qs = params.toString();
    return (await this.getJson(`/readings${qs ? `?${qs}` : ""}`)) as Reading[];
  }

  /** Latest forecast, or null before the first one is issued. */
  async latestForecast(): Promise<Forecast | null> {
    const res = await this.fetchFn(`${this.base}/forecast/latest`);
    if (res.status === 404) {
      return null;
    }
    if (!res.ok) {
      throw new Error(`GET /forecast/latest failed with status ${res.status}`);
    }
    return (await res.json()) as Forecast;
  }

  async alerts(sinceNs?: string): Promise<Alert[]> {
    const qs = sinceNs !== undefined ? `?since=${encodeURIComponent(sinceNs)}` : "";
    return (await this.getJson(`/alerts${qs}`)) as Alert[];
  }

  async ack(alertId: string): Promise<Alert> {
    const res = await this.fetchFn(
      `${this.base}/alerts/${encodeURIComponent(alertId)}/ack`,
      { method: "POST" },
    );
    if (!res.ok) {
      throw new Error(`ack failed with status ${res.status}`);
    }
    return (await res.json()) as Alert;
  }

  async report(): Promise<Report> {
    return (await this.getJson("/report")) as Report;
  }

  async injectLeak(body: ScenarioRequest): Promise<ScenarioResult> {
    let res: ResponseLike;
    try {
      res = await this.fetchFn(`${this.base}/scenario/leak`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (exc) {
      return { ok: false, error: exc instanceof Error ? exc.message : String(exc) };
    }
    let payload: unknown = null;
    try {
      payload = await res.json();
    } catch {
      // Non-JSON error bodies fall through to the status fallback.
    }
    if (!res.ok) {
      return {
        ok: false,
        error: errorDetail(payload, `injection failed with status ${res.status}`),
      };
    }
    return { ok: true, event: payload as LeakEventInfo };
  }
}
