/**
 * Console entry point: boots view state from the REST API, subscribes
 * to the stream WebSocket, and batches all UI updates per animation
 * frame. A page reload reconstructs everything from the API alone.
 */

import { ApiClient } from "./api.js";
import { LiveSocket } from "./ws.js";
import * as st from "./state.js";
import { drawDial, drawForecastBand, drawStrip, type Span } from "./charts.js";
import { nsToMs, type BandSample, type Sample } from "./geometry.js";
import { CHANNELS, CHANNEL_UNITS, type Channel, type StreamEvent } from "./types.js";

const CHANNEL_COLORS: Record<Channel, string> = {
  pressure: "#56b6c2",
  flow: "#61afef",
  humidity: "#c678dd",
  temperature: "#e5c07b",
};

const api = new ApiClient();
let state = st.initialState();
const queue: StreamEvent[] = [];
let dirty = true;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

const banner = el<HTMLDivElement>("banner");
const liveBtn = el<HTMLButtonElement>("live-btn");
const zoomSel = el<HTMLSelectElement>("zoom-select");
const rackSel = el<HTMLSelectElement>("rack-select");
const counterEl = el<HTMLSpanElement>("event-counter");
const pendingEl = el<HTMLSpanElement>("pending-count");
const detLed = el<HTMLSpanElement>("det-led");
const detText = el<HTMLSpanElement>("det-text");
const feedEl = el<HTMLUListElement>("alert-feed");
const form = el<HTMLFormElement>("scenario-form");
const formMsg = el<HTMLParagraphElement>("scenario-msg");
const reportEl = el<HTMLDivElement>("report-stats");
const stripCanvases = Object.fromEntries(
  CHANNELS.map((ch) => [ch, el<HTMLCanvasElement>(`chart-${ch}`)]),
) as Record<Channel, HTMLCanvasElement>;
const bandCanvas = el<HTMLCanvasElement>("chart-forecast");
const dial2 = el<HTMLCanvasElement>("dial-2h");
const dial4 = el<HTMLCanvasElement>("dial-4h");

function mutate(next: st.ConsoleState): void {
  if (next !== state) {
    state = next;
    dirty = true;
  }
}

// -- boot and reconnect gap fill ---------------------------------------------

/** Newest known simulation timestamp, for anchoring REST windows. */
function anchorNs(): bigint {
  let anchor = 0n;
  const last = state.readings[state.readings.length - 1];
  if (last !== undefined) anchor = BigInt(last.timestamp_ns);
  const fc = st.latestForecast(state);
  if (fc !== null && BigInt(fc.issued_at_ns) > anchor) anchor = BigInt(fc.issued_at_ns);
  for (const a of state.alerts) {
    if (BigInt(a.fired_at_ns) > anchor) anchor = BigInt(a.fired_at_ns);
  }
  for (const ev of state.events) {
    const end = BigInt(ev.onset_ns) + BigInt(ev.duration_minutes) * 60_000_000_000n;
    if (end > anchor) anchor = end;
  }
  return anchor;
}

async function boot(): Promise<void> {
  const [report, alerts, forecast] = await Promise.all([
    api.report(),
    api.alerts(),
    api.latestForecast(),
  ]);
  mutate(st.hydrate(state, { report, alerts, forecast }));
  let from: string | undefined;
  const anchor = anchorNs();
  if (anchor > 0n) {
    const back = BigInt(state.maxBufferMinutes) * 60_000_000_000n;
    from = String(anchor > back ? anchor - back : 0n);
  }
  const readings = await api.readings(undefined, from, undefined);
  mutate(st.mergeReadings(state, readings));
}

async function fillGap(): Promise<void> {
  const last = state.readings[state.readings.length - 1];
  const [alerts, forecast] = await Promise.all([api.alerts(), api.latestForecast()]);
  mutate(st.hydrate(state, { alerts, forecast }));
  const rows = await api.readings(
    state.rack || undefined,
    last !== undefined ? last.timestamp_ns : undefined,
    undefined,
  );
  mutate(st.mergeReadings(state, rows));
}

// -- websocket ---------------------------------------------------------------

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/api/v1/stream`;
}

let wasClosed = false;
const socket = new LiveSocket(wsUrl(), {
  onEvent: (ev) => {
    queue.push(ev);
  },
  onStatus: (status) => {
    mutate(st.setConnection(state, status));
    if (status === "closed") {
      wasClosed = true;
    } else if (status === "open" && wasClosed) {
      wasClosed = false;
      // Backfill whatever the stream skipped while disconnected.
      void fillGap();
    }
  },
});

// -- render ------------------------------------------------------------------

function channelSamples(ch: Channel): Sample[] {
  return state.readings
    .filter((r) => state.rack === "" || r.rack_id === state.rack)
    .map((r) => ({ t: nsToMs(r.timestamp_ns), v: r[ch] }));
}

function forecastBand(): BandSample[] {
  return state.forecasts.map((f) => {
    const mid = f.point_estimate_hours;
    return {
      t: nsToMs(f.issued_at_ns),
      mid,
      lo: Math.max(mid - f.eps90_hours, 0),
      hi: mid + f.eps90_hours,
    };
  });
}

function renderBanner(): void {
  banner.dataset.state = state.connection;
  banner.textContent =
    state.connection === "open"
      ? "live"
      : state.connection === "connecting"
        ? "connecting..."
        : "connection lost, reconnecting...";
}

function renderControls(): void {
  liveBtn.textContent = state.live ? "Pause" : "Resume";
  counterEl.textContent = String(state.eventCounter);
  pendingEl.textContent = state.live ? "" : `(${state.pending.length} buffered)`;
  if (rackSel.options.length !== state.racks.length) {
    rackSel.replaceChildren(
      ...state.racks.map((r) => new Option(r, r, false, r === state.rack)),
    );
  }
}

function renderDetector(): void {
  const det = st.latestDetection(state);
  if (det === null) {
    detLed.dataset.state = "idle";
    detText.textContent = "no votes yet";
    return;
  }
  detLed.dataset.state = det.is_leak ? "leak" : "clear";
  detText.textContent = `vote ${det.vote_score.toFixed(2)} ${det.is_leak ? "LEAK" : "clear"}`;
}

function renderFeed(): void {
  const newest = state.alerts.slice(-50).reverse();
  feedEl.replaceChildren(
    ...newest.map((a) => {
      const li = document.createElement("li");
      li.dataset.rule = a.rule;
      li.dataset.acked = String(a.acknowledged);
      const when = new Date(nsToMs(a.fired_at_ns)).toISOString().slice(11, 19);
      const label = document.createElement("span");
      label.textContent = `${when} ${a.rule} [${a.rack_id}]`;
      li.appendChild(label);
      if (!a.acknowledged) {
        const btn = document.createElement("button");
        btn.textContent = "ack";
        btn.dataset.alertId = a.id;
        li.appendChild(btn);
      }
      return li;
    }),
  );
}

function renderReport(): void {
  const r = state.report;
  if (r === null) {
    reportEl.textContent = "";
    return;
  }
  const parts = [
    `alerts ${r.alerts}`,
    `dropped ${r.stream_dropped}`,
    `p99 transport ${r.broker_p99_latency_ms.toFixed(2)} ms`,
  ];
  if (r.integrated_coverage !== undefined) {
    parts.push(`coverage ${(r.integrated_coverage * 100).toFixed(1)}%`);
  }
  if (r.projected_annual_kwh_saved !== undefined) {
    parts.push(`${Math.round(r.projected_annual_kwh_saved)} kWh/yr projected`);
  }
  reportEl.textContent = parts.join("  |  ");
}

function render(): void {
  renderBanner();
  renderControls();
  renderDetector();
  renderFeed();
  renderReport();
  if (formMsg.textContent !== (state.scenarioError ?? "")) {
    formMsg.textContent = state.scenarioError ?? "";
  }
  const span: Span | null = st.visibleSpan(state);
  if (span === null) {
    return;
  }
  for (const ch of CHANNELS) {
    drawStrip(
      stripCanvases[ch],
      channelSamples(ch),
      span,
      state.events,
      state.alerts,
      CHANNEL_COLORS[ch],
    );
  }
  drawForecastBand(bandCanvas, forecastBand(), span, state.events);
  const fc = st.latestForecast(state);
  drawDial(dial2, fc === null ? null : (fc.prob_within["2"] ?? null), "leak within 2 h");
  drawDial(dial4, fc === null ? null : (fc.prob_within["4"] ?? null), "leak within 4 h");
}

function frame(): void {
  if (queue.length > 0) {
    let next = state;
    for (const ev of queue.splice(0)) {
      next = st.applyEvent(next, ev);
    }
    mutate(next);
  }
  if (dirty) {
    dirty = false;
    render();
  }
  requestAnimationFrame(frame);
}

// -- controls ----------------------------------------------------------------

liveBtn.addEventListener("click", () => {
  mutate(st.setLive(state, !state.live));
});

zoomSel.addEventListener("change", () => {
  mutate(st.setZoom(state, Number(zoomSel.value)));
});

rackSel.addEventListener("change", () => {
  mutate(st.setRack(state, rackSel.value));
});

feedEl.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const id = target.dataset.alertId;
  if (id === undefined) {
    return;
  }
  api
    .ack(id)
    .then((alert) => mutate(st.replaceAlert(state, alert)))
    .catch(() => {
      // A failed ack leaves the button in place for retry.
    });
});

form.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const severity = Number(el<HTMLInputElement>("sev-input").value);
  const ramp = Number(el<HTMLInputElement>("ramp-input").value);
  const duration = Number(el<HTMLInputElement>("dur-input").value);
  // Zero-severity injections are rejected client-side before any request.
  if (!(severity > 0)) {
    mutate(st.setScenarioError(state, "severity must be greater than zero"));
    return;
  }
  mutate(st.setScenarioError(state, null));
  api
    .injectLeak({ severity, ramp_minutes: ramp, duration_minutes: duration })
    .then((result) => {
      if (result.ok) {
        mutate(st.setScenarioError(st.upsertEvent(state, result.event), null));
      } else {
        mutate(st.setScenarioError(state, result.error));
      }
    });
});

window.addEventListener("resize", () => {
  dirty = true;
});

// -- start -------------------------------------------------------------------

boot()
  .catch(() => {
    // The stream still populates the view if the initial fetch fails.
  })
  .finally(() => {
    socket.connect();
    requestAnimationFrame(frame);
  });
