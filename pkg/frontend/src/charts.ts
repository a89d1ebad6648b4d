/** Canvas renderers. All projection math lives in geometry.ts. */

import {
  bandPolygon,
  dialAngle,
  linScale,
  nsToMs,
  stripPoints,
  ticks,
  valueBounds,
  type BandSample,
  type Box,
  type Sample,
} from "./geometry.js";
import type { Alert, LeakEventInfo } from "./types.js";

export interface Span {
  from: number;
  to: number;
}

const PAD_X = 44;
const PAD_Y = 16;

const COLORS = {
  grid: "#2a3142",
  axis: "#8b93a7",
  marker: "rgba(224, 82, 82, 0.18)",
  markerEdge: "rgba(224, 82, 82, 0.85)",
  alert: "rgba(240, 180, 60, 0.9)",
  band: "rgba(86, 156, 214, 0.22)",
  mid: "#569cd6",
  text: "#c7cdd9",
  dim: "#6b7284",
};

function setup(canvas: HTMLCanvasElement): { ctx: CanvasRenderingContext2D; box: Box } | null {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return null;
  }
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth;
  const h = canvas.clientHeight;
  if (canvas.width !== Math.round(w * dpr) || canvas.height !== Math.round(h * dpr)) {
    canvas.width = Math.round(w * dpr);
    canvas.height = Math.round(h * dpr);
  }
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, w, h);
  return { ctx, box: { width: w, height: h, padX: PAD_X, padY: PAD_Y } };
}

function timeLabel(ms: number): string {
  const d = new Date(ms);
  const hh = String(d.getUTCHours()).padStart(2, "0");
  const mm = String(d.getUTCMinutes()).padStart(2, "0");
  return `${hh}:${mm}`;
}

function drawTimeGrid(ctx: CanvasRenderingContext2D, span: Span, box: Box): void {
  const sx = linScale(span.from, span.to, box.padX, box.width - box.padX);
  ctx.strokeStyle = COLORS.grid;
  ctx.fillStyle = COLORS.dim;
  ctx.font = "10px monospace";
  ctx.textAlign = "center";
  ctx.lineWidth = 1;
  for (const t of ticks(span.from, span.to, 6)) {
    const x = sx(t);
    ctx.beginPath();
    ctx.moveTo(x, box.padY);
    ctx.lineTo(x, box.height - box.padY);
    ctx.stroke();
    ctx.fillText(timeLabel(t), x, box.height - 3);
  }
}

function drawValueGrid(
  ctx: CanvasRenderingContext2D,
  vMin: number,
  vMax: number,
  box: Box,
): void {
  const sy = linScale(vMin, vMax, box.height - box.padY, box.padY);
  ctx.strokeStyle = COLORS.grid;
  ctx.fillStyle = COLORS.dim;
  ctx.font = "10px monospace";
  ctx.textAlign = "right";
  for (const v of ticks(vMin, vMax, 3)) {
    const y = sy(v);
    ctx.beginPath();
    ctx.moveTo(box.padX, y);
    ctx.lineTo(box.width - box.padX, y);
    ctx.stroke();
    ctx.fillText(v.toPrecision(3), box.padX - 4, y + 3);
  }
}

function drawEventMarkers(
  ctx: CanvasRenderingContext2D,
  events: readonly LeakEventInfo[],
  span: Span,
  box: Box,
): void {
  const sx = linScale(span.from, span.to, box.padX, box.width - box.padX);
  for (const ev of events) {
    const onset = nsToMs(ev.onset_ns);
    const end = onset + ev.duration_minutes * 60_000;
    if (end < span.from || onset > span.to) continue;
    const x0 = Math.max(sx(onset), box.padX);
    const x1 = Math.min(sx(end), box.width - box.padX);
    ctx.fillStyle = COLORS.marker;
    ctx.fillRect(x0, box.padY, Math.max(x1 - x0, 2), box.height - 2 * box.padY);
    ctx.strokeStyle = COLORS.markerEdge;
    ctx.beginPath();
    ctx.moveTo(x0, box.padY);
    ctx.lineTo(x0, box.height - box.padY);
    ctx.stroke();
  }
}

function drawAlertTicks(
  ctx: CanvasRenderingContext2D,
  alerts: readonly Alert[],
  span: Span,
  box: Box,
): void {
  const sx = linScale(span.from, span.to, box.padX, box.width - box.padX);
  ctx.strokeStyle = COLORS.alert;
  ctx.lineWidth = 1.5;
  for (const a of alerts) {
    const t = nsToMs(a.fired_at_ns);
    if (t < span.from || t > span.to) continue;
    const x = sx(t);
    ctx.beginPath();
    ctx.moveTo(x, box.padY);
    ctx.lineTo(x, box.padY + 8);
    ctx.stroke();
  }
}

/** One sensor channel strip: grid, leak markers, alert ticks, trace. */
export function drawStrip(
  canvas: HTMLCanvasElement,
  samples: readonly Sample[],
  span: Span,
  events: readonly LeakEventInfo[],
  alerts: readonly Alert[],
  color: string,
): void {
  const prepared = setup(canvas);
  if (prepared === null) {
    return;
  }
  const { ctx, box } = prepared;
  const visible = samples.filter((s) => s.t >= span.from && s.t <= span.to);
  const { min, max } = valueBounds(visible);
  drawTimeGrid(ctx, span, box);
  drawValueGrid(ctx, min, max, box);
  drawEventMarkers(ctx, events, span, box);
  drawAlertTicks(ctx, alerts, span, box);
  const pts = stripPoints(visible, span.from, span.to, min, max, box);
  if (pts.length === 0) {
    return;
  }
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.4;
  ctx.beginPath();
  ctx.moveTo(pts[0].x, pts[0].y);
  for (let i = 1; i < pts.length; i += 1) {
    ctx.lineTo(pts[i].x, pts[i].y);
  }
  ctx.stroke();
  const last = visible[visible.length - 1];
  ctx.fillStyle = COLORS.text;
  ctx.font = "12px monospace";
  ctx.textAlign = "left";
  ctx.fillText(last.v.toFixed(3), box.width - box.padX + 4, pts[pts.length - 1].y + 4);
}

/** Forecast strip: shaded point-estimate +/- eps90 band with midline. */
export function drawForecastBand(
  canvas: HTMLCanvasElement,
  band: readonly BandSample[],
  span: Span,
  events: readonly LeakEventInfo[],
): void {
  const prepared = setup(canvas);
  if (prepared === null) {
    return;
  }
  const { ctx, box } = prepared;
  const vMin = 0;
  const vMax = 8.5;
  drawTimeGrid(ctx, span, box);
  drawValueGrid(ctx, vMin, vMax, box);
  drawEventMarkers(ctx, events, span, box);
  const poly = bandPolygon(band, span.from, span.to, vMin, vMax, box);
  if (poly.length >= 4) {
    ctx.fillStyle = COLORS.band;
    ctx.beginPath();
    ctx.moveTo(poly[0].x, poly[0].y);
    for (let i = 1; i < poly.length; i += 1) {
      ctx.lineTo(poly[i].x, poly[i].y);
    }
    ctx.closePath();
    ctx.fill();
  }
  const mids = band
    .filter((b) => b.t >= span.from && b.t <= span.to)
    .map((b) => ({ t: b.t, v: b.mid }));
  const pts = stripPoints(mids, span.from, span.to, vMin, vMax, box);
  if (pts.length === 0) {
    return;
  }
  ctx.strokeStyle = COLORS.mid;
  ctx.lineWidth = 1.6;
  ctx.beginPath();
  ctx.moveTo(pts[0].x, pts[0].y);
  for (let i = 1; i < pts.length; i += 1) {
    ctx.lineTo(pts[i].x, pts[i].y);
  }
  ctx.stroke();
}

/** 270 degree probability gauge with the value printed in the middle. */
export function drawDial(canvas: HTMLCanvasElement, p: number | null, label: string): void {
  const prepared = setup(canvas);
  if (prepared === null) {
    return;
  }
  const { ctx, box } = prepared;
  const cx = box.width / 2;
  const cy = box.height / 2 + 6;
  const r = Math.min(box.width, box.height) / 2 - 14;
  ctx.lineWidth = 7;
  ctx.lineCap = "round";
  ctx.strokeStyle = COLORS.grid;
  ctx.beginPath();
  ctx.arc(cx, cy, r, dialAngle(0), dialAngle(1));
  ctx.stroke();
  if (p !== null) {
    const hue = 120 - 120 * Math.min(Math.max(p, 0), 1);
    ctx.strokeStyle = `hsl(${hue}, 70%, 55%)`;
    ctx.beginPath();
    ctx.arc(cx, cy, r, dialAngle(0), dialAngle(p));
    ctx.stroke();
  }
  ctx.fillStyle = COLORS.text;
  ctx.font = "bold 16px monospace";
  ctx.textAlign = "center";
  ctx.fillText(p === null ? "--" : `${(p * 100).toFixed(0)}%`, cx, cy + 6);
  ctx.fillStyle = COLORS.dim;
  ctx.font = "10px sans-serif";
  ctx.fillText(label, cx, box.height - 4);
}
