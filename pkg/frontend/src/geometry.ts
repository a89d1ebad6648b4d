/** Pure chart math. DOM-free so the projection logic is unit testable. */

export interface Pt {
  x: number;
  y: number;
}

/** One chart sample: time in milliseconds, value in channel units. */
export interface Sample {
  t: number;
  v: number;
}

/** Forecast band sample: midline plus symmetric interval edges, in hours. */
export interface BandSample {
  t: number;
  mid: number;
  lo: number;
  hi: number;
}

export interface Box {
  width: number;
  height: number;
  padX: number;
  padY: number;
}

/** Nanosecond strings exceed 2^53, so convert through BigInt; exact to the ms. */
export function nsToMs(ns: string): number {
  return Number(BigInt(ns) / 1_000_000n);
}

export function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

/**
 * Linear map from [d0, d1] to [r0, r1]. A degenerate domain pins every
 * input to the middle of the range instead of dividing by zero.
 */
export function linScale(
  d0: number,
  d1: number,
  r0: number,
  r1: number,
): (v: number) => number {
  const span = d1 - d0;
  if (span === 0) {
    const mid = (r0 + r1) / 2;
    return () => mid;
  }
  const k = (r1 - r0) / span;
  return (v: number) => r0 + (v - d0) * k;
}

/** Value extent padded by `frac` on each side; constant series get unit pad. */
export function valueBounds(
  samples: readonly Sample[],
  frac = 0.1,
): { min: number; max: number } {
  if (samples.length === 0) {
    return { min: 0, max: 1 };
  }
  let min = Infinity;
  let max = -Infinity;
  for (const s of samples) {
    if (s.v < min) min = s.v;
    if (s.v > max) max = s.v;
  }
  if (min === max) {
    return { min: min - 1, max: max + 1 };
  }
  const pad = (max - min) * frac;
  return { min: min - pad, max: max + pad };
}

/**
 * Project samples into pixel space. Time runs left to right across
 * [tFrom, tTo]; larger values sit higher on screen (smaller y).
 */
export function stripPoints(
  samples: readonly Sample[],
  tFrom: number,
  tTo: number,
  vMin: number,
  vMax: number,
  box: Box,
): Pt[] {
  const sx = linScale(tFrom, tTo, box.padX, box.width - box.padX);
  const sy = linScale(vMin, vMax, box.height - box.padY, box.padY);
  const out: Pt[] = [];
  for (const s of samples) {
    if (s.t < tFrom || s.t > tTo) continue;
    out.push({ x: sx(s.t), y: sy(s.v) });
  }
  return out;
}

/**
 * Closed polygon for a shaded uncertainty band: the upper edge walked
 * left to right, then the lower edge walked back right to left.
 */
export function bandPolygon(
  band: readonly BandSample[],
  tFrom: number,
  tTo: number,
  vMin: number,
  vMax: number,
  box: Box,
): Pt[] {
  const sx = linScale(tFrom, tTo, box.padX, box.width - box.padX);
  const sy = linScale(vMin, vMax, box.height - box.padY, box.padY);
  const inside = band.filter((b) => b.t >= tFrom && b.t <= tTo);
  const upper = inside.map((b) => ({ x: sx(b.t), y: sy(b.hi) }));
  const lower = inside.map((b) => ({ x: sx(b.t), y: sy(b.lo) })).reverse();
  return upper.concat(lower);
}

/**
 * Needle angle in radians for a 270 degree gauge: p=0 points down-left
 * (135 deg) and p=1 wraps to down-right (405 deg). Inputs are clamped.
 */
export function dialAngle(p: number): number {
  return (0.75 + 1.5 * clamp01(p)) * Math.PI;
}

/** Round tick steps (1/2/5 times a power of ten) covering [min, max]. */
export function ticks(min: number, max: number, count = 4): number[] {
  if (!(max > min) || count < 1) {
    return [min];
  }
  const raw = (max - min) / count;
  const mag = 10 ** Math.floor(Math.log10(raw));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  const out: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}
