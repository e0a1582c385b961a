/**
 * Pure view-model builders: the channel map geometry and coloring, the
 * time-series pane scaling, and marker bands. No DOM access here so
 * the rendering logic is testable headlessly.
 */

import { HemoPoint, RawPoint, UiState, N_CHANNELS } from "./state.js";

/**
 * Diverging color for a dHbO value (uM): negative ends in blue,
 * positive in red, zero is neutral. `span` is the value mapped to full
 * saturation.
 */
export function divergingColor(value: number, span = 1.0): string {
  if (Number.isNaN(value)) return "rgb(58,58,66)";
  const x = Math.max(-1, Math.min(1, value / span));
  const neutral = [232, 230, 227];
  const hot = [214, 69, 65];    // positive dHbO: activation
  const cold = [52, 118, 199];
  const mix = (a: number[], b: number[], k: number) =>
    a.map((v, i) => Math.round(v + (b[i] - v) * k));
  const rgb = x >= 0 ? mix(neutral, hot, x) : mix(neutral, cold, -x);
  return `rgb(${rgb[0]},${rgb[1]},${rgb[2]})`;
}

export interface MapCell {
  channel: number;
  group: number;
  role: "short" | "long";
  x: number;       // normalized 0..1
  y: number;
  color: string;
  value: number;
  pinned: boolean; // group mux override pins this detector
}

// group anchor positions (normalized), schematic head seen from above
const HARNESS_ANCHORS: [number, number][] = [
  [0.20, 0.14], [0.40, 0.08], [0.60, 0.08], [0.80, 0.14], // frontal
  [0.35, 0.45], [0.65, 0.45],                             // parietal
  [0.15, 0.60],                                           // temporal
  [0.50, 0.82],                                           // occipital
];
const HEADBAND_ANCHORS: [number, number][] = Array.from(
  { length: 8 },
  (_, g) => [0.08 + (0.84 * g) / 7, 0.5] as [number, number],
);

// detector offsets within a group: long, short (on-module), long
const DETECTOR_OFFSETS: [number, number][] = [
  [-0.045, 0.06],
  [0.0, 0.0],
  [0.045, 0.06],
];

export function channelMap(state: UiState, span = 1.0): MapCell[] {
  const anchors = state.layoutName === "harness" ? HARNESS_ANCHORS : HEADBAND_ANCHORS;
  const latest = state.latestDhbo();
  const overrides = state.device?.mux_override ?? new Array(8).fill(255);
  const cells: MapCell[] = [];
  for (let c = 0; c < N_CHANNELS; c++) {
    const group = Math.floor(c / 3);
    const det = c % 3;
    const [ax, ay] = anchors[group];
    const [dx, dy] = DETECTOR_OFFSETS[det];
    cells.push({
      channel: c,
      group,
      role: det === 1 ? "short" : "long",
      x: ax + dx,
      y: ay + dy,
      color: divergingColor(latest[c], span),
      value: latest[c],
      pinned: overrides[group] === det,
    });
  }
  return cells;
}

export interface SeriesPane {
  /** polyline in normalized [0,1]x[0,1] coordinates, y up */
  points: [number, number][];
  tMin: number;
  tMax: number;
  yMin: number;
  yMax: number;
}

function pane(ts: number[], ys: number[]): SeriesPane {
  if (ts.length === 0) {
    return { points: [], tMin: 0, tMax: 1, yMin: -1, yMax: 1 };
  }
  const tMin = ts[0];
  const tMax = Math.max(ts[ts.length - 1], tMin + 1e-9);
  let yMin = Math.min(...ys);
  let yMax = Math.max(...ys);
  if (yMax - yMin < 1e-12) {
    yMin -= 1;
    yMax += 1;
  }
  const points: [number, number][] = ts.map((t, i) => [
    (t - tMin) / (tMax - tMin),
    (ys[i] - yMin) / (yMax - yMin),
  ]);
  return { points, tMin, tMax, yMin, yMax };
}

export function hemoPanes(state: UiState, channel: number): {
  dhbo: SeriesPane;
  dhbr: SeriesPane;
} {
  const pts: HemoPoint[] = state.processed[channel].toArray();
  const ts = pts.map((p) => p.t);
  return {
    dhbo: pane(ts, pts.map((p) => p.dhbo)),
    dhbr: pane(ts, pts.map((p) => p.dhbr)),
  };
}

export function rawPane(state: UiState, channel: number): SeriesPane {
  const pts: RawPoint[] = state.raw[channel].toArray();
  return pane(pts.map((p) => p.t), pts.map((p) => p.code));
}

export interface MarkerBand {
  label: string;
  t0: number;
  t1: number;
}

/** Phase bands from session markers over [tMin, tMax]. */
export function markerBands(
  markers: [string, number][],
  tMin: number,
  tMax: number,
): MarkerBand[] {
  const sorted = [...markers].sort((a, b) => a[1] - b[1]);
  const bands: MarkerBand[] = [];
  for (let i = 0; i < sorted.length; i++) {
    const [label, t0] = sorted[i];
    const t1 = i + 1 < sorted.length ? sorted[i + 1][1] : tMax;
    if (t1 < tMin || t0 > tMax) continue;
    bands.push({ label, t0: Math.max(t0, tMin), t1: Math.min(t1, tMax) });
  }
  return bands;
}
