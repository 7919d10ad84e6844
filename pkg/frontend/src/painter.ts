/** Pure payload -> RGBA rasterization; pixels depend only on
 * (payload, colormap, range mode, fill value). */

import { colormap } from "./colormaps.js";
import type { RangeMode } from "./types.js";

export interface PaintResult {
  rgba: Uint8ClampedArray; // rows*cols*4
  rows: number;
  cols: number;
  /** value range actually used for the mapping (after dynamic resolution) */
  lo: number;
  hi: number;
}

/** Resolve the mapping range: dynamic mode scans non-fill finite samples. */
export function resolveRange(
  data: Float32Array,
  mode: RangeMode,
  fill: number,
): [number, number] {
  if (mode.kind === "user") return [mode.lo, mode.hi];
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < data.length; i++) {
    const v = data[i];
    if (!Number.isFinite(v) || v === fill) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === Infinity) return [0, 1]; // all fill: nothing will be painted
  return [lo, hi];
}

export function paintSlice(
  data: Float32Array,
  rows: number,
  cols: number,
  colormapName: string,
  mode: RangeMode,
  fill: number,
): PaintResult {
  if (data.length !== rows * cols)
    throw new Error(`payload is ${data.length} samples, grid wants ${rows * cols}`);
  const lut = colormap(colormapName);
  const [lo, hi] = resolveRange(data, mode, fill);
  const span = hi - lo;
  const rgba = new Uint8ClampedArray(rows * cols * 4);
  for (let i = 0; i < data.length; i++) {
    const v = data[i];
    if (!Number.isFinite(v) || v === fill) continue; // transparent
    // out-of-range values clamp to the end colors
    let t = span > 0 ? (v - lo) / span : 0.5;
    t = t < 0 ? 0 : t > 1 ? 1 : t;
    const idx = Math.round(t * 255) * 3;
    const o = i * 4;
    rgba[o] = lut[idx];
    rgba[o + 1] = lut[idx + 1];
    rgba[o + 2] = lut[idx + 2];
    rgba[o + 3] = 255;
  }
  return { rgba, rows, cols, lo, hi };
}
