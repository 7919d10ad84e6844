/** Region selection: canvas drags and geo presets to sample-space boxes. */

import type { Box, DatasetDoc, GeoPreset, ViewState } from "./types.js";

export interface DragRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

/** Axes shown on the canvas for a view: [vertical(rows), horizontal(cols)]. */
export function sliceAxes(doc: DatasetDoc, view: ViewState): [string, string] {
  const rest = doc.descriptor.axes.filter((a) => a !== view.sliceAxis);
  if (rest.length !== 2) throw new Error("slice views need exactly 2 free axes");
  return [rest[0], rest[1]];
}

/** Current per-axis spans shown on the canvas (region crop or full extent). */
export function visibleSpans(doc: DatasetDoc, view: ViewState): Box {
  const out: Box = {};
  for (const a of sliceAxes(doc, view)) {
    out[a] = view.region?.[a] ?? [0, doc.descriptor.extents[a]];
  }
  return out;
}

/**
 * Map a drag rectangle (canvas pixels) onto the visible sample spans.
 * Returns null for degenerate (zero-area) drags; a full-canvas drag maps
 * back to exactly the visible spans.
 */
export function dragToBox(
  doc: DatasetDoc,
  view: ViewState,
  rect: DragRect,
  canvasWidth: number,
  canvasHeight: number,
): Box | null {
  if (Math.abs(rect.x1 - rect.x0) < 1 || Math.abs(rect.y1 - rect.y0) < 1) {
    return null; // zero-area drag: ignore
  }
  const [vAxis, hAxis] = sliceAxes(doc, view);
  const spans = visibleSpans(doc, view);
  const xs = [rect.x0, rect.x1].sort((a, b) => a - b);
  const ys = [rect.y0, rect.y1].sort((a, b) => a - b);
  const box: Box = {};
  const map = (
    axis: string,
    lo: number,
    hi: number,
    pixels: number,
  ): [number, number] => {
    const [slo, shi] = spans[axis];
    const scale = (shi - slo) / pixels;
    const a = Math.floor(slo + Math.max(0, lo) * scale);
    const b = Math.ceil(slo + Math.min(pixels, hi) * scale);
    return [Math.max(slo, a), Math.min(shi, b)];
  };
  box[hAxis] = map(hAxis, xs[0], xs[1], canvasWidth);
  box[vAxis] = map(vAxis, ys[0], ys[1], canvasHeight);
  if (box[hAxis][0] >= box[hAxis][1] || box[vAxis][0] >= box[vAxis][1]) {
    return null; // degenerate drag: ignore
  }
  return box;
}

export interface NamedBox {
  name: string;
  box: Box;
}

/**
 * Sample-coordinate preset boxes from the descriptor's geo metadata, when
 * present.  Longitude/latitude ranges are mapped linearly onto the extents
 * of their axes.
 */
export function presetsFromGeo(doc: DatasetDoc): NamedBox[] {
  const geo = doc.descriptor.geo;
  if (!geo || !geo.presets) return [];
  const toSamples = (
    axisInfo: { axis: string; min: number; max: number },
    range: [number, number],
  ): [number, number] => {
    const extent = doc.descriptor.extents[axisInfo.axis];
    const scale = extent / (axisInfo.max - axisInfo.min);
    const lo = Math.floor((range[0] - axisInfo.min) * scale);
    const hi = Math.ceil((range[1] - axisInfo.min) * scale);
    return [Math.max(0, lo), Math.min(extent, hi)];
  };
  return geo.presets.map((preset: GeoPreset) => ({
    name: preset.name,
    box: {
      [geo.lon.axis]: toSamples(geo.lon, preset.lon),
      [geo.lat.axis]: toSamples(geo.lat, preset.lat),
    },
  }));
}
