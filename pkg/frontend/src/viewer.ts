/** Progressive slice rendering with stale-response suppression.
 *
 * Each render() bumps a sequence number; responses that arrive for an older
 * sequence are dropped, and within one sequence levels are fetched in
 * ascending order, so a repaint never shows a coarser level after a finer
 * one for the same view.
 */

import type { ApiClient } from "./api.js";
import { paintSlice } from "./painter.js";
import type { PaintResult } from "./painter.js";
import type { DatasetDoc, SlicePayload, ViewState } from "./types.js";
import { RefusalError } from "./types.js";

export interface PaintEvent {
  level: number;
  payload: SlicePayload;
  paint: PaintResult;
}

export interface RenderCallbacks {
  onPaint: (event: PaintEvent) => void;
  onRefusal?: (message: string, hint: Record<string, number>) => void;
  onNetworkError?: (message: string) => void;
}

export type RenderOutcome = "done" | "superseded" | "refused" | "error";

export class SliceViewer {
  private seq = 0;

  constructor(private client: ApiClient) {}

  /** Cancel any in-flight render without starting a new one. */
  cancel(): void {
    this.seq++;
  }

  async render(
    doc: DatasetDoc,
    view: ViewState,
    callbacks: RenderCallbacks,
  ): Promise<RenderOutcome> {
    const mySeq = ++this.seq;
    const fill = doc.descriptor.fields[view.field]?.fill ?? 0;
    let paintedLevel = -1;
    for (let level = 0; level <= view.level; level++) {
      let payload: SlicePayload;
      try {
        payload = await this.client.fetchSlice(doc, view, level);
      } catch (err) {
        if (mySeq !== this.seq) return "superseded";
        if (err instanceof RefusalError) {
          callbacks.onRefusal?.(err.refusal.message, err.refusal.hint);
          return "refused";
        }
        callbacks.onNetworkError?.(err instanceof Error ? err.message : String(err));
        return "error";
      }
      if (mySeq !== this.seq) return "superseded";
      if (payload.level <= paintedLevel) continue; // never paint coarser again
      if (payload.counts[0] === 0 || payload.counts[1] === 0) continue;
      const paint = paintSlice(
        payload.data,
        payload.counts[0],
        payload.counts[1],
        view.colormap,
        view.rangeMode,
        fill,
      );
      callbacks.onPaint({ level: payload.level, payload, paint });
      paintedLevel = payload.level;
    }
    return "done";
  }
}

/** Largest level whose slice sample count fits the canvas pixel budget. */
export function defaultLevel(
  doc: DatasetDoc,
  sliceAxis: string,
  canvasPixels: number,
): number {
  const axes = doc.descriptor.axes.filter((a) => a !== sliceAxis);
  let best = 0;
  for (const entry of doc.levels) {
    let samples = 1;
    for (const a of axes) {
      samples *= Math.ceil(doc.descriptor.extents[a] / entry.strides[a]);
    }
    if (samples <= canvasPixels) best = entry.level;
  }
  return best;
}
