/** HTTP client for the volume service: dataset docs, slices, stats. */

import type {
  Box,
  DatasetDoc,
  RefusalDoc,
  SlicePayload,
  ViewState,
} from "./types.js";
import { RefusalError } from "./types.js";

const MAGIC = 0x44584449; // "IDXD" little-endian

export function parseDataResponse(buffer: ArrayBuffer): SlicePayload {
  const view = new DataView(buffer);
  if (buffer.byteLength < 64 || view.getUint32(0, true) !== MAGIC)
    throw new Error("not a DataResponse");
  if (view.getUint8(4) !== 1) throw new Error("unsupported DataResponse version");
  const level = view.getUint8(5);
  const precision = view.getUint8(6);
  const flags = view.getUint8(8);
  const ndim = view.getUint8(9);
  if (ndim !== 2) throw new Error(`expected a 2-d slice, got ${ndim} axes`);
  const rows = Number(view.getBigUint64(12, true));
  const cols = Number(view.getBigUint64(20, true));
  const data = new Float32Array(buffer, 64);
  if (data.length !== rows * cols)
    throw new Error(`payload ${data.length} != ${rows}x${cols}`);
  return {
    level,
    precision,
    downgraded: (flags & 1) !== 0,
    counts: [rows, cols],
    data,
  };
}

export type FetchFn = (url: string) => Promise<Response>;

export class ApiClient {
  constructor(
    public baseUrl: string,
    private fetchFn: FetchFn = (url) => fetch(url),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async listDatasets(): Promise<string[]> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/datasets`);
    if (!resp.ok) throw new Error(`dataset list: HTTP ${resp.status}`);
    return resp.json();
  }

  async datasetDoc(id: string): Promise<DatasetDoc> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/datasets/${id}`);
    if (!resp.ok) throw new Error(`dataset ${id}: HTTP ${resp.status}`);
    return resp.json();
  }

  /** Snap a sample index onto the level lattice of its axis. */
  snapIndex(doc: DatasetDoc, axis: string, index: number, level: number): number {
    const stride = doc.levels[level].strides[axis];
    return Math.floor(index / stride) * stride;
  }

  sliceUrl(doc: DatasetDoc, view: ViewState, level: number): string {
    const params = new URLSearchParams({
      axis: view.sliceAxis,
      index: String(this.snapIndex(doc, view.sliceAxis, view.sliceIndex, level)),
      field: view.field,
      t: String(view.timestep),
      level: String(level),
    });
    if (view.region) {
      for (const [axis, [lo, hi]] of Object.entries(view.region)) {
        if (axis !== view.sliceAxis) params.set(axis, `${lo},${hi}`);
      }
    }
    return `${this.baseUrl}/v1/datasets/${view.datasetId}/slice?${params}`;
  }

  async fetchSlice(
    doc: DatasetDoc,
    view: ViewState,
    level: number,
  ): Promise<SlicePayload> {
    const resp = await this.fetchFn(this.sliceUrl(doc, view, level));
    if (resp.status === 409) {
      throw new RefusalError((await resp.json()) as RefusalDoc);
    }
    if (!resp.ok) throw new Error(`slice: HTTP ${resp.status}`);
    return parseDataResponse(await resp.arrayBuffer());
  }

  async statsInRange(
    view: ViewState,
    box: Box | null,
    lo: number,
    hi: number,
    level: number,
  ): Promise<{ percent: number; counted: number; excluded_fill: number }> {
    const params = new URLSearchParams({
      field: view.field,
      t: String(view.timestep),
      lo: String(lo),
      hi: String(hi),
      level: String(level),
    });
    if (box) {
      for (const [axis, [blo, bhi]] of Object.entries(box)) {
        params.set(axis, `${blo},${bhi}`);
      }
    }
    const resp = await this.fetchFn(
      `${this.baseUrl}/v1/datasets/${view.datasetId}/stats/in_range?${params}`,
    );
    if (resp.status === 409) {
      throw new RefusalError((await resp.json()) as RefusalDoc);
    }
    if (!resp.ok) throw new Error(`stats: HTTP ${resp.status}`);
    return resp.json();
  }
}
