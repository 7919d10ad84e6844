/** Shared dashboard types mirroring the service's JSON documents. */

export type RangeMode =
  | { kind: "dynamic" }
  | { kind: "user"; lo: number; hi: number };

export interface ViewState {
  datasetId: string;
  field: string;
  timestep: number;
  sliceAxis: string;
  sliceIndex: number;
  level: number;
  colormap: string;
  rangeMode: RangeMode;
  playSpeed: number; // timesteps per second
  /** Selected region over the two slice axes, in sample coordinates. */
  region: Box | null;
}

export type Box = Record<string, [number, number]>;

export interface LevelStrides {
  level: number;
  strides: Record<string, number>;
}

export interface GeoAxis {
  axis: string;
  min: number;
  max: number;
}

export interface GeoPreset {
  name: string;
  lon: [number, number];
  lat: [number, number];
}

export interface GeoMetadata {
  lon: GeoAxis;
  lat: GeoAxis;
  presets?: GeoPreset[];
}

export interface DescriptorDoc {
  id: string;
  axes: string[];
  extents: Record<string, number>;
  pattern: string;
  block_bits: number;
  fields: Record<string, { fill: number }>;
  timesteps: number;
  replicas: Record<string, { kind: string; precision?: number }>;
  geo?: GeoMetadata;
}

export interface DatasetDoc {
  id: string;
  descriptor: DescriptorDoc;
  levels: LevelStrides[];
  profile: { latency_ms: number; price_per_gib: number };
}

export interface SlicePayload {
  level: number;
  precision: number;
  downgraded: boolean;
  /** rows x cols on the level lattice, row-major. */
  counts: [number, number];
  data: Float32Array;
}

export interface RefusalDoc {
  violated: string[];
  feasible_level: number | null;
  hint: Record<string, number>;
  message: string;
}

export class RefusalError extends Error {
  constructor(public refusal: RefusalDoc) {
    super(refusal.message);
    this.name = "RefusalError";
  }
}

export function validateViewState(view: ViewState, doc: DatasetDoc): void {
  const d = doc.descriptor;
  if (!(view.field in d.fields)) throw new Error(`unknown field ${view.field}`);
  if (view.timestep < 0 || view.timestep >= d.timesteps)
    throw new Error(`timestep ${view.timestep} out of range`);
  if (!d.axes.includes(view.sliceAxis))
    throw new Error(`unknown axis ${view.sliceAxis}`);
  const extent = d.extents[view.sliceAxis];
  if (view.sliceIndex < 0 || view.sliceIndex >= extent)
    throw new Error(`slice index ${view.sliceIndex} out of range`);
  if (view.level < 0 || view.level > d.pattern.length)
    throw new Error(`level ${view.level} out of range`);
  if (view.rangeMode.kind === "user" && !(view.rangeMode.lo < view.rangeMode.hi))
    throw new Error("user range needs lo < hi");
}
