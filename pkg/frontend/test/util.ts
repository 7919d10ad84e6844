/** Shared test fixtures: DataResponse buffers and a mock dataset document. */

import type { DatasetDoc } from "../src/types.js";

/** Build a DataResponse wire buffer by hand (independent of any client code). */
export function makeDataResponse(
  level: number,
  rows: number,
  cols: number,
  data: Float32Array,
  opts: { precision?: number; downgraded?: boolean } = {},
): ArrayBuffer {
  const buffer = new ArrayBuffer(64 + data.length * 4);
  const view = new DataView(buffer);
  view.setUint8(0, 0x49); // I
  view.setUint8(1, 0x44); // D
  view.setUint8(2, 0x58); // X
  view.setUint8(3, 0x44); // D
  view.setUint8(4, 1); // version
  view.setUint8(5, level);
  view.setUint8(6, opts.precision ?? 32);
  view.setUint8(7, 1); // dtype float32
  view.setUint8(8, opts.downgraded ? 1 : 0);
  view.setUint8(9, 2); // ndim
  view.setBigUint64(12, BigInt(rows), true);
  view.setBigUint64(20, BigInt(cols), true);
  new Float32Array(buffer, 64).set(data);
  return buffer;
}

/** A 16x16x16 dataset with the round-robin pattern "xyzxyzxyzxyz". */
export function mockDoc(overrides: Partial<DatasetDoc["descriptor"]> = {}): DatasetDoc {
  const pattern = "xyzxyzxyzxyz";
  const levels = [];
  for (let level = 0; level <= pattern.length; level++) {
    const low = pattern.slice(level);
    const strides: Record<string, number> = {};
    for (const a of ["x", "y", "z"]) {
      strides[a] = 2 ** (low.split("").filter((c) => c === a).length);
    }
    levels.push({ level, strides });
  }
  return {
    id: "mock",
    descriptor: {
      id: "mock",
      axes: ["x", "y", "z"],
      extents: { x: 16, y: 16, z: 16 },
      pattern,
      block_bits: 6,
      fields: { value: { fill: -999.0 } },
      timesteps: 4,
      replicas: { lossless: { kind: "lossless-deflate" } },
      ...overrides,
    },
    levels,
    profile: { latency_ms: 0, price_per_gib: 0 },
  };
}

/** Deterministic 16x16 test payload with some fill holes. */
export function goldenPayload(fill = -999.0): Float32Array {
  const data = new Float32Array(16 * 16);
  for (let r = 0; r < 16; r++) {
    for (let c = 0; c < 16; c++) {
      const v = Math.sin(r / 2.5) + Math.cos(c / 4.0) * 0.8 + (r * c) / 256;
      data[r * 16 + c] = (r + c) % 11 === 0 ? fill : v;
    }
  }
  return data;
}
