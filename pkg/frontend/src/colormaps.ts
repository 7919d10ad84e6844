/** 256-entry RGB lookup tables, baked from compact anchor lists. */

type Anchor = [number, number, number];

function bake(anchors: Anchor[]): Uint8ClampedArray {
  const lut = new Uint8ClampedArray(256 * 3);
  const n = anchors.length - 1;
  for (let i = 0; i < 256; i++) {
    const t = (i / 255) * n;
    const k = Math.min(Math.floor(t), n - 1);
    const f = t - k;
    for (let c = 0; c < 3; c++) {
      lut[i * 3 + c] = Math.round(
        anchors[k][c] * (1 - f) + anchors[k + 1][c] * f,
      );
    }
  }
  return lut;
}

const VIRIDIS_ANCHORS: Anchor[] = [
  [68, 1, 84], [71, 19, 101], [72, 36, 117], [70, 52, 128],
  [65, 68, 135], [59, 82, 139], [53, 95, 141], [47, 108, 142],
  [42, 120, 142], [37, 132, 142], [33, 145, 140], [30, 156, 137],
  [34, 168, 132], [47, 180, 124], [68, 191, 112], [94, 201, 98],
  [122, 209, 81], [155, 217, 60], [189, 223, 38], [223, 227, 24],
  [253, 231, 37],
];

const TURBO_ANCHORS: Anchor[] = [
  [48, 18, 59], [65, 69, 171], [70, 117, 237], [57, 162, 252],
  [27, 207, 212], [36, 236, 166], [97, 252, 108], [164, 252, 59],
  [216, 226, 25], [248, 186, 57], [254, 135, 44], [239, 90, 17],
  [204, 49, 3], [158, 18, 1], [122, 4, 3],
];

const DIVERGING_ANCHORS: Anchor[] = [
  [5, 48, 97], [33, 102, 172], [67, 147, 195], [146, 197, 222],
  [209, 229, 240], [247, 247, 247], [253, 219, 199], [244, 165, 130],
  [214, 96, 77], [178, 24, 43], [103, 0, 31],
];

const GRAYSCALE_ANCHORS: Anchor[] = [
  [0, 0, 0], [255, 255, 255],
];

export const COLORMAPS: Record<string, Uint8ClampedArray> = {
  viridis: bake(VIRIDIS_ANCHORS),
  turbo: bake(TURBO_ANCHORS),
  "diverging-blue-red": bake(DIVERGING_ANCHORS),
  grayscale: bake(GRAYSCALE_ANCHORS),
};

export const COLORMAP_NAMES = Object.keys(COLORMAPS);

export function colormap(name: string): Uint8ClampedArray {
  const lut = COLORMAPS[name];
  if (!lut) throw new Error(`unknown colormap ${name}`);
  return lut;
}
