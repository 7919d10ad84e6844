/** DOM wiring: controls on the left, progressive slice canvas on the right. */

import { ApiClient } from "./api.js";
import { COLORMAP_NAMES } from "./colormaps.js";
import { PlayLoop } from "./play.js";
import { dragToBox, presetsFromGeo, sliceAxes, visibleSpans } from "./region.js";
import type { DatasetDoc, ViewState } from "./types.js";
import { SliceViewer, defaultLevel } from "./viewer.js";

const CANVAS_SIZE = 512;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function option(value: string): HTMLOptionElement {
  const o = document.createElement("option");
  o.value = o.textContent = value;
  return o;
}

class App {
  client: ApiClient;
  viewer: SliceViewer;
  doc: DatasetDoc | null = null;
  view: ViewState | null = null;
  play: PlayLoop | null = null;

  canvas = el<HTMLCanvasElement>("slice-canvas");
  banner = el<HTMLDivElement>("banner");
  statsOut = el<HTMLSpanElement>("stats-out");
  levelOut = el<HTMLSpanElement>("level-out");
  rangeOut = el<HTMLSpanElement>("range-out");

  datasetSel = el<HTMLSelectElement>("dataset");
  fieldSel = el<HTMLSelectElement>("field");
  timeSlider = el<HTMLInputElement>("timestep");
  timeOut = el<HTMLSpanElement>("timestep-out");
  axisSel = el<HTMLSelectElement>("axis");
  indexSlider = el<HTMLInputElement>("slice-index");
  indexOut = el<HTMLSpanElement>("slice-index-out");
  levelSlider = el<HTMLInputElement>("level");
  colormapSel = el<HTMLSelectElement>("colormap");
  rangeModeSel = el<HTMLSelectElement>("range-mode");
  rangeLo = el<HTMLInputElement>("range-lo");
  rangeHi = el<HTMLInputElement>("range-hi");
  playBtn = el<HTMLButtonElement>("play");
  speedInput = el<HTMLInputElement>("speed");
  resetBtn = el<HTMLButtonElement>("reset-region");
  statsBtn = el<HTMLButtonElement>("stats-btn");
  statsLo = el<HTMLInputElement>("stats-lo");
  statsHi = el<HTMLInputElement>("stats-hi");
  presetsDiv = el<HTMLDivElement>("presets");

  constructor(baseUrl: string) {
    this.client = new ApiClient(baseUrl);
    this.viewer = new SliceViewer(this.client);
    for (const name of COLORMAP_NAMES) this.colormapSel.append(option(name));
    this.wire();
  }

  async start(): Promise<void> {
    let ids: string[];
    try {
      ids = await this.client.listDatasets();
    } catch (err) {
      this.showBanner(`cannot reach ${this.client.baseUrl}: ${err}`, true);
      return;
    }
    if (!ids.length) {
      this.showBanner("server has no datasets", false);
      return;
    }
    this.datasetSel.replaceChildren(...ids.map(option));
    await this.loadDataset(ids[0]);
  }

  async loadDataset(id: string): Promise<void> {
    this.play?.pause();
    const doc = await this.client.datasetDoc(id);
    this.doc = doc;
    const d = doc.descriptor;
    const fields = Object.keys(d.fields);
    this.fieldSel.replaceChildren(...fields.map(option));
    this.axisSel.replaceChildren(...d.axes.map(option));
    const axis = d.axes[d.axes.length - 1];
    this.axisSel.value = axis;
    const level = defaultLevel(doc, axis, CANVAS_SIZE * CANVAS_SIZE);
    this.view = {
      datasetId: id,
      field: fields[0],
      timestep: 0,
      sliceAxis: axis,
      sliceIndex: 0,
      level,
      colormap: this.colormapSel.value || "viridis",
      rangeMode: { kind: "dynamic" },
      playSpeed: 2,
      region: null,
    };
    this.timeSlider.max = String(d.timesteps - 1);
    this.timeSlider.value = "0";
    this.levelSlider.max = String(d.pattern.length);
    this.levelSlider.value = String(level);
    this.indexSlider.max = String(d.extents[axis] - 1);
    this.indexSlider.value = "0";
    this.play = new PlayLoop(d.timesteps, (t) => {
      if (!this.view) return;
      this.view.timestep = t;
      this.timeSlider.value = String(t);
      this.timeOut.textContent = String(t);
      void this.rerender();
    });
    this.playBtn.disabled = !this.play.enabled;
    this.renderPresets();
    await this.rerender();
  }

  renderPresets(): void {
    this.presetsDiv.replaceChildren();
    if (!this.doc) return;
    for (const preset of presetsFromGeo(this.doc)) {
      const btn = document.createElement("button");
      btn.textContent = preset.name;
      btn.addEventListener("click", () => {
        if (!this.view) return;
        this.view.region = preset.box;
        void this.rerender();
      });
      this.presetsDiv.append(btn);
    }
  }

  showBanner(message: string, retry: boolean): void {
    this.banner.replaceChildren();
    this.banner.textContent = message;
    this.banner.hidden = false;
    if (retry) {
      const btn = document.createElement("button");
      btn.textContent = "retry";
      btn.addEventListener("click", () => void this.rerender());
      this.banner.append(" ", btn);
    }
  }

  async rerender(): Promise<void> {
    if (!this.doc || !this.view) return;
    this.banner.hidden = true;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const outcome = await this.viewer.render(this.doc, this.view, {
      onPaint: ({ level, paint }) => {
        const image = new ImageData(
          new Uint8ClampedArray(paint.rgba), paint.cols, paint.rows,
        );
        const buffer = document.createElement("canvas");
        buffer.width = paint.cols;
        buffer.height = paint.rows;
        buffer.getContext("2d")?.putImageData(image, 0, 0);
        ctx.imageSmoothingEnabled = false;
        ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
        // payload rows = vertical axis, cols = horizontal
        ctx.drawImage(buffer, 0, 0, this.canvas.width, this.canvas.height);
        this.levelOut.textContent = `level ${level}/${this.view?.level}`;
        this.rangeOut.textContent =
          `[${paint.lo.toPrecision(4)}, ${paint.hi.toPrecision(4)}]`;
      },
      onRefusal: (message, hint) => {
        this.showBanner(
          `refused: ${message} — relax to ${JSON.stringify(hint)}`,
          false,
        );
      },
      onNetworkError: (message) => this.showBanner(`network error: ${message}`, true),
    });
    if (outcome === "done" && this.view.region) void this.updateStats();
  }

  async updateStats(): Promise<void> {
    if (!this.doc || !this.view) return;
    const lo = parseFloat(this.statsLo.value);
    const hi = parseFloat(this.statsHi.value);
    if (!Number.isFinite(lo) || !Number.isFinite(hi) || lo > hi) return;
    try {
      const stats = await this.client.statsInRange(
        this.view, this.view.region, lo, hi, this.view.level,
      );
      this.statsOut.textContent =
        `${stats.percent.toFixed(1)}% of selection in [${lo}, ${hi}] ` +
        `(${stats.counted} voxels, ${stats.excluded_fill} fill excluded)`;
    } catch (err) {
      this.statsOut.textContent = `stats unavailable: ${err}`;
    }
  }

  wire(): void {
    this.datasetSel.addEventListener("change", () =>
      void this.loadDataset(this.datasetSel.value),
    );
    this.fieldSel.addEventListener("change", () => {
      if (this.view) {
        this.view.field = this.fieldSel.value;
        void this.rerender();
      }
    });
    this.timeSlider.addEventListener("input", () => {
      if (this.view) {
        this.view.timestep = Number(this.timeSlider.value);
        this.timeOut.textContent = this.timeSlider.value;
        void this.rerender();
      }
    });
    this.axisSel.addEventListener("change", () => {
      if (this.view && this.doc) {
        this.view.sliceAxis = this.axisSel.value;
        this.view.sliceIndex = 0;
        this.view.region = null;
        this.indexSlider.max = String(
          this.doc.descriptor.extents[this.axisSel.value] - 1,
        );
        this.indexSlider.value = "0";
        this.indexOut.textContent = "0";
        void this.rerender();
      }
    });
    this.indexSlider.addEventListener("input", () => {
      if (this.view) {
        this.view.sliceIndex = Number(this.indexSlider.value);
        this.indexOut.textContent = this.indexSlider.value;
        void this.rerender();
      }
    });
    this.levelSlider.addEventListener("input", () => {
      if (this.view) {
        this.view.level = Number(this.levelSlider.value);
        void this.rerender();
      }
    });
    this.colormapSel.addEventListener("change", () => {
      if (this.view) {
        this.view.colormap = this.colormapSel.value;
        void this.rerender();
      }
    });
    const applyRange = () => {
      if (!this.view) return;
      if (this.rangeModeSel.value === "dynamic") {
        this.view.rangeMode = { kind: "dynamic" };
      } else {
        const lo = parseFloat(this.rangeLo.value);
        const hi = parseFloat(this.rangeHi.value);
        if (Number.isFinite(lo) && Number.isFinite(hi) && lo < hi) {
          this.view.rangeMode = { kind: "user", lo, hi };
        }
      }
      void this.rerender();
    };
    this.rangeModeSel.addEventListener("change", applyRange);
    this.rangeLo.addEventListener("change", applyRange);
    this.rangeHi.addEventListener("change", applyRange);
    this.playBtn.addEventListener("click", () => {
      if (!this.play || !this.view) return;
      if (this.play.playing) {
        this.play.pause();
        this.viewer.cancel(); // no late repaints of stale frames
        this.playBtn.textContent = "play";
      } else {
        const speed = parseFloat(this.speedInput.value) || 2;
        this.view.playSpeed = speed;
        this.play.start(this.view.timestep, speed);
        this.playBtn.textContent = "pause";
      }
    });
    this.resetBtn.addEventListener("click", () => {
      if (this.view) {
        this.view.region = null;
        this.statsOut.textContent = "";
        void this.rerender();
      }
    });
    this.statsBtn.addEventListener("click", () => void this.updateStats());
    this.wireDrag();
  }

  wireDrag(): void {
    let start: { x: number; y: number } | null = null;
    const pos = (event: MouseEvent) => {
      const rect = this.canvas.getBoundingClientRect();
      return {
        x: ((event.clientX - rect.left) / rect.width) * this.canvas.width,
        y: ((event.clientY - rect.top) / rect.height) * this.canvas.height,
      };
    };
    this.canvas.addEventListener("mousedown", (event) => {
      start = pos(event);
    });
    this.canvas.addEventListener("mouseup", (event) => {
      if (!start || !this.doc || !this.view) return;
      const end = pos(event);
      const box = dragToBox(
        this.doc,
        this.view,
        { x0: start.x, y0: start.y, x1: end.x, y1: end.y },
        this.canvas.width,
        this.canvas.height,
      );
      start = null;
      if (!box) return; // degenerate drag
      const spans = visibleSpans(this.doc, this.view);
      const [v, h] = sliceAxes(this.doc, this.view);
      const unchanged =
        box[v][0] === spans[v][0] && box[v][1] === spans[v][1] &&
        box[h][0] === spans[h][0] && box[h][1] === spans[h][1];
      if (!unchanged) {
        this.view.region = box;
        void this.rerender();
      }
    });
  }
}

const params = new URLSearchParams(window.location.search);
const api = params.get("api") ?? window.location.origin;
const app = new App(api);
void app.start();
