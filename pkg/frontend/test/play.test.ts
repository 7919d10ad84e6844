import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { PlayLoop } from "../src/play.js";

describe("PlayLoop", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("cycles all timesteps in ~timesteps/speed seconds, wrapping", () => {
    const frames: number[] = [];
    const loop = new PlayLoop(4, (t) => frames.push(t));
    loop.start(0, 2); // 2 steps/s over 4 timesteps: full cycle in 2 s
    vi.advanceTimersByTime(1999);
    expect(frames).toEqual([1, 2, 3]);
    vi.advanceTimersByTime(1);
    expect(frames).toEqual([1, 2, 3, 0]); // wrapped
    vi.advanceTimersByTime(2000);
    expect(frames).toEqual([1, 2, 3, 0, 1, 2, 3, 0]);
    loop.pause();
  });

  it("pause stops cleanly with no further frames", () => {
    const frames: number[] = [];
    const loop = new PlayLoop(3, (t) => frames.push(t));
    loop.start(0, 10);
    vi.advanceTimersByTime(250);
    loop.pause();
    const seen = frames.length;
    vi.advanceTimersByTime(1000);
    expect(frames.length).toBe(seen);
    expect(loop.playing).toBe(false);
  });

  it("is disabled for single-timestep datasets", () => {
    const frames: number[] = [];
    const loop = new PlayLoop(1, (t) => frames.push(t));
    expect(loop.enabled).toBe(false);
    loop.start(0, 2);
    vi.advanceTimersByTime(5000);
    expect(frames).toEqual([]);
    expect(loop.playing).toBe(false);
  });

  it("rejects nonpositive speeds", () => {
    const loop = new PlayLoop(4, () => undefined);
    expect(() => loop.start(0, 0)).toThrow(/speed/);
  });
});
