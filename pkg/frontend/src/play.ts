/** Timestep playback: advance at a fixed rate, wrap, pause cleanly.
 *
 * The loop only schedules frames; the caller's onFrame kicks off a render
 * whose stale-sequence guard discards any late repaints after a pause or a
 * newer frame.
 */

export class PlayLoop {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private timesteps: number,
    private onFrame: (timestep: number) => void,
  ) {}

  /** Playback needs at least two timesteps. */
  get enabled(): boolean {
    return this.timesteps >= 2;
  }

  get playing(): boolean {
    return this.timer !== null;
  }

  start(fromTimestep: number, stepsPerSecond: number): void {
    if (!this.enabled || this.playing) return;
    if (!(stepsPerSecond > 0)) throw new Error("play speed must be positive");
    let t = fromTimestep;
    this.timer = setInterval(() => {
      t = (t + 1) % this.timesteps;
      this.onFrame(t);
    }, 1000 / stepsPerSecond);
  }

  pause(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
