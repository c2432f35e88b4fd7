import type { LoopDriver } from "../src/monitor.js";

export interface FakeLoopOptions {
  /** Per-turn clock advance in ms; cycled when the run is longer. */
  stepsMs: number[];
  /** Uniform jitter half-width added to every step, ms. */
  jitterMs?: number;
  seed?: number;
  /** Quantize now() readings to this grid, emulating a coarse clock. */
  quantizeMs?: number;
  /** Extra blocking time injected every `bumpEvery` turns, ms. */
  bumpEvery?: number;
  bumpMs?: number;
}

/**
 * Deterministic stand-in for a browser loop: each round trip advances a
 * scripted clock and runs the callback on the microtask queue. Also verifies
 * the exclusivity contract by counting tasks in flight.
 */
export class FakeLoop implements LoopDriver {
  t = 0;
  turn = 0;
  pending = 0;
  maxPending = 0;
  closed = false;
  private state: number;
  private readonly opts: Required<FakeLoopOptions>;

  constructor(options: FakeLoopOptions) {
    this.opts = {
      jitterMs: 0,
      seed: 1,
      quantizeMs: 0,
      bumpEvery: 0,
      bumpMs: 0,
      ...options,
    };
    this.state = this.opts.seed >>> 0;
  }

  private rand01(): number {
    this.state = (Math.imul(1664525, this.state) + 1013904223) >>> 0;
    return this.state / 2 ** 32;
  }

  now(): number {
    const q = this.opts.quantizeMs;
    return q > 0 ? Math.floor(this.t / q) * q : this.t;
  }

  roundTrip(cb: () => void): void {
    this.pending++;
    if (this.pending > this.maxPending) {
      this.maxPending = this.pending;
    }
    queueMicrotask(() => {
      const steps = this.opts.stepsMs;
      let dt = steps[this.turn % steps.length] as number;
      if (this.opts.jitterMs > 0) {
        dt += (this.rand01() * 2 - 1) * this.opts.jitterMs;
      }
      if (this.opts.bumpEvery > 0 && this.turn > 0 && this.turn % this.opts.bumpEvery === 0) {
        dt += this.opts.bumpMs;
      }
      this.turn++;
      this.t += dt;
      this.pending--;
      cb();
    });
  }

  close(): void {
    this.closed = true;
  }
}
