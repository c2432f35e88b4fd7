import { describe, expect, it } from "vitest";

import { DEFAULT_WARMUP_MS, monitor } from "../src/monitor.js";
import { FakeLoop } from "./fakes.js";

describe("monitor", () => {
  it("fills a preallocated buffer to capacity and stops", async () => {
    const loop = new FakeLoop({ stepsMs: [50] });
    const session = await monitor("postMessage", 10, loop);
    expect(session.buffer.length).toBe(10);
    expect(session.count).toBe(10);
    expect(loop.closed).toBe(true);
  });

  it("discards the warm-up phase", async () => {
    // Ticks land at 50, 100, 150, ...; the first two fall inside the
    // default 150 ms warm-up window.
    const loop = new FakeLoop({ stepsMs: [50] });
    const session = await monitor("postMessage", 4, loop);
    expect(session.warmupMs).toBe(DEFAULT_WARMUP_MS);
    expect(session.discarded).toBe(2);
    expect(Array.from(session.buffer.subarray(0, 4))).toEqual([150, 200, 250, 300]);
  });

  it("respects a custom warm-up", async () => {
    const loop = new FakeLoop({ stepsMs: [10] });
    const session = await monitor("postMessage", 3, loop, { warmupMs: 0 });
    expect(session.discarded).toBe(0);
    expect(session.buffer[0]).toBe(10);
  });

  it("keeps exactly one task in flight", async () => {
    const loop = new FakeLoop({ stepsMs: [0.025], jitterMs: 0.002, seed: 7 });
    await monitor("postMessage", 500, loop, { warmupMs: 1 });
    expect(loop.maxPending).toBe(1);
  });

  it("records timestamps in clock order", async () => {
    const loop = new FakeLoop({ stepsMs: [0.025, 0.03, 0.5], jitterMs: 0.001, seed: 3 });
    const session = await monitor("fetch-nonroutable", 200, loop, { warmupMs: 2 });
    for (let i = 1; i < session.count; i++) {
      expect(session.buffer[i]).toBeGreaterThan(session.buffer[i - 1] as number);
    }
  });

  it("rejects bad arguments", async () => {
    const loop = new FakeLoop({ stepsMs: [1] });
    await expect(monitor("postMessage", 0, loop)).rejects.toThrow(/positive integer/);
    await expect(monitor("postMessage", 2.5, loop)).rejects.toThrow(/positive integer/);
    // @ts-expect-error deliberately wrong technique string
    await expect(monitor("setTimeout", 5, loop)).rejects.toThrow(/unknown technique/);
    await expect(monitor("postMessage", 5, loop, { warmupMs: -1 })).rejects.toThrow(/warmupMs/);
  });
});
