/**
 * The measurement loop, separated from any real browser API.
 *
 * A LoopDriver stands for one concrete monitoring technique: it can read the
 * page's clock and push one task through the loop under observation. The
 * monitor itself only enforces the protocol: preallocate the whole timestamp
 * buffer, keep exactly one task in flight, throw away the warm-up phase,
 * stop at capacity. Tests drive it with scripted clocks; the page wires it
 * to the real APIs in browser.ts.
 */

export type Technique = "postMessage" | "fetch-nonroutable" | "sharedWorker";

export const TECHNIQUES: readonly Technique[] = [
  "postMessage",
  "fetch-nonroutable",
  "sharedWorker",
];

export interface LoopDriver {
  /** Milliseconds on the page's performance clock. */
  now(): number;
  /** Send one task through the monitored loop; cb fires on completion. */
  roundTrip(cb: () => void): void;
  /** Release ports or workers once the session is over. */
  close?(): void;
}

export interface MonitorOptions {
  /** Measurements taken this long after the start are the first kept ones. */
  warmupMs?: number;
}

export interface MonitorSession {
  technique: Technique;
  capacity: number;
  /** Preallocated up front; only the first `count` entries are meaningful. */
  buffer: Float64Array;
  count: number;
  startedMs: number;
  warmupMs: number;
  /** Ticks observed and dropped during warm-up. */
  discarded: number;
}

export const DEFAULT_WARMUP_MS = 150;

export function monitor(
  technique: Technique,
  capacity: number,
  driver: LoopDriver,
  options: MonitorOptions = {},
): Promise<MonitorSession> {
  if (!TECHNIQUES.includes(technique)) {
    return Promise.reject(new Error(`unknown technique: ${technique}`));
  }
  if (!Number.isInteger(capacity) || capacity < 1) {
    return Promise.reject(new Error(`capacity must be a positive integer, got ${capacity}`));
  }
  const warmupMs = options.warmupMs ?? DEFAULT_WARMUP_MS;
  if (!(warmupMs >= 0)) {
    return Promise.reject(new Error(`warmupMs must be >= 0, got ${warmupMs}`));
  }

  // The buffer exists before the first task is posted and is never resized:
  // a mid-run allocation would itself occupy the loop being measured.
  const buffer = new Float64Array(capacity);

  return new Promise((resolve) => {
    const startedMs = driver.now();
    let count = 0;
    let discarded = 0;

    const tick = (): void => {
      const t = driver.now();
      if (t - startedMs < warmupMs) {
        discarded++;
      } else {
        buffer[count++] = t;
        if (count >= capacity) {
          driver.close?.();
          resolve({ technique, capacity, buffer, count, startedMs, warmupMs, discarded });
          return;
        }
      }
      driver.roundTrip(tick);
    };

    driver.roundTrip(tick);
  });
}
