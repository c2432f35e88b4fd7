/**
 * Real-browser wiring: one LoopDriver per technique, plus file download.
 *
 * postMessage watches the page's own event loop by posting to itself.
 * fetch-nonroutable fires requests at an address that can never resolve and
 * takes the rejection callback as the loop's "done" signal. sharedWorker
 * bounces a message off a worker owned by the browser process. Each driver
 * keeps a single callback slot: the monitor never has two tasks in flight.
 */

import { monitor, type LoopDriver, type MonitorSession, type Technique } from "./monitor.js";
import { buildTraceFile, type TraceFile } from "./export.js";

export class TechniqueUnsupportedError extends Error {
  constructor(technique: Technique, reason: string) {
    super(`${technique} unavailable: ${reason}`);
    this.name = "TechniqueUnsupportedError";
  }
}

const TICK = "loopscope-tick";

function clockNow(): number {
  return performance.now();
}

class PostMessageDriver implements LoopDriver {
  private cb: (() => void) | null = null;
  private readonly listener = (e: MessageEvent): void => {
    if (e.source === window && e.data === TICK && this.cb) {
      const cb = this.cb;
      this.cb = null;
      cb();
    }
  };

  constructor() {
    window.addEventListener("message", this.listener);
  }

  now = clockNow;

  roundTrip(cb: () => void): void {
    this.cb = cb;
    window.postMessage(TICK, "*");
  }

  close(): void {
    window.removeEventListener("message", this.listener);
  }
}

class FetchDriver implements LoopDriver {
  constructor(private readonly target: string) {}

  now = clockNow;

  roundTrip(cb: () => void): void {
    // Resolution and rejection both mean the I/O thread got back to us;
    // with a non-routable target rejection is the expected path.
    fetch(this.target, { mode: "no-cors", cache: "no-store" }).then(
      () => cb(),
      () => cb(),
    );
  }
}

class SharedWorkerDriver implements LoopDriver {
  private cb: (() => void) | null = null;
  private readonly worker: SharedWorker;

  constructor(scriptUrl: string) {
    this.worker = new SharedWorker(scriptUrl);
    this.worker.port.onmessage = () => {
      if (this.cb) {
        const cb = this.cb;
        this.cb = null;
        cb();
      }
    };
    this.worker.port.start();
  }

  now = clockNow;

  roundTrip(cb: () => void): void {
    this.cb = cb;
    this.worker.port.postMessage(0);
  }

  close(): void {
    this.worker.port.close();
  }
}

export interface HarvestOptions {
  /** Target for the fetch technique; http://0/ never routes, which is the
   * point, but some intranets need a different black hole. */
  fetchTarget?: string;
  workerUrl?: string;
  warmupMs?: number;
  label?: string;
}

export function makeDriver(technique: Technique, opts: HarvestOptions = {}): LoopDriver {
  switch (technique) {
    case "postMessage":
      if (typeof window === "undefined" || typeof window.postMessage !== "function") {
        throw new TechniqueUnsupportedError(technique, "no window.postMessage");
      }
      return new PostMessageDriver();
    case "fetch-nonroutable":
      if (typeof fetch !== "function") {
        throw new TechniqueUnsupportedError(technique, "no fetch");
      }
      return new FetchDriver(opts.fetchTarget ?? "http://0/");
    case "sharedWorker":
      if (typeof SharedWorker === "undefined") {
        throw new TechniqueUnsupportedError(technique, "no SharedWorker");
      }
      return new SharedWorkerDriver(opts.workerUrl ?? "worker.js");
  }
}

export async function harvest(
  technique: Technique,
  capacity: number,
  opts: HarvestOptions = {},
): Promise<TraceFile> {
  const driver = makeDriver(technique, opts);
  const session: MonitorSession = await monitor(technique, capacity, driver, {
    warmupMs: opts.warmupMs,
  });
  return buildTraceFile(session, {
    userAgent: navigator.userAgent,
    visibility: document.visibilityState,
    clockFloorUs: 5,
    label: opts.label,
  });
}

export function downloadTrace(filename: string, content: string): void {
  const blob = new Blob([content], { type: "text/plain" });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  a.click();
  URL.revokeObjectURL(url);
}
