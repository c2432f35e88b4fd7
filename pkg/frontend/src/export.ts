/**
 * Session to trace file conversion: clock rebase, tie handling, metadata.
 */

import { serializeTrace, type TraceMeta } from "./format.js";
import type { MonitorSession, Technique } from "./monitor.js";

export interface ExportContext {
  userAgent: string;
  /** document.visibilityState at export time; throttled background tabs
   * produce different traces and the consumer deserves to know. */
  visibility: string;
  /** Quantization of the page clock, microseconds. */
  clockFloorUs?: number;
  label?: string;
}

/** The self-post technique watches the page's own loop; the other two watch
 * the browser process the page shares with every other tab. */
export function loopKindFor(technique: Technique): "renderer" | "host" {
  return technique === "postMessage" ? "renderer" : "host";
}

function median(sorted: number[]): number {
  // Lower middle on even lengths, so the hint is always an observed value.
  return sorted[(sorted.length - 1) >> 1] as number;
}

export interface TraceFile {
  content: string;
  meta: TraceMeta;
  timestampsUs: number[];
}

export function buildTraceFile(session: MonitorSession, ctx: ExportContext): TraceFile {
  if (session.count < 2) {
    throw new Error(`need at least 2 measurements to export, got ${session.count}`);
  }

  // Rebase to the first kept measurement and convert to microseconds. A
  // coarse clock can report the same instant twice; strict monotonicity is
  // part of the format, so ties collapse to their first occurrence and the
  // drop count is recorded rather than hidden.
  const originMs = session.buffer[0] as number;
  const timestampsUs: number[] = [];
  let dropped = 0;
  for (let i = 0; i < session.count; i++) {
    const us = ((session.buffer[i] as number) - originMs) * 1000.0;
    if (i > 0 && us <= (timestampsUs[timestampsUs.length - 1] as number)) {
      dropped++;
      continue;
    }
    timestampsUs.push(us);
  }

  const deltas: number[] = [];
  for (let i = 1; i < timestampsUs.length; i++) {
    deltas.push((timestampsUs[i] as number) - (timestampsUs[i - 1] as number));
  }
  deltas.sort((a, b) => a - b);

  const meta: TraceMeta = {
    label: ctx.label ?? session.technique,
    loop_kind: loopKindFor(session.technique),
    resolution_hint: median(deltas),
    source: "harvester",
    seed: "",
    technique: session.technique,
    user_agent: ctx.userAgent,
    capacity: session.capacity,
    clock_floor_us: ctx.clockFloorUs ?? 5,
    visibility: ctx.visibility,
    warmup_ms: session.warmupMs,
    origin_ms: originMs,
    dropped_ties: dropped,
  };

  return { content: serializeTrace(timestampsUs, meta), meta, timestampsUs };
}
