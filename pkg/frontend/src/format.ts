/**
 * Trace file writer.
 *
 * The output must match the Python pipeline's writer byte for byte, so the
 * exported files can be checked into either repo and compared with a plain
 * diff. The rules it follows:
 *
 *   line 1: `#loopscope-trace v1`
 *   line 2: metadata as compact JSON, keys sorted, non-ASCII escaped
 *   then:   one timestamp per line, decimal microseconds, strictly increasing
 *
 * Numbers use the shortest decimal that round-trips, and integral values are
 * written without a decimal point. Both engines produce identical shortest
 * representations for plain decimals, so the writer restricts timestamps to
 * the range where plain decimals are guaranteed (no exponent notation on
 * either side): zero, or 0.001 up to 1e15 microseconds.
 */

export const TRACE_HEADER = "#loopscope-trace v1";

export type MetaValue = string | number | boolean;
export type TraceMeta = Record<string, MetaValue>;

export function fmtNumber(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`trace values must be finite, got ${x}`);
  }
  if (x < 0) {
    throw new Error(`trace values must be non-negative, got ${x}`);
  }
  if (x !== 0 && (x < 0.001 || x >= 1e15)) {
    // Outside this range one of the two writers switches to exponent
    // notation and byte equality is lost. No physical timestamp gets here.
    throw new Error(`trace value ${x} outside the canonical encoding range`);
  }
  return String(x);
}

/** JSON string escaping to the lowest common denominator: everything past
 * ASCII becomes a \u escape (lowercase hex), matching Python's default. */
function asciiJsonString(s: string): string {
  return JSON.stringify(s).replace(
    /[\u007f-\uffff]/g,
    (ch) => "\\u" + ch.charCodeAt(0).toString(16).padStart(4, "0"),
  );
}

function metaValueJson(value: MetaValue): string {
  if (typeof value === "string") {
    return asciiJsonString(value);
  }
  if (typeof value === "number") {
    if (!Number.isFinite(value)) {
      throw new Error(`meta numbers must be finite, got ${value}`);
    }
    return JSON.stringify(value);
  }
  return value ? "true" : "false";
}

export function serializeMeta(meta: TraceMeta): string {
  const keys = Object.keys(meta).sort();
  const parts = keys.map((k) => `${asciiJsonString(k)}:${metaValueJson(meta[k] as MetaValue)}`);
  return `{${parts.join(",")}}`;
}

export function serializeTrace(timestampsUs: ArrayLike<number>, meta: TraceMeta): string {
  const lines = [TRACE_HEADER, serializeMeta(meta)];
  let prev = -Infinity;
  for (let i = 0; i < timestampsUs.length; i++) {
    const t = timestampsUs[i] as number;
    if (!(t > prev)) {
      throw new Error(`timestamps must be strictly increasing, got ${t} after ${prev} at index ${i}`);
    }
    prev = t;
    lines.push(fmtNumber(t));
  }
  return lines.join("\n") + "\n";
}
