export { TRACE_HEADER, fmtNumber, serializeMeta, serializeTrace } from "./format.js";
export type { MetaValue, TraceMeta } from "./format.js";
export {
  DEFAULT_WARMUP_MS,
  TECHNIQUES,
  monitor,
} from "./monitor.js";
export type { LoopDriver, MonitorOptions, MonitorSession, Technique } from "./monitor.js";
export { buildTraceFile, loopKindFor } from "./export.js";
export type { ExportContext, TraceFile } from "./export.js";
export {
  TechniqueUnsupportedError,
  downloadTrace,
  harvest,
  makeDriver,
} from "./browser.js";
export type { HarvestOptions } from "./browser.js";
