/** Advisory wire format: one JSON object per line, exactly these fields. */

export type Phase = "GREEN" | "AMBER" | "RED";

export type Gating = "ACTIVE" | "CAPPED_BY_LEAD" | "SUPPRESSED_TTC" | "NO_SIGNAL";

export interface AdvisoryRecord {
  t_ms: number;
  d_sig_m: number | null;
  phase: Phase | null;
  t_used_s: number;
  v_lower_mps: number;
  v_upper_mps: number;
  gating: Gating;
  ego_speed_mps: number;
}

export interface DriveCommand {
  t_ms: number;
  throttle: number;
  brake: number;
}

const PHASES = new Set(["GREEN", "AMBER", "RED"]);
const GATINGS = new Set(["ACTIVE", "CAPPED_BY_LEAD", "SUPPRESSED_TTC", "NO_SIGNAL"]);

function finiteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

/**
 * Parse one advisory line. Returns null on anything malformed; the caller
 * keeps its last good state, so a bad line must never throw.
 */
export function parseRecordLine(line: string): AdvisoryRecord | null {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) return null;
  const obj = raw as Record<string, unknown>;

  const { t_ms, d_sig_m, phase, t_used_s, v_lower_mps, v_upper_mps, gating, ego_speed_mps } = obj;
  if (!finiteNumber(t_ms) || t_ms < 0) return null;
  if (d_sig_m !== null && !finiteNumber(d_sig_m)) return null;
  if (phase !== null && !(typeof phase === "string" && PHASES.has(phase))) return null;
  if (!finiteNumber(t_used_s) || t_used_s < 0) return null;
  if (!finiteNumber(v_lower_mps) || v_lower_mps < 0) return null;
  if (!finiteNumber(v_upper_mps) || v_upper_mps < 0) return null;
  if (!(typeof gating === "string" && GATINGS.has(gating))) return null;
  if (!finiteNumber(ego_speed_mps)) return null;
  // bands are ordered except for the NO_SIGNAL placeholder
  if (gating !== "NO_SIGNAL" && v_lower_mps > v_upper_mps) return null;

  return {
    t_ms,
    d_sig_m: d_sig_m as number | null,
    phase: phase as Phase | null,
    t_used_s,
    v_lower_mps,
    v_upper_mps,
    gating: gating as Gating,
    ego_speed_mps,
  };
}

/** Serialize a pedal command for the live session, clamped to [0, 1]. */
export function formatCommand(cmd: DriveCommand): string {
  const clamp = (v: number) => Math.min(1, Math.max(0, v));
  return JSON.stringify({
    t_ms: Math.round(cmd.t_ms),
    throttle: clamp(cmd.throttle),
    brake: clamp(cmd.brake),
  });
}

export const MPH_PER_MPS = 2.2369362920544;

export function toMph(mps: number): number {
  return mps * MPH_PER_MPS;
}
