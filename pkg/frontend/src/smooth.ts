/**
 * Display hysteresis for the band overlay. A recomputed band that moved by
 * less than JITTER_MPS on both edges within HOLD_MS of the last displayed
 * change keeps the previous numbers on screen, so the overlay does not
 * flicker at the 10 Hz tick. Only the display is smoothed; anything logged
 * or replayed carries the raw values.
 */

import { AdvisoryRecord } from "./wire.js";

export const JITTER_MPS = 0.25;
export const HOLD_MS = 1000;

export class BandSmoother {
  private shown: AdvisoryRecord | null = null;
  private lastChangeTms = 0;

  push(record: AdvisoryRecord): AdvisoryRecord {
    const prev = this.shown;
    const displayable = record.gating === "ACTIVE" || record.gating === "CAPPED_BY_LEAD";

    // smoothing applies only between two displayable bands of the same
    // gating and phase; any state change must show instantly
    const comparable =
      prev !== null &&
      displayable &&
      (prev.gating === "ACTIVE" || prev.gating === "CAPPED_BY_LEAD") &&
      prev.gating === record.gating &&
      prev.phase === record.phase;

    if (comparable && prev !== null) {
      const small =
        Math.abs(record.v_lower_mps - prev.v_lower_mps) < JITTER_MPS &&
        Math.abs(record.v_upper_mps - prev.v_upper_mps) < JITTER_MPS;
      if (small && record.t_ms - this.lastChangeTms < HOLD_MS) {
        const held = { ...record, v_lower_mps: prev.v_lower_mps, v_upper_mps: prev.v_upper_mps };
        this.shown = held;
        return held;
      }
    }

    if (
      prev === null ||
      prev.v_lower_mps !== record.v_lower_mps ||
      prev.v_upper_mps !== record.v_upper_mps ||
      prev.gating !== record.gating
    ) {
      this.lastChangeTms = record.t_ms;
    }
    this.shown = record;
    return record;
  }
}
