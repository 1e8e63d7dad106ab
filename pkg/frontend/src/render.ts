/**
 * Pure mapping from an advisory record to what the driver sees.
 *
 * The rules, in order of priority:
 *  - suppressed advisory shows a warning banner and hides every piece of
 *    signal information (no phase icon, no band, no countdown);
 *  - the countdown appears only while the truck is at a full stop on red;
 *  - the band overlay appears for ACTIVE and CAPPED_BY_LEAD, the lead icon
 *    only for CAPPED_BY_LEAD;
 *  - NO_SIGNAL shows plain speedometer and limit, nothing else.
 */

import { AdvisoryRecord, Phase, toMph } from "./wire.js";

export const FULL_STOP_MPS = 0.1;

export interface EgoState {
  speedMps: number;
  /** posted limit for the display; the wire record does not carry it */
  speedLimitMps?: number;
}

export interface SpeedDisplay {
  mph: number;
  mps: number;
}

export interface DviViewState {
  phaseIcon: Phase | null;
  countdownS: number | null;
  speedometer: SpeedDisplay;
  speedLimit: SpeedDisplay | null;
  band: { lowerMps: number; upperMps: number } | null;
  leadIcon: boolean;
  warningBanner: boolean;
  /** set by the view tracker when showing retained state after a bad record */
  stale: boolean;
}

function display(mps: number): SpeedDisplay {
  return { mph: Math.round(toMph(mps) * 10) / 10, mps: Math.round(mps * 10) / 10 };
}

export function render(record: AdvisoryRecord, ego: EgoState): DviViewState {
  const view: DviViewState = {
    phaseIcon: null,
    countdownS: null,
    speedometer: display(ego.speedMps),
    speedLimit: ego.speedLimitMps !== undefined ? display(ego.speedLimitMps) : null,
    band: null,
    leadIcon: false,
    warningBanner: false,
    stale: false,
  };

  if (record.gating === "SUPPRESSED_TTC") {
    view.warningBanner = true;
    return view; // SPaT hidden entirely
  }
  if (record.gating === "NO_SIGNAL") {
    return view;
  }

  view.leadIcon = record.gating === "CAPPED_BY_LEAD";
  view.phaseIcon = record.phase;
  view.band = { lowerMps: record.v_lower_mps, upperMps: record.v_upper_mps };

  // signal timing only while stopped at the red; round up so the number
  // never reads 0 with the light still on
  if (ego.speedMps < FULL_STOP_MPS && record.phase === "RED") {
    view.countdownS = Math.ceil(record.t_used_s);
  }
  return view;
}

/**
 * Stateful wrapper for the live stream: feeds lines through the parser and
 * retains the last good view (flagged stale) whenever a record is malformed.
 */
export class ViewTracker {
  private lastGood: DviViewState | null = null;

  constructor(private readonly speedLimitMps?: number) {}

  push(record: AdvisoryRecord | null): DviViewState | null {
    if (record === null) {
      if (this.lastGood === null) return null;
      return { ...this.lastGood, stale: true };
    }
    const view = render(record, {
      speedMps: record.ego_speed_mps,
      speedLimitMps: this.speedLimitMps,
    });
    this.lastGood = view;
    return view;
  }
}
