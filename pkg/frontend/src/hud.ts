/**
 * HUD geometry and labels. One place computes where the band overlay sits
 * on the speedometer strip and what every label says; the DOM layer and the
 * snapshot tests both consume this, so a snapshot pins the display to the
 * pixel-label level.
 */

import { DviViewState } from "./render.js";
import { toMph } from "./wire.js";

export const STRIP_MAX_MPH = 60;
export const STRIP_WIDTH_PX = 360;
export const PX_PER_MPH = STRIP_WIDTH_PX / STRIP_MAX_MPH;

export interface BandPixels {
  leftPx: number;
  rightPx: number;
  label: string;
}

export function bandPixels(lowerMps: number, upperMps: number): BandPixels {
  const lo = toMph(lowerMps);
  const hi = toMph(upperMps);
  return {
    leftPx: Math.round(Math.min(lo, STRIP_MAX_MPH) * PX_PER_MPH),
    rightPx: Math.round(Math.min(hi, STRIP_MAX_MPH) * PX_PER_MPH),
    label: `${lo.toFixed(1)}-${hi.toFixed(1)} mph`,
  };
}

export function needlePx(speedMph: number): number {
  return Math.round(Math.min(Math.max(speedMph, 0), STRIP_MAX_MPH) * PX_PER_MPH);
}

/** Full textual layout of the HUD, one line per element. */
export function layoutLines(view: DviViewState): string[] {
  const lines: string[] = [];
  lines.push(`speed: ${view.speedometer.mph.toFixed(1)} mph (${view.speedometer.mps.toFixed(1)} m/s) needle@${needlePx(view.speedometer.mph)}px`);
  lines.push(
    view.speedLimit
      ? `limit: ${view.speedLimit.mph.toFixed(1)} mph (${view.speedLimit.mps.toFixed(1)} m/s)`
      : "limit: none",
  );
  if (view.warningBanner) {
    lines.push("warning: ADVISORY OFF - VEHICLE AHEAD");
  }
  lines.push(`phase: ${view.phaseIcon ?? "hidden"}`);
  if (view.band) {
    const px = bandPixels(view.band.lowerMps, view.band.upperMps);
    lines.push(`band: ${px.label} overlay ${px.leftPx}..${px.rightPx}px`);
  } else {
    lines.push("band: hidden");
  }
  lines.push(view.countdownS !== null ? `countdown: ${view.countdownS} s` : "countdown: hidden");
  lines.push(`lead: ${view.leadIcon ? "shown" : "hidden"}`);
  if (view.stale) lines.push("stale: last good state");
  return lines;
}
