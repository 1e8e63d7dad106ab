/**
 * Pedal input for the live session. Keyboard state comes in via press and
 * release events; tick() decides what (if anything) goes out on the wire:
 *
 *  - active pedal commands at most every 100 ms (10 Hz),
 *  - brake wins when both pedals are held,
 *  - an idle driver still sends a zero command every second so the server
 *    can tell "hands off" from "link dead",
 *  - after a disconnect the input is dead and a banner is requested.
 */

import { DriveCommand } from "./wire.js";

export const COMMAND_INTERVAL_MS = 100;
export const HEARTBEAT_INTERVAL_MS = 1000;

export type Pedal = "accelerate" | "brake";

export class DriveInput {
  private held = { accelerate: false, brake: false };
  private lastSentMs = -Infinity;
  private disabled = false;

  press(pedal: Pedal): void {
    this.held[pedal] = true;
  }

  release(pedal: Pedal): void {
    this.held[pedal] = false;
  }

  /** Server link dropped: stop emitting and show the banner. */
  disconnect(): void {
    this.disabled = true;
    this.held = { accelerate: false, brake: false };
  }

  get inputDisabled(): boolean {
    return this.disabled;
  }

  get showDisconnectBanner(): boolean {
    return this.disabled;
  }

  /** Called at the UI frame rate; returns a command when one is due. */
  tick(nowMs: number): DriveCommand | null {
    if (this.disabled) return null;

    const active = this.held.accelerate || this.held.brake;
    const interval = active ? COMMAND_INTERVAL_MS : HEARTBEAT_INTERVAL_MS;
    if (nowMs - this.lastSentMs < interval) return null;

    this.lastSentMs = nowMs;
    if (this.held.brake) return { t_ms: nowMs, throttle: 0, brake: 1 };
    if (this.held.accelerate) return { t_ms: nowMs, throttle: 1, brake: 0 };
    return { t_ms: nowMs, throttle: 0, brake: 0 };
  }
}
