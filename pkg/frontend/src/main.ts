/**
 * Browser entry point. Connects to the websocket bridge exposed by the live
 * session, renders incoming advisory records, and pushes pedal commands
 * back. Replay streams go through the exact same path; the HUD cannot tell
 * the difference.
 */

import { DriveInput } from "./input.js";
import { ViewTracker, DviViewState } from "./render.js";
import { BandSmoother } from "./smooth.js";
import { bandPixels, layoutLines, needlePx, STRIP_WIDTH_PX } from "./hud.js";
import { formatCommand, parseRecordLine } from "./wire.js";

const params = new URLSearchParams(window.location.search);
const wsUrl = params.get("ws") ?? "ws://127.0.0.1:8765";
const speedLimitMps = Number(params.get("limit") ?? "20.1");

const el = (id: string): HTMLElement => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
};

const tracker = new ViewTracker(speedLimitMps);
const smoother = new BandSmoother();
const input = new DriveInput();

function draw(view: DviViewState): void {
  el("speed-mph").textContent = view.speedometer.mph.toFixed(0);
  el("speed-mps").textContent = `${view.speedometer.mps.toFixed(1)} m/s`;
  el("limit").textContent = view.speedLimit
    ? `LIMIT ${view.speedLimit.mph.toFixed(0)} mph / ${view.speedLimit.mps.toFixed(1)} m/s`
    : "";

  const phase = el("phase-icon");
  phase.className = view.phaseIcon ? `phase ${view.phaseIcon.toLowerCase()}` : "phase hidden";

  const band = el("band");
  if (view.band) {
    const px = bandPixels(view.band.lowerMps, view.band.upperMps);
    band.style.display = "block";
    band.style.left = `${px.leftPx}px`;
    band.style.width = `${Math.max(px.rightPx - px.leftPx, 2)}px`;
    band.title = px.label;
  } else {
    band.style.display = "none";
  }
  el("needle").style.left = `${Math.min(needlePx(view.speedometer.mph), STRIP_WIDTH_PX - 2)}px`;

  el("countdown").textContent = view.countdownS !== null ? String(view.countdownS) : "";
  el("lead-icon").style.display = view.leadIcon ? "inline-block" : "none";
  el("warning").style.display = view.warningBanner ? "block" : "none";
  el("stale").style.display = view.stale ? "inline" : "none";
  el("debug").textContent = layoutLines(view).join("\n");
}

const ws = new WebSocket(wsUrl);

ws.onmessage = (ev: MessageEvent<string>) => {
  for (const line of ev.data.split("\n")) {
    if (!line.trim()) continue;
    const record = parseRecordLine(line);
    const view = tracker.push(record === null ? null : smoother.push(record));
    if (view) draw(view);
  }
};

function linkDown(): void {
  input.disconnect();
  el("disconnected").style.display = "block";
}
ws.onclose = linkDown;
ws.onerror = linkDown;

const PEDAL_KEYS: Record<string, "accelerate" | "brake"> = {
  ArrowUp: "accelerate",
  KeyW: "accelerate",
  ArrowDown: "brake",
  KeyS: "brake",
  Space: "brake",
};

window.addEventListener("keydown", (ev) => {
  const pedal = PEDAL_KEYS[ev.code];
  if (pedal) {
    input.press(pedal);
    ev.preventDefault();
  }
});
window.addEventListener("keyup", (ev) => {
  const pedal = PEDAL_KEYS[ev.code];
  if (pedal) input.release(pedal);
});

setInterval(() => {
  const cmd = input.tick(performance.now());
  if (cmd && ws.readyState === WebSocket.OPEN) {
    ws.send(formatCommand(cmd) + "\n");
  }
}, 20);
