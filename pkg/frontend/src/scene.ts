// Task scene: a disk whose height is proportional to the pressing force
// and a horizontal target band whose thickness is proportional to the
// band width, plus end-of-trial color feedback.

export interface SceneState {
  force: number;
  targetForce: number;
  bandWidth: number;
  flash: "green" | "red" | null;
  flashUntil: number; // wall-clock seconds
  connected: boolean;
  phase: string;
}

export const FLASH_SECONDS = 0.3;

export function newScene(): SceneState {
  return {
    force: 0,
    targetForce: 1,
    bandWidth: 0.2,
    flash: null,
    flashUntil: 0,
    connected: false,
    phase: "practice",
  };
}

export function startFlash(state: SceneState, success: boolean, now: number) {
  state.flash = success ? "green" : "red";
  state.flashUntil = now + FLASH_SECONDS;
}

export function activeFlash(state: SceneState, now: number): "green" | "red" | null {
  return state.flash !== null && now < state.flashUntil ? state.flash : null;
}

export interface SceneLayout {
  height: number; // drawable px
  forceScale: number; // px per newton
  baseline: number; // px of zero force
}

export function layoutFor(height: number, forceMax = 2.0): SceneLayout {
  const margin = 0.08 * height;
  return {
    height,
    forceScale: (height - 2 * margin) / forceMax,
    baseline: height - margin,
  };
}

/** Disk center y for a force (higher force, higher disk). */
export function diskY(layout: SceneLayout, force: number): number {
  return layout.baseline - force * layout.forceScale;
}

/** Band rectangle [yTop, yBottom] for the target zone. */
export function bandRect(layout: SceneLayout, target: number, bandWidth: number): [number, number] {
  const top = diskY(layout, target + bandWidth / 2);
  const bottom = diskY(layout, target - bandWidth / 2);
  return [top, bottom];
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  state: SceneState,
  width: number,
  height: number,
  now: number,
) {
  const layout = layoutFor(height);
  ctx.clearRect(0, 0, width, height);

  const flash = activeFlash(state, now);
  ctx.fillStyle = flash === "green" ? "#10321c" : flash === "red" ? "#3a1414" : "#101418";
  ctx.fillRect(0, 0, width, height);

  const [bandTop, bandBottom] = bandRect(layout, state.targetForce, state.bandWidth);
  ctx.fillStyle = "rgba(90, 200, 120, 0.25)";
  ctx.fillRect(width * 0.2, bandTop, width * 0.6, bandBottom - bandTop);
  ctx.strokeStyle = "rgba(90, 200, 120, 0.8)";
  ctx.strokeRect(width * 0.2, bandTop, width * 0.6, bandBottom - bandTop);

  const y = diskY(layout, state.force);
  ctx.beginPath();
  ctx.arc(width / 2, y, Math.min(26, width * 0.05), 0, Math.PI * 2);
  ctx.fillStyle = "#e8c254";
  ctx.fill();

  if (!state.connected) {
    ctx.fillStyle = "rgba(200, 60, 60, 0.85)";
    ctx.fillRect(0, 0, width, 28);
    ctx.fillStyle = "#fff";
    ctx.font = "14px system-ui, sans-serif";
    ctx.fillText("connection lost: reconnecting, input disabled", 10, 19);
  }
}
