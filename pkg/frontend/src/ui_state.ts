// Reducer from server events onto the UI state. The client keeps no
// analysis state of its own: everything shown originates from a server
// message, so replaying a message log reproduces the screen.

import { ProbeDialog } from "./probe.js";
import { ProbeResponseMessage, ServerEvent } from "./protocol.js";
import { newScene, SceneState, startFlash } from "./scene.js";
import { SparklineModel } from "./sparkline.js";

export interface UiState {
  scene: SceneState;
  sparkline: SparklineModel;
  dialog: ProbeDialog | null;
  lastTrialIndex: number;
  trialsCompleted: number;
  successes: number;
}

export function newUiState(): UiState {
  return {
    scene: newScene(),
    sparkline: new SparklineModel(),
    dialog: null,
    lastTrialIndex: 0,
    trialsCompleted: 0,
    successes: 0,
  };
}

/**
 * If the dialog is fully answered: record the self-report marker at the
 * current trial, close the dialog, and return the message to send.
 */
export function finishProbe(state: UiState): ProbeResponseMessage | null {
  if (state.dialog === null || !state.dialog.complete()) return null;
  const message = state.dialog.response();
  const reported = (message.r1 + message.r2 + message.r3) / 3;
  state.sparkline.pushProbe(state.lastTrialIndex, reported);
  state.dialog = null;
  return message;
}

export function applyEvent(state: UiState, event: ServerEvent, now: number): UiState {
  switch (event.type) {
    case "phase_change":
      state.scene.phase = event.phase;
      break;
    case "trial_start":
      state.scene.bandWidth = event.band_width;
      state.scene.targetForce = event.target_force;
      state.lastTrialIndex = event.index;
      break;
    case "trial_end":
      state.trialsCompleted += 1;
      if (event.success) state.successes += 1;
      startFlash(state.scene, event.success, now);
      break;
    case "probe_request":
      state.dialog = new ProbeDialog(event.questions.slice());
      break;
    case "flow_update":
      state.sparkline.pushUpdate(event.trial_index, event.intensity);
      break;
  }
  return state;
}
