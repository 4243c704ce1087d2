import { describe, expect, it } from "vitest";

import { ProbeDialog } from "../src/probe.js";
import { applyEvent, finishProbe, newUiState } from "../src/ui_state.js";

const QUESTIONS: [string, string, string] = [
  "My thoughts/activities run fluidly and smoothly.",
  "I have no difficulty concentrating.",
  "I do not notice time passing.",
];

describe("ProbeDialog", () => {
  it("collects three answers and builds the response message", () => {
    const dialog = new ProbeDialog([...QUESTIONS]);
    dialog.select(6);
    dialog.select(5);
    dialog.select(7);
    expect(dialog.complete()).toBe(true);
    expect(dialog.response()).toEqual({ type: "probe_response", r1: 6, r2: 5, r3: 7 });
  });

  it("keyboard 1-7 answers the focused question and advances", () => {
    const dialog = new ProbeDialog([...QUESTIONS]);
    expect(dialog.key("4")).toBe(true);
    expect(dialog.answers[0]).toBe(4);
    expect(dialog.focused).toBe(1);
    expect(dialog.key("9")).toBe(false);
    expect(dialog.key("ArrowUp")).toBe(true);
    expect(dialog.focused).toBe(0);
  });

  it("rejects out-of-range selections", () => {
    const dialog = new ProbeDialog([...QUESTIONS]);
    dialog.select(0);
    dialog.select(8);
    expect(dialog.answers[0]).toBeNull();
    expect(() => dialog.response()).toThrow();
  });
});

describe("probe flow through the UI state", () => {
  it("opens on probe_request, blocks, and records a marker when done", () => {
    const state = newUiState();
    applyEvent(state, { type: "trial_start", index: 17, band_width: 0.05, target_force: 1 }, 0);
    applyEvent(state, { type: "probe_request", questions: QUESTIONS }, 0);
    expect(state.dialog).not.toBeNull();
    expect(finishProbe(state)).toBeNull(); // unanswered: still blocking
    state.dialog!.select(6);
    state.dialog!.select(5);
    state.dialog!.select(7);
    const message = finishProbe(state);
    expect(message).toEqual({ type: "probe_response", r1: 6, r2: 5, r3: 7 });
    expect(state.dialog).toBeNull();
    expect(state.sparkline.markers).toEqual([{ trial: 17, reported: 6 }]);
  });

  it("tracks trial feedback and flow updates", () => {
    const state = newUiState();
    applyEvent(state, { type: "trial_end", index: 1, success: true, metrics: {} }, 10.0);
    expect(state.scene.flash).toBe("green");
    expect(state.scene.flashUntil).toBeCloseTo(10.3, 9);
    applyEvent(state, { type: "flow_update", trial_index: 9, intensity: 4.4 }, 10.1);
    expect(state.sparkline.points).toEqual([{ trial: 9, intensity: 4.4 }]);
  });
});
