// Wire protocol spoken with the task service. One JSON object per frame,
// `type` field mandatory.

export interface SampleMessage {
  type: "sample";
  t: number; // session-relative seconds, monotone
  force: number; // newtons
}

export interface ProbeResponseMessage {
  type: "probe_response";
  r1: number;
  r2: number;
  r3: number;
}

export type ClientMessage = SampleMessage | ProbeResponseMessage;

export interface TrialStartEvent {
  type: "trial_start";
  index: number;
  band_width: number;
  target_force: number;
}

export interface TrialEndEvent {
  type: "trial_end";
  index: number;
  success: boolean;
  metrics: Record<string, number>;
}

export interface ProbeRequestEvent {
  type: "probe_request";
  questions: [string, string, string];
}

export interface PhaseChangeEvent {
  type: "phase_change";
  phase: string;
}

export interface FlowUpdateEvent {
  type: "flow_update";
  trial_index: number;
  intensity: number;
}

export type ServerEvent =
  | TrialStartEvent
  | TrialEndEvent
  | ProbeRequestEvent
  | PhaseChangeEvent
  | FlowUpdateEvent;

export function parseServerEvent(raw: string): ServerEvent {
  const data = JSON.parse(raw);
  if (typeof data !== "object" || data === null || typeof data.type !== "string") {
    throw new Error("malformed server frame");
  }
  return data as ServerEvent;
}
