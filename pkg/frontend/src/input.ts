// Pointer-position force proxy: vertical position within a control strip
// maps linearly onto 0..2 N; releasing the pointer (or leaving the strip)
// always maps to zero so trials can start from zero force.

import { SampleMessage } from "./protocol.js";

export const FORCE_MAX = 2.0;

export interface StripGeometry {
  top: number; // css px of the strip's top edge
  height: number; // css px
}

export interface PointerState {
  y: number | null; // pointer y in css px, null when released/outside
}

/** Linear map: strip bottom -> 0 N, strip top -> FORCE_MAX. */
export function mapForce(strip: StripGeometry, pointer: PointerState): number {
  if (pointer.y === null || strip.height <= 0) return 0;
  const fromBottom = strip.top + strip.height - pointer.y;
  const frac = fromBottom / strip.height;
  return FORCE_MAX * Math.min(1, Math.max(0, frac));
}

/** Inverse of mapForce for scripted drives (force -> pointer y). */
export function pointerForForce(strip: StripGeometry, force: number): number {
  const frac = Math.min(1, Math.max(0, force / FORCE_MAX));
  return strip.top + strip.height - frac * strip.height;
}

/**
 * Fixed-cadence sampler. `tick(now_s)` emits one timestamped sample per
 * elapsed cadence interval (monotone timestamps), reading the latest
 * pointer state; when the queue backs up beyond `maxQueue` the oldest
 * samples are dropped and counted.
 */
export class InputSampler {
  readonly cadenceHz: number;
  private strip: StripGeometry;
  private pointer: PointerState = { y: null };
  private nextTick: number | null = null;
  private t0: number | null = null;
  private queue: SampleMessage[] = [];
  dropped = 0;
  suppressed = false; // true while the probe dialog is open
  maxQueue = 240;

  constructor(strip: StripGeometry, cadenceHz = 120) {
    this.strip = strip;
    this.cadenceHz = cadenceHz;
  }

  setStrip(strip: StripGeometry) {
    this.strip = strip;
  }

  setPointer(y: number | null) {
    this.pointer = { y };
  }

  /** Advance to wall-clock `now` (seconds); returns newly queued samples. */
  tick(now: number): SampleMessage[] {
    if (this.t0 === null) {
      this.t0 = now;
      this.nextTick = now;
    }
    const out: SampleMessage[] = [];
    const step = 1 / this.cadenceHz;
    while (this.nextTick !== null && this.nextTick <= now) {
      if (!this.suppressed) {
        const sample: SampleMessage = {
          type: "sample",
          t: this.nextTick - this.t0,
          force: mapForce(this.strip, this.pointer),
        };
        this.queue.push(sample);
        out.push(sample);
        while (this.queue.length > this.maxQueue) {
          this.queue.shift();
          this.dropped += 1;
        }
      }
      this.nextTick += step;
    }
    return out;
  }

  /** Drain queued samples for transmission. */
  drain(): SampleMessage[] {
    const batch = this.queue;
    this.queue = [];
    return batch;
  }
}
