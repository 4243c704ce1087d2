// Rolling chart of decoded flow intensity per trial, with self-report
// markers and a median line once two or more probes have been answered.
// Display is clamped to the 1..7 intensity scale.

export interface FlowPoint {
  trial: number;
  intensity: number;
}

export interface ProbeMarker {
  trial: number;
  reported: number;
}

export const INTENSITY_MIN = 1;
export const INTENSITY_MAX = 7;
export const DECODER_MIN_PROBES = 5;

export class SparklineModel {
  points: FlowPoint[] = [];
  markers: ProbeMarker[] = [];
  maxPoints: number;
  probesAnswered = 0;

  constructor(maxPoints = 300) {
    this.maxPoints = maxPoints;
  }

  pushUpdate(trial: number, intensity: number) {
    this.points.push({ trial, intensity });
    if (this.points.length > this.maxPoints) {
      this.points.splice(0, this.points.length - this.maxPoints);
    }
  }

  pushProbe(trial: number, reported: number) {
    this.probesAnswered += 1;
    this.markers.push({ trial, reported });
  }

  /** Median of reported intensities; null until two probes exist. */
  medianLine(): number | null {
    if (this.markers.length < 2) return null;
    const sorted = this.markers.map((m) => m.reported).sort((a, b) => a - b);
    const mid = Math.floor(sorted.length / 2);
    return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
  }

  /** Placeholder text while the decoder is still collecting probes. */
  placeholder(): string | null {
    if (this.points.length > 0) return null;
    return `collecting probes (${Math.min(this.probesAnswered, DECODER_MIN_PROBES)}/${DECODER_MIN_PROBES})`;
  }

  clampY(intensity: number): number {
    return Math.min(INTENSITY_MAX, Math.max(INTENSITY_MIN, intensity));
  }

  /** Decoded-intensity polyline in unit coordinates (x, y in [0, 1]). */
  path(): Array<[number, number]> {
    if (this.points.length === 0) return [];
    const t0 = this.points[0].trial;
    const t1 = this.points[this.points.length - 1].trial;
    const span = Math.max(1, t1 - t0);
    return this.points.map((p) => [
      (p.trial - t0) / span,
      (this.clampY(p.intensity) - INTENSITY_MIN) / (INTENSITY_MAX - INTENSITY_MIN),
    ]);
  }

  /** Probe markers in the same unit coordinates as path(). */
  markerPoints(): Array<[number, number]> {
    if (this.points.length === 0) {
      return this.markers.map((m, i) => [
        this.markers.length > 1 ? i / (this.markers.length - 1) : 0,
        (this.clampY(m.reported) - INTENSITY_MIN) / (INTENSITY_MAX - INTENSITY_MIN),
      ]);
    }
    const t0 = this.points[0].trial;
    const t1 = this.points[this.points.length - 1].trial;
    const span = Math.max(1, t1 - t0);
    return this.markers.map((m) => [
      (m.trial - t0) / span,
      (this.clampY(m.reported) - INTENSITY_MIN) / (INTENSITY_MAX - INTENSITY_MIN),
    ]);
  }
}

export function drawSparkline(
  ctx: CanvasRenderingContext2D,
  model: SparklineModel,
  width: number,
  height: number,
) {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#0c1013";
  ctx.fillRect(0, 0, width, height);
  const pad = 8;
  const toPx = ([x, y]: [number, number]): [number, number] => [
    pad + x * (width - 2 * pad),
    height - pad - y * (height - 2 * pad),
  ];

  const placeholder = model.placeholder();
  if (placeholder !== null) {
    ctx.fillStyle = "#9aa7b0";
    ctx.font = "13px system-ui, sans-serif";
    ctx.fillText(placeholder, 10, height / 2);
  }

  const median = model.medianLine();
  if (median !== null) {
    const [, y] = toPx([0, (model.clampY(median) - INTENSITY_MIN) / (INTENSITY_MAX - INTENSITY_MIN)]);
    ctx.strokeStyle = "rgba(255,255,255,0.35)";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, y);
    ctx.lineTo(width - pad, y);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const path = model.path();
  if (path.length > 1) {
    ctx.strokeStyle = "#5dc2e8";
    ctx.beginPath();
    path.forEach((pt, i) => {
      const [x, y] = toPx(pt);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  ctx.fillStyle = "#ef6461";
  for (const pt of model.markerPoints()) {
    const [x, y] = toPx(pt);
    ctx.beginPath();
    ctx.arc(x, y, 3.5, 0, Math.PI * 2);
    ctx.fill();
  }
}
