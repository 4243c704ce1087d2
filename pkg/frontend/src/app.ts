// Browser entry point: wires the pointer strip, the scene canvas, the
// sparkline, the probe dialog, and the session WebSocket together.

import { InputSampler } from "./input.js";
import { ANCHOR_TEXT } from "./probe.js";
import { parseServerEvent } from "./protocol.js";
import { drawScene } from "./scene.js";
import { drawSparkline } from "./sparkline.js";
import { applyEvent, finishProbe, newUiState, UiState } from "./ui_state.js";

const now = () => performance.now() / 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function createSession(): Promise<string> {
  const response = await fetch("/api/session", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({}),
  });
  if (!response.ok) throw new Error(`session create failed: ${response.status}`);
  const body = await response.json();
  return body.id as string;
}

function renderDialog(state: UiState, container: HTMLElement, send: (msg: object) => void, sampler: InputSampler) {
  if (state.dialog === null) {
    container.style.display = "none";
    container.innerHTML = "";
    sampler.suppressed = false;
    return;
  }
  sampler.suppressed = true;
  container.style.display = "block";
  const dialog = state.dialog;
  container.innerHTML = "";
  const intro = document.createElement("p");
  intro.textContent =
    "Please choose the answer from one to seven based on your thoughts and " +
    "feelings in the previous five or so trials. There are no right or wrong answers.";
  container.appendChild(intro);
  dialog.questions.forEach((question, qi) => {
    const row = document.createElement("div");
    row.className = "probe-row" + (dialog.focused === qi ? " focused" : "");
    const label = document.createElement("span");
    label.textContent = `${qi + 1}) ${question}`;
    row.appendChild(label);
    for (let v = 1; v <= 7; v += 1) {
      const btn = document.createElement("button");
      btn.textContent = String(v);
      if (dialog.answers[qi] === v) btn.className = "selected";
      btn.onclick = () => {
        dialog.selectFor(qi, v);
        const message = finishProbe(state);
        if (message) send(message);
        renderDialog(state, container, send, sampler);
      };
      row.appendChild(btn);
    }
    container.appendChild(row);
  });
  const anchors = document.createElement("p");
  anchors.className = "anchors";
  anchors.textContent = ANCHOR_TEXT;
  container.appendChild(anchors);
}

export async function start() {
  const strip = el<HTMLDivElement>("strip");
  const sceneCanvas = el<HTMLCanvasElement>("scene");
  const sparkCanvas = el<HTMLCanvasElement>("sparkline");
  const dialogBox = el<HTMLDivElement>("probe-dialog");
  const status = el<HTMLDivElement>("status");
  const debug = el<HTMLDivElement>("debug");

  const state = newUiState();
  const rect = strip.getBoundingClientRect();
  const sampler = new InputSampler({ top: rect.top, height: rect.height }, 120);

  strip.addEventListener("pointermove", (e) => sampler.setPointer(e.clientY));
  strip.addEventListener("pointerdown", (e) => {
    strip.setPointerCapture(e.pointerId);
    sampler.setPointer(e.clientY);
  });
  const release = () => sampler.setPointer(null);
  strip.addEventListener("pointerup", release);
  strip.addEventListener("pointerleave", release);
  window.addEventListener("resize", () => {
    const r = strip.getBoundingClientRect();
    sampler.setStrip({ top: r.top, height: r.height });
  });

  const sessionId = await createSession();
  status.textContent = `session ${sessionId}`;

  let socket: WebSocket | null = null;
  const send = (message: object) => {
    if (socket && socket.readyState === WebSocket.OPEN) {
      socket.send(JSON.stringify(message));
    }
  };

  const connect = () => {
    const scheme = location.protocol === "https:" ? "wss" : "ws";
    socket = new WebSocket(`${scheme}://${location.host}/api/session/${sessionId}/stream`);
    socket.onopen = () => {
      state.scene.connected = true;
    };
    socket.onclose = () => {
      state.scene.connected = false;
      setTimeout(connect, 1000);
    };
    socket.onmessage = (frame) => {
      applyEvent(state, parseServerEvent(frame.data as string), now());
      renderDialog(state, dialogBox, send, sampler);
    };
  };
  connect();

  window.addEventListener("keydown", (e) => {
    if (state.dialog !== null && state.dialog.key(e.key)) {
      const message = finishProbe(state);
      if (message) send(message);
      renderDialog(state, dialogBox, send, sampler);
      e.preventDefault();
    }
  });

  setInterval(() => {
    sampler.tick(now());
    if (state.scene.connected) {
      for (const sample of sampler.drain()) {
        send(sample);
        state.scene.force = sample.force;
      }
    }
  }, 1000 / 120);

  const sceneCtx = sceneCanvas.getContext("2d")!;
  const sparkCtx = sparkCanvas.getContext("2d")!;
  const render = () => {
    drawScene(sceneCtx, state.scene, sceneCanvas.width, sceneCanvas.height, now());
    drawSparkline(sparkCtx, state.sparkline, sparkCanvas.width, sparkCanvas.height);
    debug.textContent = `phase ${state.scene.phase} · trials ${state.trialsCompleted} · ` +
      `success ${state.trialsCompleted ? (state.successes / state.trialsCompleted).toFixed(2) : "-"} · ` +
      `dropped ${sampler.dropped}`;
    requestAnimationFrame(render);
  };
  requestAnimationFrame(render);
}

start().catch((err) => {
  document.body.innerHTML = `<pre>failed to start: ${err}</pre>`;
});
