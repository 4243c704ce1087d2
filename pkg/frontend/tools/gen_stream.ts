// Convert the scripted force sequence (fixtures/force_script.json) into a
// pointer-driven sample stream using the real strip mapping: each desired
// force becomes a pointer position, which the input mapping turns back
// into the transmitted force. Output: fixtures/pointer_stream.json.

import { readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { mapForce, pointerForForce, StripGeometry } from "../src/input.js";

interface ForceScript {
  rate_hz: number;
  protocol: Record<string, unknown>;
  messages: Array<Record<string, unknown>>;
}

const here = dirname(fileURLToPath(import.meta.url));
const fixtures = join(here, "..", "..", "fixtures");

const script: ForceScript = JSON.parse(
  readFileSync(join(fixtures, "force_script.json"), "utf-8"),
);

const strip: StripGeometry = { top: 40, height: 520 };
let worst = 0;
const out = script.messages.map((message) => {
  if (message.type !== "sample") return message;
  const want = message.force as number;
  const y = pointerForForce(strip, want);
  const got = mapForce(strip, { y });
  worst = Math.max(worst, Math.abs(got - want));
  return { type: "sample", t: message.t, force: got };
});

if (worst > 1e-9) {
  throw new Error(`pointer mapping round-trip error ${worst} exceeds 1e-9`);
}

writeFileSync(
  join(fixtures, "pointer_stream.json"),
  JSON.stringify({ rate_hz: script.rate_hz, protocol: script.protocol, messages: out }),
);
console.log(`wrote ${out.length} messages (worst mapping error ${worst.toExponential(2)})`);
