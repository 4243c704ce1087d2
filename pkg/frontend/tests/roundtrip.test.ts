// The scripted force sequence driven through the pointer mapping must
// reproduce the requested forces exactly (the server-side equivalence is
// checked by the backend's UI round-trip test on the generated stream).

import { readFileSync, existsSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { mapForce, pointerForForce } from "../src/input.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = join(here, "..", "fixtures", "force_script.json");

describe("scripted pointer round trip", () => {
  it.skipIf(!existsSync(fixture))("recovers every scripted force through the strip", () => {
    const script = JSON.parse(readFileSync(fixture, "utf-8"));
    const strip = { top: 40, height: 520 };
    let worst = 0;
    let samples = 0;
    for (const message of script.messages) {
      if (message.type !== "sample") continue;
      samples += 1;
      const y = pointerForForce(strip, message.force);
      worst = Math.max(worst, Math.abs(mapForce(strip, { y }) - message.force));
    }
    expect(samples).toBeGreaterThan(1000);
    expect(worst).toBeLessThan(1e-9);
  });

  it.skipIf(!existsSync(fixture))("timestamps are monotone at the configured cadence", () => {
    const script = JSON.parse(readFileSync(fixture, "utf-8"));
    const ts = script.messages.filter((m: any) => m.type === "sample").map((m: any) => m.t);
    for (let i = 1; i < ts.length; i += 1) {
      expect(ts[i]).toBeGreaterThan(ts[i - 1]);
    }
  });
});
