import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { describe, expect, it } from "vitest";

import { LIMITS, validateCommand } from "../src/schema.js";

const here = dirname(fileURLToPath(import.meta.url));
const shared = JSON.parse(
  readFileSync(join(here, "..", "..", "schema", "stream_schema.json"), "utf-8"),
);

describe("command validation", () => {
  it("accepts an in-range emitter command", () => {
    expect(
      validateCommand({
        set_emitter: { group: 0, wavelength_nm: 940, duty: 2048, freq_hz: 100, phase: 0 },
      }),
    ).toEqual([]);
  });

  it("blocks out-of-range frequency before send", () => {
    const problems = validateCommand({
      set_emitter: { group: 0, wavelength_nm: 940, duty: 2048, freq_hz: 2000, phase: 0 },
    });
    expect(problems.length).toBe(1);
    expect(problems[0]).toContain("freq");
  });

  it("blocks bad group, duty, wavelength, and non-integers", () => {
    expect(
      validateCommand({
        set_emitter: { group: 9, wavelength_nm: 800, duty: 9999, freq_hz: 24.5, phase: -1 },
      }).length,
    ).toBe(5);
  });

  it("validates mux overrides including the auto sentinel", () => {
    expect(validateCommand({ mux_override: { group: 3, channel: 255 } })).toEqual([]);
    expect(validateCommand({ mux_override: { group: 3, channel: 7 } }).length).toBe(1);
    expect(validateCommand({ mux_override: { group: -1, channel: 0 } }).length).toBe(1);
  });

  it("validates cutoff and stream commands", () => {
    expect(validateCommand({ set_iir_cutoff: { centi_hz: 2000 } })).toEqual([]);
    expect(validateCommand({ set_iir_cutoff: { centi_hz: -5 } }).length).toBe(1);
    expect(validateCommand({ stream: { on: true } })).toEqual([]);
    expect(validateCommand({ status_req: {} })).toEqual([]);
  });
});

describe("shared schema file agreement", () => {
  it("limits match the committed contract", () => {
    const se = shared.commands.set_emitter;
    expect(LIMITS.duty).toEqual(se.duty);
    expect(LIMITS.freq_hz).toEqual(se.freq_hz);
    expect(LIMITS.phase).toEqual(se.phase);
    expect([...LIMITS.wavelengths]).toEqual(se.wavelength_nm.enum);
    expect([...LIMITS.muxChannel]).toEqual(shared.commands.mux_override.channel.enum);
    expect(LIMITS.centi_hz).toEqual(shared.commands.set_iir_cutoff.centi_hz);
    expect(shared.version).toBe(1);
  });
});
