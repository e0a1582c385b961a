import { describe, expect, it } from "vitest";

import { PROCESSED_CAPACITY, RAW_CAPACITY, UiState } from "../src/state.js";

function rawLine(t: number, seq: number, value = 2048): string {
  return JSON.stringify({
    type: "raw",
    t_s: t,
    seq,
    wavelength_nm: 660,
    samples: new Array(24).fill(value),
  });
}

function processedLine(t: number, dhbo: number): string {
  const channels: Record<string, { dhbo: number; dhbr: number }> = {};
  for (let c = 0; c < 24; c++) channels[String(c)] = { dhbo, dhbr: -dhbo / 3 };
  return JSON.stringify({ type: "processed", t_s: t, channels, hr_bpm: 72.1 });
}

describe("UiState ingestion", () => {
  it("appends raw and processed records per channel", () => {
    const s = new UiState();
    s.ingestLine(rawLine(0.1, 0));
    s.ingestLine(processedLine(0.5, 0.8));
    expect(s.raw[0].size).toBe(1);
    expect(s.processed[5].last()).toEqual({ t: 0.5, dhbo: 0.8, dhbr: -0.8 / 3 });
    expect(s.hrBpm).toBeCloseTo(72.1);
    expect(s.rawCount).toBe(1);
    expect(s.processedCount).toBe(1);
  });

  it("ring buffers never exceed their capacities", () => {
    const s = new UiState();
    for (let i = 0; i < RAW_CAPACITY + 500; i++) s.ingestLine(rawLine(i / 50, i));
    for (let i = 0; i < PROCESSED_CAPACITY + 100; i++) s.ingestLine(processedLine(i / 2, 0.1));
    expect(s.raw[0].size).toBe(RAW_CAPACITY);
    expect(s.processed[0].size).toBe(PROCESSED_CAPACITY);
  });

  it("skips malformed lines without crashing", () => {
    const s = new UiState();
    expect(s.ingestLine("not json at all {{{")).toBeNull();
    expect(s.ingestLine('{"type":"raw","seq":1}')).toBeNull(); // missing fields
    expect(s.ingestLine('{"type":"mystery"}')).toBeNull();
    expect(s.malformedLines).toBe(3);
    s.ingestLine(rawLine(1, 1));
    expect(s.rawCount).toBe(1);
  });

  it("enters lagging state when the drop counter advances", () => {
    const s = new UiState();
    s.connection = "connected";
    s.ingestLine(JSON.stringify({ type: "status", dropped: 12 }));
    expect(s.connection).toBe("lagging");
    expect(s.droppedRecords).toBe(12);
  });

  it("tracks device status and markers", () => {
    const s = new UiState();
    s.ingestLine(
      JSON.stringify({
        type: "status",
        markers: [["baseline", 0], ["task", 20]],
        device: { streaming: true, iir_cutoff_hz: 20, mux_override: [255, 2], emitters: [] },
      }),
    );
    expect(s.markers.length).toBe(2);
    expect(s.device?.mux_override[1]).toBe(2);
  });

  it("stores the last ack", () => {
    const s = new UiState();
    s.ingestLine(JSON.stringify({ type: "ack", cmd_id: 1, status: "bad-param", ok: false }));
    expect(s.lastAck?.ok).toBe(false);
    expect(s.lastAck?.status).toBe("bad-param");
  });
});
