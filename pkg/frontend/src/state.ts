/**
 * Console state: connection, per-channel ring buffers, device status,
 * markers, and the last ack. A pure record consumer; it never mutates
 * session data on the host.
 */

import { RingBuffer } from "./ringbuffer.js";
import {
  AckRecord,
  DeviceStatus,
  ProcessedRecord,
  RawRecord,
  StatusRecord,
  StreamRecord,
  parseRecord,
} from "./schema.js";

export const N_CHANNELS = 24;
export const RAW_CAPACITY = 3000;       // raw tail per channel
export const PROCESSED_CAPACITY = 2400; // processed tail per channel

export type ConnectionState = "disconnected" | "connected" | "lagging";

export interface RawPoint {
  t: number;
  code: number;
  wavelength: 660 | 940;
}

export interface HemoPoint {
  t: number;
  dhbo: number;
  dhbr: number;
}

export class UiState {
  connection: ConnectionState = "disconnected";
  raw: RingBuffer<RawPoint>[] = [];
  processed: RingBuffer<HemoPoint>[] = [];
  device: DeviceStatus | null = null;
  markers: [string, number][] = [];
  lastAck: AckRecord | null = null;
  hrBpm: number | null = null;
  selectedChannel = 0;
  layoutName: "headband" | "harness" = "headband";
  malformedLines = 0;
  droppedRecords = 0;
  rawCount = 0;
  processedCount = 0;

  constructor() {
    for (let c = 0; c < N_CHANNELS; c++) {
      this.raw.push(new RingBuffer<RawPoint>(RAW_CAPACITY));
      this.processed.push(new RingBuffer<HemoPoint>(PROCESSED_CAPACITY));
    }
  }

  /** Feed one line from /stream; malformed lines are counted, not fatal. */
  ingestLine(line: string): StreamRecord | null {
    if (!line.trim()) return null;
    const rec = parseRecord(line);
    if (rec === null) {
      this.malformedLines++;
      return null;
    }
    this.ingest(rec);
    return rec;
  }

  ingest(rec: StreamRecord): void {
    switch (rec.type) {
      case "raw":
        this.ingestRaw(rec);
        break;
      case "processed":
        this.ingestProcessed(rec);
        break;
      case "status":
        this.ingestStatus(rec);
        break;
      case "ack":
        this.lastAck = rec;
        break;
    }
  }

  private ingestRaw(rec: RawRecord): void {
    this.rawCount++;
    for (let c = 0; c < N_CHANNELS; c++) {
      this.raw[c].push({ t: rec.t_s, code: rec.samples[c], wavelength: rec.wavelength_nm });
    }
  }

  private ingestProcessed(rec: ProcessedRecord): void {
    this.processedCount++;
    for (const [key, hemo] of Object.entries(rec.channels)) {
      const c = Number(key);
      if (!Number.isInteger(c) || c < 0 || c >= N_CHANNELS) continue;
      this.processed[c].push({ t: rec.t_s, dhbo: hemo.dhbo, dhbr: hemo.dhbr });
    }
    if (rec.hr_bpm !== undefined) this.hrBpm = rec.hr_bpm;
  }

  private ingestStatus(rec: StatusRecord): void {
    if (rec.device) this.device = rec.device;
    if (rec.markers) this.markers = rec.markers;
    if (rec.dropped !== undefined && rec.dropped > 0) {
      this.droppedRecords += rec.dropped;
      this.connection = "lagging";
    }
  }

  /** Latest corrected dHbO per channel (NaN where nothing arrived yet). */
  latestDhbo(): number[] {
    return this.processed.map((buf) => buf.last()?.dhbo ?? NaN);
  }
}
