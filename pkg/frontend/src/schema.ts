/**
 * Stream records and command documents, mirroring the shared contract
 * in ../schema/stream_schema.json (version 1). Outbound commands are
 * validated against the wire-protocol ranges before anything is sent.
 */

export const SCHEMA_VERSION = 1;

export interface RawRecord {
  type: "raw";
  t_s: number;
  seq: number;
  wavelength_nm: 660 | 940;
  samples: number[];
}

export interface ChannelHemo {
  dhbo: number;
  dhbr: number;
}

export interface ProcessedRecord {
  type: "processed";
  t_s: number;
  channels: Record<string, ChannelHemo>;
  hr_bpm?: number;
}

export interface StatusRecord {
  type: "status";
  session_id?: number | null;
  state?: string;
  source?: string | null;
  markers?: [string, number][];
  device?: DeviceStatus;
  dropped?: number;
  error?: string;
}

export interface DeviceStatus {
  streaming: boolean;
  iir_cutoff_hz: number;
  mux_override: number[];
  emitters: EmitterStatus[][];
  [key: string]: unknown;
}

export interface EmitterStatus {
  wavelength_nm: number;
  duty: number;
  freq_hz: number;
  phase: number;
  enabled: boolean;
}

export interface AckRecord {
  type: "ack";
  cmd_id?: number;
  status: string;
  ok: boolean;
  error?: string;
}

export type StreamRecord = RawRecord | ProcessedRecord | StatusRecord | AckRecord;

/** Parse one stream line; returns null for anything malformed. */
export function parseRecord(line: string): StreamRecord | null {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const rec = doc as { type?: unknown };
  switch (rec.type) {
    case "raw": {
      const r = doc as RawRecord;
      if (
        typeof r.t_s !== "number" ||
        typeof r.seq !== "number" ||
        (r.wavelength_nm !== 660 && r.wavelength_nm !== 940) ||
        !Array.isArray(r.samples) ||
        r.samples.length !== 24
      )
        return null;
      return r;
    }
    case "processed": {
      const r = doc as ProcessedRecord;
      if (typeof r.t_s !== "number" || typeof r.channels !== "object" || r.channels === null)
        return null;
      return r;
    }
    case "status":
      return doc as StatusRecord;
    case "ack": {
      const r = doc as AckRecord;
      if (typeof r.status !== "string") return null;
      return r;
    }
    default:
      return null;
  }
}

// --- command documents --------------------------------------------------

export interface SetEmitterForm {
  group: number;
  wavelength_nm: number;
  duty: number;
  freq_hz: number;
  phase: number;
}

export interface MuxOverrideForm {
  group: number;
  channel: number; // 0..2 or 255 to restore auto
}

export type CommandDocument =
  | { set_emitter: SetEmitterForm }
  | { mux_override: MuxOverrideForm }
  | { set_iir_cutoff: { centi_hz: number } }
  | { stream: { on: boolean } }
  | { status_req: Record<string, never> };

export const LIMITS = {
  group: { min: 0, max: 7 },
  wavelengths: [660, 940] as const,
  duty: { min: 0, max: 4095 },
  freq_hz: { min: 24, max: 1526 },
  phase: { min: 0, max: 4095 },
  muxChannel: [0, 1, 2, 255] as const,
  centi_hz: { min: 0, max: 4294967295 },
};

function inRange(v: number, r: { min: number; max: number }): boolean {
  return Number.isFinite(v) && Number.isInteger(v) && v >= r.min && v <= r.max;
}

/**
 * Validate a command document against the wire-protocol ranges.
 * Returns a list of problems; an empty list means it is safe to send.
 */
export function validateCommand(doc: CommandDocument): string[] {
  const problems: string[] = [];
  if ("set_emitter" in doc) {
    const f = doc.set_emitter;
    if (!inRange(f.group, LIMITS.group)) problems.push(`group ${f.group} out of 0..7`);
    if (!LIMITS.wavelengths.includes(f.wavelength_nm as 660 | 940))
      problems.push(`wavelength ${f.wavelength_nm} not 660/940`);
    if (!inRange(f.duty, LIMITS.duty)) problems.push(`duty ${f.duty} out of 0..4095`);
    if (!inRange(f.freq_hz, LIMITS.freq_hz))
      problems.push(`freq ${f.freq_hz} out of 24..1526`);
    if (!inRange(f.phase, LIMITS.phase)) problems.push(`phase ${f.phase} out of 0..4095`);
  } else if ("mux_override" in doc) {
    const f = doc.mux_override;
    if (!inRange(f.group, LIMITS.group)) problems.push(`group ${f.group} out of 0..7`);
    if (!LIMITS.muxChannel.includes(f.channel as 0 | 1 | 2 | 255))
      problems.push(`channel ${f.channel} not 0/1/2/255`);
  } else if ("set_iir_cutoff" in doc) {
    if (!inRange(doc.set_iir_cutoff.centi_hz, LIMITS.centi_hz))
      problems.push(`centi_hz out of u32 range`);
  } else if ("stream" in doc) {
    if (typeof doc.stream.on !== "boolean") problems.push("stream.on must be boolean");
  } else if (!("status_req" in doc)) {
    problems.push("unknown command document");
  }
  return problems;
}
