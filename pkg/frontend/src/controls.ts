/**
 * Control-panel plumbing: validate a command form against the wire
 * ranges, post it to /control, and surface the ack.
 */

import { AckRecord, CommandDocument, validateCommand } from "./schema.js";

export interface ControlResult {
  sent: boolean;
  ack?: AckRecord;
  problems?: string[];
  httpStatus?: number;
}

export async function sendControl(
  endpoint: string,
  doc: CommandDocument,
): Promise<ControlResult> {
  const problems = validateCommand(doc);
  if (problems.length) {
    return { sent: false, problems };   // blocked before send
  }
  const resp = await fetch(endpoint, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(doc),
  });
  const ack = (await resp.json()) as AckRecord;
  return { sent: true, ack, httpStatus: resp.status };
}

export async function fetchStatus(endpoint: string): Promise<unknown> {
  const resp = await fetch(endpoint);
  if (!resp.ok) throw new Error(`status endpoint: HTTP ${resp.status}`);
  return resp.json();
}
