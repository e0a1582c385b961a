/**
 * Browser wiring: connects the stream, renders the channel map and
 * series panes onto canvases, and hooks up the control panel. All
 * logic lives in the testable modules; this file only touches the DOM.
 */

import { sendControl } from "./controls.js";
import { CommandDocument } from "./schema.js";
import { UiState } from "./state.js";
import { connectStream } from "./stream.js";
import { channelMap, hemoPanes, markerBands, rawPane, SeriesPane } from "./views.js";

const state = new UiState();
const $ = (id: string) => document.getElementById(id)!;

function drawMap(): void {
  const canvas = $("map") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  for (const cell of channelMap(state)) {
    const x = cell.x * w;
    const y = cell.y * h;
    const r = cell.role === "short" ? 9 : 13;
    ctx.beginPath();
    ctx.arc(x, y, r, 0, 2 * Math.PI);
    ctx.fillStyle = cell.color;
    ctx.fill();
    ctx.lineWidth = cell.channel === state.selectedChannel ? 3 : 1;
    ctx.strokeStyle = cell.pinned
      ? "#f2c14e"
      : cell.channel === state.selectedChannel
        ? "#eee"
        : "#555";
    ctx.stroke();
    ctx.fillStyle = "#ccc";
    ctx.font = "9px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(String(cell.channel), x, y + 3);
  }
}

function drawPane(canvasId: string, pane: SeriesPane, color: string, bands = false): void {
  const canvas = $(canvasId) as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  if (bands) {
    for (const band of markerBands(state.markers, pane.tMin, pane.tMax)) {
      if (band.label !== "task") continue;
      const x0 = ((band.t0 - pane.tMin) / (pane.tMax - pane.tMin)) * w;
      const x1 = ((band.t1 - pane.tMin) / (pane.tMax - pane.tMin)) * w;
      ctx.fillStyle = "rgba(242,193,78,0.12)";
      ctx.fillRect(x0, 0, x1 - x0, h);
    }
  }
  if (!pane.points.length) return;
  ctx.beginPath();
  pane.points.forEach(([px, py], i) => {
    const x = px * w;
    const y = (1 - py) * h;
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.4;
  ctx.stroke();
}

let dirty = false;
function render(): void {
  dirty = false;
  drawMap();
  const panes = hemoPanes(state, state.selectedChannel);
  drawPane("dhbo", panes.dhbo, "#d64541", true);
  drawPane("dhbr", panes.dhbr, "#3476c7", true);
  drawPane("raw", rawPane(state, state.selectedChannel), "#8fbf6e");
  $("conn").textContent = state.connection;
  $("conn").className = `pill ${state.connection}`;
  $("hr").textContent = state.hrBpm === null ? "--" : state.hrBpm.toFixed(1);
  $("selch").textContent = String(state.selectedChannel);
  $("drops").textContent = String(state.droppedRecords);
  if (state.lastAck) {
    $("ack").textContent = `${state.lastAck.status}${state.lastAck.error ? ": " + state.lastAck.error : ""}`;
    $("ack").className = state.lastAck.ok ? "ok" : "bad";
  }
  const duty = state.device?.emitters?.[groupInput()]?.[wlIndex()]?.duty;
  $("dutynow").textContent = duty === undefined ? "--" : String(duty);
}

function scheduleRender(): void {
  if (dirty) return;
  dirty = true;
  requestAnimationFrame(render);
}

const groupInput = () => Number(($("group") as HTMLInputElement).value);
const wlIndex = () => (Number(($("wl") as HTMLSelectElement).value) === 940 ? 1 : 0);

async function submitEmitter(): Promise<void> {
  const doc: CommandDocument = {
    set_emitter: {
      group: groupInput(),
      wavelength_nm: Number(($("wl") as HTMLSelectElement).value),
      duty: Number(($("duty") as HTMLInputElement).value),
      freq_hz: Number(($("freq") as HTMLInputElement).value),
      phase: Number(($("phase") as HTMLInputElement).value),
    },
  };
  await submit(doc);
}

async function submit(doc: CommandDocument): Promise<void> {
  const res = await sendControl("/control", doc);
  if (!res.sent) {
    $("ack").textContent = `blocked: ${res.problems!.join("; ")}`;
    $("ack").className = "bad";
    return;
  }
  scheduleRender();
}

function wire(): void {
  $("send-emitter").addEventListener("click", () => void submitEmitter());
  $("duty").addEventListener("input", () => {
    $("dutyval").textContent = ($("duty") as HTMLInputElement).value;
  });
  $("send-mux").addEventListener("click", () =>
    void submit({
      mux_override: {
        group: Number(($("muxgroup") as HTMLInputElement).value),
        channel: Number(($("muxch") as HTMLSelectElement).value),
      },
    }),
  );
  $("send-iir").addEventListener("click", () =>
    void submit({
      set_iir_cutoff: {
        centi_hz: Math.round(Number(($("cutoff") as HTMLInputElement).value) * 100),
      },
    }),
  );
  ($("layout") as HTMLSelectElement).addEventListener("change", (e) => {
    state.layoutName = (e.target as HTMLSelectElement).value as "headband" | "harness";
    scheduleRender();
  });
  ($("map") as HTMLCanvasElement).addEventListener("click", (e) => {
    const canvas = $("map") as HTMLCanvasElement;
    const rect = canvas.getBoundingClientRect();
    const px = (e.clientX - rect.left) / rect.width;
    const py = (e.clientY - rect.top) / rect.height;
    let best = 0;
    let bestD = Infinity;
    for (const cell of channelMap(state)) {
      const d = (cell.x - px) ** 2 + (cell.y - py) ** 2;
      if (d < bestD) {
        bestD = d;
        best = cell.channel;
      }
    }
    state.selectedChannel = best;
    scheduleRender();
  });
  connectStream("/stream", state, {
    onRecord: scheduleRender,
    onStateChange: scheduleRender,
  });
}

wire();
render();
