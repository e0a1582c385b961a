"""Session orchestration: a frame source (simulator or replayed log), a
lossless recorder, a live processing loop, fan-out publishing to
subscribers, and operator control relayed through the wire protocol.

Endpoints (HTTP, newline-delimited JSON records on /stream):
    GET  /stream   subscribe; receives raw (<= 50 Hz), processed (2 Hz),
                   status, and ack records as single JSON lines
    POST /control  command document in, ack JSON out
    GET  /status   current device settings and session state

The recorder is the only lossless consumer: it writes every encoded
frame byte before anything else sees the batch. Display paths drop
oldest records when a subscriber lags; the recorder is never throttled.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path


from .config import DeviceConfig, build_sim
from .ecu import EcuState, handle_command, step_ecu
from .io import (export_ground_truth_csv, export_heart_rate_csv,
                 export_markers_csv, export_processed_csv, export_raw_csv,
                 read_raw_log, LOG_MAGIC, LOG_FORMAT_VERSION)
from .messages import (ACK_STATUS_NAMES, Ack, FrameBatch, MUX_AUTO,
                       MuxOverride, SetEmitter, SetIirCutoff, StatusRequest,
                       StreamControl)
from .physio import ProtocolTimeline
from .pipeline import PipelineConfig, PipelineError, process_pipeline
from .wire import (FrameStreamParser, decode_ack, decode_command, encode_ack,
                   encode_command, encode_frame_batch)

DEFAULT_PORT = 8765
PORT_ENV_VAR = "FNIRSTWIN_PORT"

RAW_PUBLISH_MAX_HZ = 50
PROCESSED_PUBLISH_HZ = 2.0
LIVE_WINDOW_S = 60.0
SUBSCRIBER_BUFFER = 512


class ServiceError(RuntimeError):
    pass


class SourceBusy(ServiceError):
    pass


class ControlError(ValueError):
    pass


# --- frame sources -------------------------------------------------------------


class SimSource:
    """Live firmware emulation driven in small deterministic chunks."""

    kind = "sim"

    def __init__(self, config: DeviceConfig,
                 timeline: ProtocolTimeline | None = None,
                 duration_s: float | None = None,
                 speed: float | None = 1.0):
        self.config = config
        state, sampler, truth, timeline = build_sim(config, timeline, duration_s)
        self.state: EcuState = state
        self.sampler = sampler
        self.truth = truth
        self.timeline = timeline
        self.duration_us = int(round((duration_s or timeline.total_duration_s) * 1e6))
        self.speed = speed          # None or <=0: free-running
        self._lock = threading.Lock()
        self._busy = False

    def acquire(self):
        with self._lock:
            if self._busy:
                raise SourceBusy("simulator already attached to a session")
            self._busy = True

    def release(self):
        with self._lock:
            self._busy = False

    @property
    def exhausted(self) -> bool:
        return self.state.virtual_time_us >= self.duration_us

    def poll(self, chunk_s: float = 0.1) -> tuple[FrameBatch, bytes]:
        remaining = self.duration_us - self.state.virtual_time_us
        if remaining <= 0:
            return None, b""
        step_us = min(int(chunk_s * 1e6), remaining)
        with self._lock:
            batch = step_ecu(self.state, self.sampler, step_us)
        if self.speed and self.speed > 0:
            time.sleep(step_us * 1e-6 / self.speed)
        return batch, encode_frame_batch(batch)

    def submit_command(self, cmd_bytes: bytes) -> bytes:
        """Device-side handling: decode, apply, return encoded ack."""
        try:
            cmd = decode_command(cmd_bytes)
        except Exception:
            return encode_ack(Ack(cmd_id=0, status=1))   # bad-crc / undecodable
        with self._lock:
            ack = handle_command(self.state, cmd)
        return encode_ack(ack)

    def status(self) -> dict:
        with self._lock:
            return self.state.status()


class PassthroughSource:
    """Frames arriving as raw bytes from an external producer (a serial
    bridge, a pipe, a socket file object): scanned and validated by the
    resynchronizing parser; no control channel."""

    kind = "serial-passthrough"

    def __init__(self, stream, config: DeviceConfig | None = None,
                 chunk_bytes: int = 4096):
        self._stream = stream
        self.config = config or DeviceConfig()
        self.chunk_bytes = chunk_bytes
        self.parser = FrameStreamParser()
        self.timeline = None
        self.truth = None
        self._eof = False
        self._busy = False
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            if self._busy:
                raise SourceBusy("stream already attached to a session")
            self._busy = True

    def release(self):
        with self._lock:
            self._busy = False

    @property
    def exhausted(self) -> bool:
        return self._eof

    def poll(self, chunk_s: float = 0.1) -> tuple[FrameBatch, bytes]:
        data = self._stream.read(self.chunk_bytes)
        if not data:
            self._eof = True
            return None, b""
        frames = self.parser.feed(data)
        if not frames:
            return FrameBatch.from_frames([]), b""
        batch = FrameBatch.from_frames(frames)
        # recorder gets the re-encoded validated frames (garbage dropped)
        return batch, encode_frame_batch(batch)

    def submit_command(self, cmd_bytes: bytes) -> bytes:
        return encode_ack(Ack(cmd_id=0, status=2))        # no device attached

    def status(self) -> dict:
        d = self.parser.diagnostics
        return {"frames": d.frames, "resyncs": d.resyncs,
                "crc_failures": d.crc_failures}


class ReplaySource:
    """Streams a recorded raw log at a multiple of real time."""

    kind = "replay"

    def __init__(self, path, speed: float | None = 10.0):
        if not Path(path).exists():
            raise ServiceError(f"replay source not found: {path}")
        log = read_raw_log(path)
        self.config = log.config
        self.batch = log.batch
        self.frame_bytes = log.frame_bytes
        self.speed = speed
        self.timeline = None
        self.truth = None
        self._cursor = 0
        self._busy = False
        self._lock = threading.Lock()

    def acquire(self):
        with self._lock:
            if self._busy:
                raise SourceBusy("replay already attached to a session")
            self._busy = True

    def release(self):
        with self._lock:
            self._busy = False

    @property
    def exhausted(self) -> bool:
        return self._cursor >= len(self.batch)

    def poll(self, chunk_s: float = 0.1) -> tuple[FrameBatch, bytes]:
        if self.exhausted:
            return None, b""
        rate = self.config.logging_rate_hz
        n = max(1, int(chunk_s * rate))
        lo, hi = self._cursor, min(self._cursor + n, len(self.batch))
        self._cursor = hi
        sl = slice(lo, hi)
        batch = FrameBatch(self.batch.seq[sl], self.batch.timestamp_us[sl],
                           self.batch.wavelength_nm[sl], self.batch.mux_idx[sl],
                           self.batch.samples[sl])
        raw = self.frame_bytes[lo * 74:hi * 74]
        if self.speed and self.speed > 0:
            time.sleep((hi - lo) / rate / self.speed)
        return batch, raw

    def submit_command(self, cmd_bytes: bytes) -> bytes:
        return encode_ack(Ack(cmd_id=0, status=2))        # replay: no device

    def status(self) -> dict:
        return {"replay_frames": len(self.batch), "cursor": self._cursor}


# --- control-document validation -------------------------------------------------


def command_from_document(doc: dict):
    """Validate an operator command document and build the Command.

    Structural problems (unknown command, missing fields, nonexistent
    group or wavelength, values that do not fit the wire encoding) are
    rejected here, before encoding. Device parameter ranges such as the
    PWM frequency limits are the device's call: those commands are
    relayed and the device's bad-param nack is surfaced verbatim.
    """
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ControlError("command document must contain exactly one command")
    kind, body = next(iter(doc.items()))
    if not isinstance(body, dict):
        raise ControlError(f"{kind}: body must be an object")
    try:
        if kind == "set_emitter":
            cmd = SetEmitter(int(body["group"]), int(body["wavelength_nm"]),
                             int(body["duty"]), int(body["freq_hz"]),
                             int(body["phase"]))
            if not 0 <= cmd.group < 8:
                raise ControlError(f"group {cmd.group} out of range")
            if cmd.wavelength_nm not in (660, 940):
                raise ControlError(f"wavelength {cmd.wavelength_nm} invalid")
            for fname in ("duty", "freq_hz", "phase"):
                if not 0 <= getattr(cmd, fname) <= 0xFFFF:
                    raise ControlError(f"{fname} does not fit the wire format")
            return cmd
        if kind == "mux_override":
            cmd = MuxOverride(int(body["group"]), int(body["channel"]))
            if not 0 <= cmd.group < 8:
                raise ControlError(f"group {cmd.group} out of range")
            if cmd.channel not in (0, 1, 2, MUX_AUTO):
                raise ControlError(f"channel {cmd.channel} invalid")
            return cmd
        if kind == "set_iir_cutoff":
            cmd = SetIirCutoff(int(body["centi_hz"]))
            if not 0 <= cmd.centi_hz <= 0xFFFFFFFF:
                raise ControlError("centi_hz does not fit the wire format")
            return cmd
        if kind == "stream":
            return StreamControl(bool(body["on"]))
        if kind == "status_req":
            return StatusRequest()
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ControlError):
            raise
        raise ControlError(f"{kind}: malformed body ({exc})") from exc
    raise ControlError(f"unknown command {kind!r}")


# --- session ------------------------------------------------------------------


@dataclass
class Subscriber:
    records: deque = field(default_factory=lambda: deque(maxlen=SUBSCRIBER_BUFFER))
    cond: threading.Condition = field(default_factory=threading.Condition)
    dropped: int = 0
    closed: bool = False

    def push(self, line: str) -> None:
        with self.cond:
            if len(self.records) == self.records.maxlen:
                self.dropped += 1
            self.records.append(line)
            self.cond.notify()

    def pop(self, timeout: float = 0.5) -> str | None:
        with self.cond:
            if not self.records:
                self.cond.wait(timeout)
            if not self.records:
                return None
            return self.records.popleft()


@dataclass
class Session:
    session_id: int
    source: object
    out_dir: Path
    state: str = "streaming"                 # idle | streaming | stopped
    markers: list = field(default_factory=list)
    frames_recorded: int = 0
    recorder_losses: int = 0

    def annotate(self, label: str, t_s: float) -> list:
        if t_s < 0:
            raise ServiceError(f"marker time must be >= 0, got {t_s}")
        self.markers.append((str(label), float(t_s)))
        self.markers.sort(key=lambda m: m[1])
        return self.markers


class HostService:
    """Owns at most one streaming session and its fan-out."""

    def __init__(self, live_pipeline: PipelineConfig | None = None):
        self._session: Session | None = None
        self._session_counter = 0
        self._subscribers: list[Subscriber] = []
        self._sub_lock = threading.Lock()
        self._reader: threading.Thread | None = None
        self._processor: threading.Thread | None = None
        self._stop = threading.Event()
        self._recent: deque[FrameBatch] = deque()
        self._recent_lock = threading.Lock()
        self._raw_file = None
        self._live_pipeline = live_pipeline
        self._httpd = None

    # -- lifecycle --------------------------------------------------------

    def start_session(self, source, out_dir) -> int:
        if self._session is not None and self._session.state == "streaming":
            raise SourceBusy("another session is already streaming")
        source.acquire()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self._session_counter += 1
        session = Session(self._session_counter, source, out_dir)
        for label, t in (source.timeline.markers() if source.timeline else []):
            session.markers.append((label, t))
        self._session = session
        self._stop.clear()
        self._recent.clear()
        self._raw_file = open(out_dir / "raw.bin", "wb")
        self._write_log_header()
        self._reader = threading.Thread(target=self._reader_loop, daemon=True)
        self._processor = threading.Thread(target=self._processor_loop, daemon=True)
        self._reader.start()
        self._processor.start()
        self._publish(self._status_record())
        return session.session_id

    def _write_log_header(self):
        import struct as _struct
        header = json.dumps({"format_version": LOG_FORMAT_VERSION,
                             "config": self._session.source.config.to_dict()},
                            sort_keys=True).encode()
        self._raw_file.write(LOG_MAGIC)
        self._raw_file.write(_struct.pack("<I", len(header)))
        self._raw_file.write(header)

    def wait(self, timeout: float | None = None) -> bool:
        """Block until the source is exhausted; True if it finished."""
        t0 = time.monotonic()
        while not self._session.source.exhausted:
            if timeout is not None and time.monotonic() - t0 > timeout:
                return False
            if self._stop.is_set():
                return False
            time.sleep(0.02)
        while self._reader and self._reader.is_alive():
            self._reader.join(0.1)
            break
        return True

    def stop_session(self) -> None:
        session = self._session
        if session is None:
            return
        self._stop.set()
        for t in (self._reader, self._processor):
            if t and t.is_alive():
                t.join(2.0)
        if self._raw_file:
            self._raw_file.flush()
            self._raw_file.close()
            self._raw_file = None
        session.state = "stopped"
        session.source.release()

    # -- reader / recorder -------------------------------------------------

    def _reader_loop(self):
        session = self._session
        source = session.source
        decim = max(1, int(round(source.config.logging_rate_hz / RAW_PUBLISH_MAX_HZ)))
        while not self._stop.is_set() and not source.exhausted:
            batch, raw = source.poll()
            if batch is None or len(batch) == 0:
                continue
            # lossless path first, before any display fan-out
            try:
                self._raw_file.write(raw)
            except Exception:
                session.recorder_losses += len(batch)
                self._publish(json.dumps({"type": "status", "error":
                                          "recorder write failure"}))
                self._stop.set()
                break
            session.frames_recorded += len(batch)
            with self._recent_lock:
                self._recent.append(batch)
                limit = int(LIVE_WINDOW_S * source.config.logging_rate_hz)
                total = sum(len(b) for b in self._recent)
                while total - len(self._recent[0]) > limit:
                    total -= len(self._recent.popleft())
            for i in range(0, len(batch), decim):
                self._publish(json.dumps({
                    "type": "raw",
                    "t_s": round(int(batch.timestamp_us[i]) * 1e-6, 6),
                    "seq": int(batch.seq[i]),
                    "wavelength_nm": int(batch.wavelength_nm[i]),
                    "samples": batch.samples[i].tolist(),
                }))
        if self._raw_file:
            self._raw_file.flush()

    # -- live processing ----------------------------------------------------

    def _processor_loop(self):
        session = self._session
        source = session.source
        period = 1.0 / PROCESSED_PUBLISH_HZ
        next_tick = time.monotonic() + period
        while not self._stop.is_set():
            # hold the cadence: account for compute time inside the period
            time.sleep(max(0.0, next_tick - time.monotonic()))
            next_tick = max(next_tick + period, time.monotonic())
            with self._recent_lock:
                batches = list(self._recent)
            if not batches:
                if source.exhausted:
                    break
                continue
            window = FrameBatch.concat(batches)
            span = (int(window.timestamp_us[-1]) - int(window.timestamp_us[0])) * 1e-6
            if span < 5.0:
                continue
            cfg = self._live_pipeline or PipelineConfig(
                baseline_window_s=min(10.0, span / 3))
            try:
                res = process_pipeline(window, source.config.layout(),
                                       source.config.optics(), cfg,
                                       afe=source.config.afe,
                                       dwell_ms=source.config.mux_dwell_ms,
                                       wavelength_period_ms=source.config.wavelength_period_ms)
            except PipelineError:
                continue
            channels = {}
            for c, h in res.channels.items():
                if len(h.t_s) == 0:
                    continue
                channels[str(c)] = {"dhbo": round(float(h.cbsi_dhbo_um[-1]), 6),
                                    "dhbr": round(float(h.cbsi_dhbr_um[-1]), 6)}
            rec = {"type": "processed",
                   "t_s": round(int(window.timestamp_us[-1]) * 1e-6, 6),
                   "channels": channels}
            if len(res.heart_rate_bpm):
                rec["hr_bpm"] = round(float(res.heart_rate_bpm[-1]), 2)
            self._publish(json.dumps(rec))
            if source.exhausted:
                break

    # -- pub/sub -------------------------------------------------------------

    def subscribe(self) -> Subscriber:
        sub = Subscriber()
        with self._sub_lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber) -> None:
        with self._sub_lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)
        sub.closed = True

    def _publish(self, line: str) -> None:
        with self._sub_lock:
            subs = list(self._subscribers)
        for sub in subs:
            sub.push(line)

    # -- control -------------------------------------------------------------

    def apply_control(self, doc: dict) -> dict:
        session = self._session
        if session is None or session.state != "streaming":
            raise ServiceError("no streaming session")
        cmd = command_from_document(doc)          # raises ControlError early
        cmd_bytes = encode_command(cmd)
        ack = decode_ack(session.source.submit_command(cmd_bytes))
        record = {"type": "ack", "cmd_id": ack.cmd_id,
                  "status": ACK_STATUS_NAMES.get(ack.status, "unknown"),
                  "ok": ack.ok}
        self._publish(json.dumps(record))
        self._publish(self._status_record())
        return record

    def _status_record(self) -> str:
        session = self._session
        doc = {"type": "status",
               "session_id": session.session_id if session else None,
               "state": session.state if session else "idle",
               "source": session.source.kind if session else None,
               "markers": [list(m) for m in (session.markers if session else [])]}
        if session:
            doc["device"] = session.source.status()
        return json.dumps(doc)

    def status(self) -> dict:
        return json.loads(self._status_record())

    def annotate(self, label: str, t_s: float) -> list:
        session = self._session
        if session is None or session.state not in ("streaming", "stopped"):
            raise ServiceError("no session to annotate")
        markers = session.annotate(label, t_s)
        self._publish(self._status_record())
        return markers

    # -- exports ---------------------------------------------------------------

    def export_session(self, pipeline_config: PipelineConfig | None = None) -> dict:
        """Write CSV exports next to the raw log; returns artifact paths."""
        session = self._session
        if session is None:
            raise ServiceError("no session")
        out = session.out_dir
        source = session.source
        log = read_raw_log(out / "raw.bin")
        artifacts = {"raw_log": str(out / "raw.bin")}
        export_raw_csv(out / "raw.csv", log.batch)
        artifacts["raw_csv"] = str(out / "raw.csv")
        res = process_pipeline(log.batch, source.config.layout(),
                               source.config.optics(),
                               pipeline_config or PipelineConfig(),
                               afe=source.config.afe,
                               dwell_ms=source.config.mux_dwell_ms,
                               wavelength_period_ms=source.config.wavelength_period_ms)
        export_processed_csv(out / "processed.csv", res)
        artifacts["processed_csv"] = str(out / "processed.csv")
        export_heart_rate_csv(out / "heart_rate.csv", res)
        artifacts["heart_rate_csv"] = str(out / "heart_rate.csv")
        export_markers_csv(out / "markers.csv", session.markers)
        artifacts["markers_csv"] = str(out / "markers.csv")
        if getattr(source, "truth", None) is not None:
            export_ground_truth_csv(out / "ground_truth.csv", source.truth)
            artifacts["ground_truth_csv"] = str(out / "ground_truth.csv")
        (out / "config.json").write_text(source.config.to_json())
        artifacts["config_json"] = str(out / "config.json")
        return artifacts

    # -- HTTP front door ---------------------------------------------------------

    def serve_http(self, port: int | None = None, bind: str = "127.0.0.1",
                   static_dir: str | None = None) -> ThreadingHTTPServer:
        if port is None:
            port = int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT))
        service = self
        static_root = Path(static_dir) if static_dir else None

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _json(self, code: int, doc: dict):
                body = json.dumps(doc).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/stream":
                    sub = service.subscribe()
                    try:
                        self.send_response(200)
                        self.send_header("Content-Type",
                                         "application/x-ndjson")
                        self.send_header("Cache-Control", "no-store")
                        self.send_header("Access-Control-Allow-Origin", "*")
                        self.send_header("Connection", "close")
                        self.end_headers()
                        while not sub.closed:
                            line = sub.pop(timeout=0.5)
                            if line is None:
                                if service._stop.is_set():
                                    break
                                continue
                            if sub.dropped:
                                note = json.dumps({"type": "status",
                                                   "dropped": sub.dropped})
                                self.wfile.write((note + "\n").encode())
                                sub.dropped = 0
                            self.wfile.write((line + "\n").encode())
                            self.wfile.flush()
                    except (BrokenPipeError, ConnectionResetError):
                        pass
                    finally:
                        service.unsubscribe(sub)
                    return
                if self.path == "/status":
                    self._json(200, service.status())
                    return
                if static_root is not None:
                    rel = "index.html" if self.path in ("/", "") else self.path.lstrip("/")
                    target = (static_root / rel).resolve()
                    if (target.is_file()
                            and str(target).startswith(str(static_root.resolve()))):
                        body = target.read_bytes()
                        ctype = {"html": "text/html", "js": "text/javascript",
                                 "css": "text/css", "json": "application/json",
                                 "map": "application/json"}.get(
                                     target.suffix.lstrip("."),
                                     "application/octet-stream")
                        self.send_response(200)
                        self.send_header("Content-Type", ctype)
                        self.send_header("Content-Length", str(len(body)))
                        self.end_headers()
                        self.wfile.write(body)
                        return
                self._json(404, {"error": f"unknown path {self.path}"})

            def do_POST(self):
                if self.path != "/control":
                    self._json(404, {"error": f"unknown path {self.path}"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    doc = json.loads(self.rfile.read(length) or b"{}")
                    record = service.apply_control(doc)
                    self._json(200, record)
                except ControlError as exc:
                    self._json(422, {"type": "ack", "status": "rejected",
                                     "ok": False, "error": str(exc)})
                except ServiceError as exc:
                    self._json(409, {"error": str(exc)})
                except Exception as exc:
                    self._json(400, {"error": str(exc)})

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods",
                                 "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()

        httpd = ThreadingHTTPServer((bind, port), Handler)
        httpd.daemon_threads = True
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        self._httpd = httpd
        return httpd

    def shutdown_http(self):
        if self._httpd:
            self._httpd.shutdown()
            self._httpd = None
