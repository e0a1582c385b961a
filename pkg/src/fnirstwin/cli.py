"""Operator command surface: simulate, process, replay, serve, selftest,
and bench, sharing the library's session plumbing.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .config import DeviceConfig, simulate_session
from .io import (export_ground_truth_csv, export_heart_rate_csv,
                 export_markers_csv, export_processed_csv, read_raw_log,
                 write_raw_log)
from .physio import ProtocolTimeline, build_protocol_timeline, default_timeline
from .pipeline import PipelineConfig, process_pipeline
from .service import HostService, ReplaySource, SimSource


def parse_protocol(text: str) -> ProtocolTimeline:
    """baseline:20,task:120,rest:60 -> timeline."""
    phases = []
    for part in text.split(","):
        label, _, dur = part.partition(":")
        if not dur:
            raise argparse.ArgumentTypeError(
                f"bad protocol phase {part!r}; want label:seconds")
        try:
            phases.append((label.strip(), float(dur)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad duration in {part!r}")
    try:
        return build_protocol_timeline(phases)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _load_config(args) -> DeviceConfig:
    if getattr(args, "config", None):
        cfg = DeviceConfig.from_json(Path(args.config).read_text())
    else:
        cfg = DeviceConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "age", None) is not None:
        cfg.age_years = args.age
    return cfg

def _out_dir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path("sessions") / stamp


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    timeline = args.protocol or default_timeline()
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    run = simulate_session(cfg, timeline, duration_s=args.duration)
    write_raw_log(out / "raw.bin", run.batch, cfg)
    export_ground_truth_csv(out / "ground_truth.csv", run.truth)
    export_markers_csv(out / "markers.csv", run.markers)
    (out / "config.json").write_text(cfg.to_json())
    print(f"wrote {len(run.batch)} frames to {out / 'raw.bin'}")
    return 0


def cmd_process(args) -> int:
    log = read_raw_log(args.input)
    cfg = log.config
    if args.age is not None:
        cfg.age_years = args.age
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    pipe_cfg = PipelineConfig(age_years=cfg.age_years)
    res = process_pipeline(log.batch, cfg.layout(), cfg.optics(), pipe_cfg,
                           afe=cfg.afe, dwell_ms=cfg.mux_dwell_ms,
                           wavelength_period_ms=cfg.wavelength_period_ms)
    export_processed_csv(out / "processed.csv", res)
    export_heart_rate_csv(out / "heart_rate.csv", res)
    print(f"processed {len(log.batch)} frames -> {out / 'processed.csv'}")
    if len(res.heart_rate_bpm):
        print(f"median heart rate: {np.median(res.heart_rate_bpm):.1f} bpm "
              f"(channel {res.heart_rate_channel})")
    return 0


def _run_service(source, args, static_dir=None) -> int:
    service = HostService()
    out = _out_dir(args)
    service.start_session(source, out)
    httpd = service.serve_http(port=args.port, bind=args.bind,
                               static_dir=static_dir)
    host, port = httpd.server_address[:2]
    print(f"serving on http://{host}:{port}  (stream: /stream, "
          f"control: /control, status: /status)")
    try:
        while not source.exhausted:
            time.sleep(0.2)
        service.stop_session()
        service.export_session()
        print(f"session complete; artifacts in {out}")
    except KeyboardInterrupt:
        service.stop_session()
        print("interrupted; session stopped")
    finally:
        service.shutdown_http()
    return 0


def cmd_replay(args) -> int:
    source = ReplaySource(args.input, speed=args.speed)
    return _run_service(source, args)


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    timeline = args.protocol or default_timeline()
    static = args.static
    if static is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static = str(candidate) if candidate.is_dir() else None
    source = SimSource(cfg, timeline, duration_s=args.duration,
                       speed=args.speed if args.speed is not None else 1.0)
    return _run_service(source, args, static_dir=static)


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return run_selftest(verbose=True)


def cmd_bench(args) -> int:
    from .wire import decode_frame_batch, encode_frame_batch
    cfg = DeviceConfig(seed=123)
    duration = args.duration or 20.0
    run = simulate_session(cfg, duration_s=duration,
                           timeline=build_protocol_timeline(
                               [("baseline", 10.0), ("task", max(duration, 10.0))]))
    n = len(run.batch)
    t0 = time.perf_counter()
    blob = encode_frame_batch(run.batch)
    t_enc = time.perf_counter() - t0
    t0 = time.perf_counter()
    batch = decode_frame_batch(blob)
    t_dec = time.perf_counter() - t0
    t0 = time.perf_counter()
    process_pipeline(batch, cfg.layout(), cfg.optics(),
                     PipelineConfig(baseline_window_s=min(10.0, duration / 2)),
                     afe=cfg.afe)
    t_pipe = time.perf_counter() - t0
    total = t_enc + t_dec + t_pipe
    print(f"frames: {n}")
    print(f"encode:   {n / t_enc:12.0f} frames/s")
    print(f"decode:   {n / t_dec:12.0f} frames/s")
    print(f"pipeline: {n / t_pipe:12.0f} frames/s")
    print(f"combined: {n / total:12.0f} frames/s")
    if n / total < 1000:
        print("WARNING: below the 1000 frames/s real-time floor")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fnirstwin",
        description="Software twin of a wearable 24-channel fNIRS system")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the device twin, write a raw log")
    sim.add_argument("--duration", type=float, default=None,
                     help="seconds to simulate (default: protocol length)")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--protocol", type=parse_protocol, default=None,
                     help="phases, e.g. baseline:20,task:120,rest:60")
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--age", type=float, default=None)
    sim.add_argument("--config", default=None, help="device config JSON file")
    sim.set_defaults(func=cmd_simulate)

    proc = sub.add_parser("process", help="raw log in, processed CSV out")
    proc.add_argument("input", help="raw .bin session log")
    proc.add_argument("--out", default=None)
    proc.add_argument("--age", type=float, default=None)
    proc.set_defaults(func=cmd_process)

    rep = sub.add_parser("replay", help="stream a recorded log into serve")
    rep.add_argument("input", help="raw .bin session log")
    rep.add_argument("--speed", type=float, default=10.0,
                     help="replay speed multiple (0 = free run)")
    rep.add_argument("--port", type=int, default=None)
    rep.add_argument("--bind", default="127.0.0.1")
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_replay)

    srv = sub.add_parser("serve", help="live simulated session + endpoints")
    srv.add_argument("--duration", type=float, default=None)
    srv.add_argument("--seed", type=int, default=None)
    srv.add_argument("--protocol", type=parse_protocol, default=None)
    srv.add_argument("--speed", type=float, default=1.0,
                     help="simulation speed multiple (0 = free run)")
    srv.add_argument("--port", type=int, default=None)
    srv.add_argument("--bind", default="127.0.0.1")
    srv.add_argument("--out", default=None)
    srv.add_argument("--age", type=float, default=None)
    srv.add_argument("--config", default=None)
    srv.add_argument("--static", default=None,
                     help="directory of operator-console static files")
    srv.set_defaults(func=cmd_serve)

    st = sub.add_parser("selftest", help="run the invariant suite")
    st.set_defaults(func=cmd_selftest)

    be = sub.add_parser("bench", help="frames/s through encode+decode+pipeline")
    be.add_argument("--duration", type=float, default=None)
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
