"""Session artifacts: the raw frame log (bit-exact, replayable) and the
CSV exports for ground truth, raw samples, processed hemodynamics,
heart rate, and markers.

Raw log layout: 8-byte magic "FNIRLOG1", u32 little-endian JSON header
length, the JSON header (format version + device config snapshot), then
the exact concatenation of 74-byte encoded frames.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import DeviceConfig
from .messages import FrameBatch, N_CHANNELS
from .pipeline import PipelineResult
from .physio import HemoGroundTruth
from .wire import FrameStreamParser, decode_frame_batch, encode_frame_batch

LOG_MAGIC = b"FNIRLOG1"
LOG_FORMAT_VERSION = 1


class SessionLogError(ValueError):
    pass


def write_raw_log(path, batch: FrameBatch, config: DeviceConfig) -> None:
    header = json.dumps({"format_version": LOG_FORMAT_VERSION,
                         "config": config.to_dict()},
                        sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(LOG_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(encode_frame_batch(batch))


@dataclass
class RawLog:
    config: DeviceConfig
    batch: FrameBatch
    frame_bytes: bytes


def read_raw_log(path) -> RawLog:
    blob = Path(path).read_bytes()
    if blob[:8] != LOG_MAGIC:
        raise SessionLogError(f"{path}: not a session log (bad magic)")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    header = json.loads(blob[12:12 + hlen])
    if header.get("format_version") != LOG_FORMAT_VERSION:
        raise SessionLogError(f"{path}: unsupported log format "
                              f"{header.get('format_version')}")
    config = DeviceConfig.from_dict(header["config"])
    frame_bytes = blob[12 + hlen:]
    try:
        batch = decode_frame_batch(frame_bytes)
    except Exception:
        # tolerate a damaged tail: scan with the resynchronizing parser
        parser = FrameStreamParser()
        frames = parser.feed(frame_bytes)
        batch = FrameBatch.from_frames(frames)
    return RawLog(config, batch, frame_bytes)


# --- CSV exports ---------------------------------------------------------------


def export_ground_truth_csv(path, truth: HemoGroundTruth) -> None:
    t = truth.t_s
    with open(path, "w") as f:
        f.write("t_s,channel,dhbo_um,dhbr_um\n")
        for c in range(truth.dhbo_um.shape[0]):
            hbo, hbr = truth.dhbo_um[c], truth.dhbr_um[c]
            for i in range(len(t)):
                f.write(f"{t[i]:.6f},{c},{hbo[i]:.9g},{hbr[i]:.9g}\n")


def export_raw_csv(path, batch: FrameBatch) -> None:
    """One row per channel per frame."""
    n = len(batch)
    groups = np.arange(N_CHANNELS) // 3
    with open(path, "w") as f:
        f.write("timestamp_us,seq,wavelength_nm,group,mux_ch,channel,adc_code\n")
        for i in range(n):
            t, s, wl = batch.timestamp_us[i], batch.seq[i], batch.wavelength_nm[i]
            mux = batch.mux_idx[i]
            row = batch.samples[i]
            for c in range(N_CHANNELS):
                f.write(f"{t},{s},{wl},{groups[c]},{mux[groups[c]]},{c},{row[c]}\n")


def export_processed_csv(path, result: PipelineResult) -> None:
    with open(path, "w") as f:
        f.write("t_s,channel,dhbo_um,dhbr_um,dhbo_cbsi_um,dhbr_cbsi_um\n")
        for c in sorted(result.channels):
            h = result.channels[c]
            for i in range(len(h.t_s)):
                f.write(f"{h.t_s[i]:.6f},{c},{h.dhbo_um[i]:.9g},"
                        f"{h.dhbr_um[i]:.9g},{h.cbsi_dhbo_um[i]:.9g},"
                        f"{h.cbsi_dhbr_um[i]:.9g}\n")


def export_heart_rate_csv(path, result: PipelineResult) -> None:
    with open(path, "w") as f:
        f.write("t_s,bpm\n")
        for t, bpm in zip(result.heart_rate_t_s, result.heart_rate_bpm):
            f.write(f"{t:.6f},{bpm:.6g}\n")


def export_markers_csv(path, markers: list[tuple[str, float]]) -> None:
    with open(path, "w") as f:
        f.write("label,t_s\n")
        for label, t in markers:
            f.write(f"{label},{t:.6f}\n")
