"""Domain records exchanged between the device side and the host side.

A Frame is one telemetry record at the 1 kHz logging tick: the 24 latest
filtered channel values plus the multiplexer positions and the active
emitter wavelength. Commands steer emitters, multiplexers, the firmware
smoothing filter, and streaming. Acks echo command outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_GROUPS = 8
N_CHANNELS = 24
ADC_MAX = 4095
WAVELENGTHS_NM = (660, 940)

# PWM controller limits (12-bit duty/phase, supported output frequencies)
PWM_DUTY_MAX = 4095
PWM_PHASE_MAX = 4095
PWM_FREQ_MIN_HZ = 24
PWM_FREQ_MAX_HZ = 1526

MUX_AUTO = 0xFF  # override byte meaning "resume automatic cycling"


@dataclass
class Frame:
    """One logging-tick snapshot of the acquisition state."""

    seq: int
    timestamp_us: int
    wavelength_nm: int           # 660 or 940
    mux_idx: np.ndarray          # (8,) uint8, each 0..2
    samples: np.ndarray          # (24,) uint16, each 0..4095, group-major

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.seq == other.seq
                and self.timestamp_us == other.timestamp_us
                and self.wavelength_nm == other.wavelength_nm
                and np.array_equal(self.mux_idx, other.mux_idx)
                and np.array_equal(self.samples, other.samples))


@dataclass
class FrameBatch:
    """Columnar view over a run of frames; the fast path for bulk work."""

    seq: np.ndarray               # (n,) uint32
    timestamp_us: np.ndarray      # (n,) uint64
    wavelength_nm: np.ndarray     # (n,) uint16, values in {660, 940}
    mux_idx: np.ndarray           # (n, 8) uint8
    samples: np.ndarray           # (n, 24) uint16

    def __len__(self) -> int:
        return len(self.seq)

    def frame(self, i: int) -> Frame:
        return Frame(int(self.seq[i]), int(self.timestamp_us[i]),
                     int(self.wavelength_nm[i]),
                     self.mux_idx[i].copy(), self.samples[i].copy())

    def frames(self) -> list[Frame]:
        return [self.frame(i) for i in range(len(self))]

    @classmethod
    def from_frames(cls, frames: list[Frame]) -> "FrameBatch":
        n = len(frames)
        b = cls(seq=np.empty(n, np.uint32),
                timestamp_us=np.empty(n, np.uint64),
                wavelength_nm=np.empty(n, np.uint16),
                mux_idx=np.empty((n, N_GROUPS), np.uint8),
                samples=np.empty((n, N_CHANNELS), np.uint16))
        for i, f in enumerate(frames):
            b.seq[i] = f.seq
            b.timestamp_us[i] = f.timestamp_us
            b.wavelength_nm[i] = f.wavelength_nm
            b.mux_idx[i] = f.mux_idx
            b.samples[i] = f.samples
        return b

    @classmethod
    def concat(cls, batches: list["FrameBatch"]) -> "FrameBatch":
        return cls(seq=np.concatenate([b.seq for b in batches]),
                   timestamp_us=np.concatenate([b.timestamp_us for b in batches]),
                   wavelength_nm=np.concatenate([b.wavelength_nm for b in batches]),
                   mux_idx=np.concatenate([b.mux_idx for b in batches]),
                   samples=np.concatenate([b.samples for b in batches]))


# --- control commands -------------------------------------------------------

CMD_SET_EMITTER = 0x01
CMD_MUX_OVERRIDE = 0x02
CMD_SET_IIR_CUTOFF = 0x03
CMD_STREAM = 0x04
CMD_STATUS_REQ = 0x05

ACK_OK = 0
ACK_BAD_CRC = 1
ACK_BAD_PARAM = 2

ACK_STATUS_NAMES = {ACK_OK: "ok", ACK_BAD_CRC: "bad-crc", ACK_BAD_PARAM: "bad-param"}


@dataclass
class SetEmitter:
    """Set PWM duty/frequency/phase for one emitter wavelength of a group."""

    group: int
    wavelength_nm: int
    duty: int
    freq_hz: int
    phase: int
    cmd_id: int = field(default=CMD_SET_EMITTER, init=False, repr=False)


@dataclass
class MuxOverride:
    """Pin a group's mux to one detector (0..2) or restore auto with 0xFF."""

    group: int
    channel: int
    cmd_id: int = field(default=CMD_MUX_OVERRIDE, init=False, repr=False)


@dataclass
class SetIirCutoff:
    """Retune the firmware smoothing filter cutoff (given in centi-Hz)."""

    centi_hz: int
    cmd_id: int = field(default=CMD_SET_IIR_CUTOFF, init=False, repr=False)


@dataclass
class StreamControl:
    """Enable or disable frame emission."""

    on: bool
    cmd_id: int = field(default=CMD_STREAM, init=False, repr=False)


@dataclass
class StatusRequest:
    """Request the device's current settings."""

    cmd_id: int = field(default=CMD_STATUS_REQ, init=False, repr=False)


Command = SetEmitter | MuxOverride | SetIirCutoff | StreamControl | StatusRequest


@dataclass
class Ack:
    """Command acknowledgement: echoed command id plus a status code."""

    cmd_id: int
    status: int

    @property
    def ok(self) -> bool:
        return self.status == ACK_OK

    @property
    def status_name(self) -> str:
        return ACK_STATUS_NAMES.get(self.status, f"unknown({self.status})")
