"""Binary telemetry and control codec.

Telemetry frame, 74 bytes, little-endian:

    offset  size  field
    0       2     magic 0xA5 0x5A
    2       1     version (0x01)
    3       1     flags: bit0 wavelength (0 = 660 nm, 1 = 940 nm), bits 1-7 zero
    4       4     seq, u32
    8       8     timestamp_us, u64
    16      8     mux_idx[8], u8 each (0..2)
    24      48    samples[24], u16 each (0..4095), group-major
    72      2     CRC-16 over bytes 0..71

Control command: magic 0xC3, cmd_id u8, payload length u8, payload,
CRC-16 over all preceding bytes. Ack: magic 0x3C, echoed cmd_id,
status u8 (0 ok, 1 bad-crc, 2 bad-param), CRC-16.

CRC parameterization is CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF,
no reflection, no final xor (check value of b"123456789" is 0x29B1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .messages import (ACK_BAD_CRC, ACK_BAD_PARAM, ACK_OK, ADC_MAX,
                       CMD_MUX_OVERRIDE, CMD_SET_EMITTER, CMD_SET_IIR_CUTOFF,
                       CMD_STATUS_REQ, CMD_STREAM, Ack, Command, Frame,
                       FrameBatch, MuxOverride, SetEmitter, SetIirCutoff,
                       StatusRequest, StreamControl, N_CHANNELS, N_GROUPS)

FRAME_MAGIC = b"\xa5\x5a"
FRAME_VERSION = 0x01
FRAME_SIZE = 74
CMD_MAGIC = 0xC3
ACK_MAGIC = 0x3C

_FRAME_STRUCT = struct.Struct("<2sBBIQ8B24H")   # covers bytes 0..71
_CRC_STRUCT = struct.Struct("<H")

# payload sizes per command id
_CMD_PAYLOAD_SIZE = {
    CMD_SET_EMITTER: 8,
    CMD_MUX_OVERRIDE: 2,
    CMD_SET_IIR_CUTOFF: 4,
    CMD_STREAM: 1,
    CMD_STATUS_REQ: 0,
}


class WireError(ValueError):
    """Base class for codec failures."""


class BadMagic(WireError):
    pass


class BadVersion(WireError):
    pass


class CrcMismatch(WireError):
    pass


class FieldRange(WireError):
    """A decoded field is outside its valid range."""


class BadLength(WireError):
    pass


class UnknownCommand(WireError):
    pass


def _build_crc_table(poly: int = 0x1021) -> np.ndarray:
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
        table[byte] = crc
    return table


_CRC_TABLE = _build_crc_table()
_CRC_TABLE_LIST = _CRC_TABLE.tolist()


def crc16(data: bytes, init: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE of `data`."""
    crc = init
    table = _CRC_TABLE_LIST
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ table[((crc >> 8) ^ b) & 0xFF]
    return crc


def _crc16_batch(rows: np.ndarray) -> np.ndarray:
    """CRC-16 of each row of a (n, m) uint8 matrix."""
    crc = np.full(rows.shape[0], 0xFFFF, dtype=np.uint16)
    for j in range(rows.shape[1]):
        idx = ((crc >> 8) ^ rows[:, j]).astype(np.uint16) & 0xFF
        crc = ((crc << 8) ^ _CRC_TABLE[idx]).astype(np.uint16)
    return crc


# --- frames ------------------------------------------------------------------


def encode_frame(frame: Frame) -> bytes:
    """Serialize one frame to its 74-byte wire form."""
    samples = np.asarray(frame.samples)
    mux = np.asarray(frame.mux_idx)
    if samples.shape != (N_CHANNELS,) or np.any(samples > ADC_MAX):
        raise FieldRange(f"samples must be 24 values <= {ADC_MAX}")
    if mux.shape != (N_GROUPS,) or np.any(mux > 2):
        raise FieldRange("mux_idx must be 8 values <= 2")
    if frame.wavelength_nm not in (660, 940):
        raise FieldRange(f"wavelength {frame.wavelength_nm} not in (660, 940)")
    flags = 1 if frame.wavelength_nm == 940 else 0
    body = _FRAME_STRUCT.pack(FRAME_MAGIC, FRAME_VERSION, flags,
                              frame.seq, frame.timestamp_us,
                              *mux.tolist(), *samples.tolist())
    return body + _CRC_STRUCT.pack(crc16(body))


def decode_frame(buf: bytes) -> Frame:
    """Decode 74 bytes starting at a magic boundary; validates everything."""
    if len(buf) < FRAME_SIZE:
        raise BadLength(f"need {FRAME_SIZE} bytes, got {len(buf)}")
    buf = buf[:FRAME_SIZE]
    if buf[:2] != FRAME_MAGIC:
        raise BadMagic(f"bad frame magic {buf[:2]!r}")
    if buf[2] != FRAME_VERSION:
        raise BadVersion(f"unsupported frame version {buf[2]}")
    (crc_rx,) = _CRC_STRUCT.unpack_from(buf, FRAME_SIZE - 2)
    if crc16(buf[:-2]) != crc_rx:
        raise CrcMismatch("frame CRC mismatch")
    _, _, flags, seq, t_us, *rest = _FRAME_STRUCT.unpack(buf[:-2])
    if flags & ~0x01:
        raise FieldRange(f"reserved flag bits set: {flags:#04x}")
    mux = np.array(rest[:N_GROUPS], dtype=np.uint8)
    samples = np.array(rest[N_GROUPS:], dtype=np.uint16)
    if np.any(mux > 2):
        raise FieldRange("mux index > 2")
    if np.any(samples > ADC_MAX):
        raise FieldRange(f"sample > {ADC_MAX}")
    wavelength = 940 if flags & 1 else 660
    return Frame(seq, t_us, wavelength, mux, samples)


def encode_frame_batch(batch: FrameBatch) -> bytes:
    """Serialize a FrameBatch; identical bytes to per-frame encode_frame."""
    n = len(batch)
    rows = np.empty((n, FRAME_SIZE), dtype=np.uint8)
    rows[:, 0] = 0xA5
    rows[:, 1] = 0x5A
    rows[:, 2] = FRAME_VERSION
    rows[:, 3] = (batch.wavelength_nm == 940).astype(np.uint8)
    rows[:, 4:8] = batch.seq.astype("<u4").view(np.uint8).reshape(n, 4)
    rows[:, 8:16] = batch.timestamp_us.astype("<u8").view(np.uint8).reshape(n, 8)
    rows[:, 16:24] = batch.mux_idx
    rows[:, 24:72] = batch.samples.astype("<u2").view(np.uint8).reshape(n, 48)
    crc = _crc16_batch(rows[:, :72])
    rows[:, 72:74] = crc.astype("<u2").view(np.uint8).reshape(n, 2)
    return rows.tobytes()


def decode_frame_batch(buf: bytes) -> FrameBatch:
    """Fast columnar decode of an exact concatenation of valid frames.

    Raises a WireError on any irregularity; callers wanting resilience
    should fall back to FrameStreamParser.
    """
    if len(buf) % FRAME_SIZE != 0:
        raise BadLength(f"buffer length {len(buf)} not a multiple of {FRAME_SIZE}")
    rows = np.frombuffer(buf, dtype=np.uint8).reshape(-1, FRAME_SIZE)
    if not (np.all(rows[:, 0] == 0xA5) and np.all(rows[:, 1] == 0x5A)):
        raise BadMagic("misaligned frame magic in batch")
    if not np.all(rows[:, 2] == FRAME_VERSION):
        raise BadVersion("unsupported frame version in batch")
    if np.any(rows[:, 3] & 0xFE):
        raise FieldRange("reserved flag bits set in batch")
    crc_rx = rows[:, 72:74].copy().view("<u2").ravel()
    if not np.array_equal(_crc16_batch(rows[:, :72]), crc_rx):
        raise CrcMismatch("frame CRC mismatch in batch")
    mux = rows[:, 16:24].copy()
    samples = rows[:, 24:72].copy().view("<u2").reshape(-1, N_CHANNELS)
    if np.any(mux > 2):
        raise FieldRange("mux index > 2 in batch")
    if np.any(samples > ADC_MAX):
        raise FieldRange(f"sample > {ADC_MAX} in batch")
    return FrameBatch(
        seq=rows[:, 4:8].copy().view("<u4").ravel(),
        timestamp_us=rows[:, 8:16].copy().view("<u8").ravel(),
        wavelength_nm=np.where(rows[:, 3] & 1, 940, 660).astype(np.uint16),
        mux_idx=mux,
        samples=samples,
    )


# --- commands and acks -------------------------------------------------------


def encode_command(cmd: Command) -> bytes:
    """Serialize a control command (magic, id, length, payload, CRC)."""
    if isinstance(cmd, SetEmitter):
        wl_flag = {660: 0, 940: 1}.get(cmd.wavelength_nm)
        if wl_flag is None:
            raise FieldRange(f"wavelength {cmd.wavelength_nm} not in (660, 940)")
        payload = struct.pack("<BBHHH", cmd.group, wl_flag,
                              cmd.duty, cmd.freq_hz, cmd.phase)
    elif isinstance(cmd, MuxOverride):
        payload = struct.pack("<BB", cmd.group, cmd.channel)
    elif isinstance(cmd, SetIirCutoff):
        payload = struct.pack("<I", cmd.centi_hz)
    elif isinstance(cmd, StreamControl):
        payload = struct.pack("<B", 1 if cmd.on else 0)
    elif isinstance(cmd, StatusRequest):
        payload = b""
    else:
        raise UnknownCommand(f"cannot encode {type(cmd).__name__}")
    head = struct.pack("<BBB", CMD_MAGIC, cmd.cmd_id, len(payload))
    return head + payload + _CRC_STRUCT.pack(crc16(head + payload))


def decode_command(buf: bytes) -> Command:
    """Decode one control command; validates magic, length, and CRC."""
    if len(buf) < 5:
        raise BadLength(f"command too short: {len(buf)} bytes")
    if buf[0] != CMD_MAGIC:
        raise BadMagic(f"bad command magic {buf[0]:#04x}")
    cmd_id, length = buf[1], buf[2]
    expected = _CMD_PAYLOAD_SIZE.get(cmd_id)
    if expected is None:
        raise UnknownCommand(f"unknown command id {cmd_id:#04x}")
    if length != expected:
        raise BadLength(f"cmd {cmd_id:#04x}: declared length {length}, "
                        f"expected {expected}")
    total = 3 + length + 2
    if len(buf) < total:
        raise BadLength(f"cmd {cmd_id:#04x}: need {total} bytes, got {len(buf)}")
    body, crc_rx = buf[:3 + length], buf[3 + length:total]
    if crc16(body) != _CRC_STRUCT.unpack(crc_rx)[0]:
        raise CrcMismatch("command CRC mismatch")
    payload = body[3:]
    if cmd_id == CMD_SET_EMITTER:
        group, wl_flag, duty, freq, phase = struct.unpack("<BBHHH", payload)
        if wl_flag > 1:
            raise FieldRange(f"wavelength flag {wl_flag} not 0/1")
        return SetEmitter(group, 940 if wl_flag else 660, duty, freq, phase)
    if cmd_id == CMD_MUX_OVERRIDE:
        group, channel = struct.unpack("<BB", payload)
        return MuxOverride(group, channel)
    if cmd_id == CMD_SET_IIR_CUTOFF:
        (centi_hz,) = struct.unpack("<I", payload)
        return SetIirCutoff(centi_hz)
    if cmd_id == CMD_STREAM:
        (on,) = struct.unpack("<B", payload)
        return StreamControl(bool(on))
    return StatusRequest()


def encode_ack(ack: Ack) -> bytes:
    body = struct.pack("<BBB", ACK_MAGIC, ack.cmd_id, ack.status)
    return body + _CRC_STRUCT.pack(crc16(body))


def decode_ack(buf: bytes) -> Ack:
    if len(buf) < 5:
        raise BadLength(f"ack too short: {len(buf)} bytes")
    if buf[0] != ACK_MAGIC:
        raise BadMagic(f"bad ack magic {buf[0]:#04x}")
    if crc16(buf[:3]) != _CRC_STRUCT.unpack(buf[3:5])[0]:
        raise CrcMismatch("ack CRC mismatch")
    if buf[2] not in (ACK_OK, ACK_BAD_CRC, ACK_BAD_PARAM):
        raise FieldRange(f"unknown ack status {buf[2]}")
    return Ack(cmd_id=buf[1], status=buf[2])


# --- stream parser -----------------------------------------------------------


@dataclass
class ParserDiagnostics:
    """Counters describing what the parser had to do to the byte stream."""

    frames: int = 0
    resyncs: int = 0
    crc_failures: int = 0
    decode_errors: int = 0
    bytes_skipped: int = 0


class FrameStreamParser:
    """Incremental scanner turning an arbitrary byte stream into frames.

    Feed bytes in any chunking; frames are emitted once complete and
    CRC-valid. On corruption the scan slides forward one byte at a time
    until the next plausible frame. Feeding byte-by-byte yields exactly
    the same frames as feeding the whole stream at once.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self.diagnostics = ParserDiagnostics()
        self._in_resync = False

    def pending(self) -> int:
        """Bytes held waiting for more input."""
        return len(self._buf)

    def _skip(self, n: int) -> None:
        if n <= 0:
            return
        del self._buf[:n]
        self.diagnostics.bytes_skipped += n
        if not self._in_resync:
            self._in_resync = True
            self.diagnostics.resyncs += 1

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        out: list[Frame] = []
        buf = self._buf
        while True:
            start = buf.find(FRAME_MAGIC)
            if start < 0:
                # keep a trailing 0xA5 in case its 0x5A arrives next feed
                keep = 1 if (buf and buf[-1] == FRAME_MAGIC[0]) else 0
                self._skip(len(buf) - keep)
                break
            self._skip(start)
            if len(buf) < FRAME_SIZE:
                break  # partial frame, wait for more bytes
            try:
                frame = decode_frame(bytes(buf[:FRAME_SIZE]))
            except CrcMismatch:
                self.diagnostics.crc_failures += 1
                self._skip(1)
                continue
            except WireError:
                self.diagnostics.decode_errors += 1
                self._skip(1)
                continue
            out.append(frame)
            del buf[:FRAME_SIZE]
            self._in_resync = False
            self.diagnostics.frames += 1
        return out
