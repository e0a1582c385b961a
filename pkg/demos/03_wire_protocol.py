"""Telemetry framing on the wire: layout, CRC, and resynchronization."""

import numpy as np

from fnirstwin.messages import Frame, SetEmitter
from fnirstwin.wire import (FrameStreamParser, crc16, decode_command,
                            encode_command, encode_frame)

frame = Frame(seq=7, timestamp_us=7000, wavelength_nm=940,
              mux_idx=np.array([0, 0, 1, 1, 2, 2, 0, 1], np.uint8),
              samples=np.arange(1000, 1024, dtype=np.uint16))
raw = encode_frame(frame)
print(f"frame is {len(raw)} bytes:")
print("  magic+ver+flags:", raw[:4].hex(" "))
print("  seq u32le:      ", raw[4:8].hex(" "))
print("  timestamp u64le:", raw[8:16].hex(" "))
print("  mux_idx[8]:     ", raw[16:24].hex(" "))
print("  samples[0..3]:  ", raw[24:32].hex(" "), "...")
print("  crc16le:        ", raw[72:].hex(" "),
      f"(CRC-16/CCITT-FALSE; crc16(b'123456789') = {crc16(b'123456789'):#06x})")

cmd = SetEmitter(group=0, wavelength_nm=940, duty=2048, freq_hz=100, phase=0)
blob = encode_command(cmd)
print(f"\nset-emitter command ({len(blob)} bytes): {blob.hex(' ')}")
print("decodes back to:", decode_command(blob))

frames = [Frame(i, i * 1000, 660, np.zeros(8, np.uint8),
                np.full(24, i, np.uint16)) for i in range(6)]
stream = b"".join(encode_frame(f) for f in frames)
dirty = stream[:200] + b"\xde\xad\xbe\xef\xa5\x5a\x00" + stream[200:]
parser = FrameStreamParser()
got = parser.feed(dirty)
d = parser.diagnostics
print(f"\nfed {len(dirty)} bytes with 7 garbage bytes spliced mid-frame:")
print(f"  recovered {len(got)}/{len(frames)} frames "
      f"(seq {[f.seq for f in got]})")
print(f"  resyncs={d.resyncs} crc_failures={d.crc_failures} "
      f"bytes_skipped={d.bytes_skipped}")
