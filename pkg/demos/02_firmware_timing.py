"""Firmware scheduling: 5 kHz sampling, mux dwell, wavelength toggling,
the smoothing filter, and the 1 kHz frame stream.
"""

import numpy as np

from fnirstwin.ecu import EcuState, handle_command, iir_alpha, step_ecu
from fnirstwin.messages import MuxOverride, SetIirCutoff


def sampler(channels, wavelengths, t_us):
    # simple deterministic pattern so samples identify their channel
    return np.asarray(channels) * 0.1 + (np.asarray(wavelengths) == 940) * 0.02


state = EcuState()
print(f"ADC {state.sampling_rate_hz} Hz, logging {state.logging_rate_hz} Hz, "
      f"dwell {state.mux_dwell_ms} ms, wavelength period "
      f"{state.wavelength_period_ms} ms")
print(f"smoothing: fc={state.iir_cutoff_hz} Hz at fs={state.sampling_rate_hz} "
      f"-> alpha={state.alpha:.5f}  "
      f"(alpha at 1 kHz would be {iir_alpha(20, 1000):.5f})")

batch = step_ecu(state, sampler, 60_000)
print(f"\n60 ms -> {len(batch)} frames; timeline for group 0:")
print("frame:      " + " ".join(f"{i:2d}" for i in range(30)))
print("mux idx:    " + " ".join(f"{int(m):2d}" for m in batch.mux_idx[:30, 0]))
print("wavelength: " + " ".join("66" if w == 660 else "94"
                                for w in batch.wavelength_nm[:30]))
print("-> each detector gets a 5 ms dwell; the wavelength flips every "
      "15 ms,\n   so every (channel, wavelength) pair refreshes within 30 ms")

ack = handle_command(state, MuxOverride(group=0, channel=2))
batch = step_ecu(state, sampler, 20_000)
print(f"\nmux override group0 -> detector 2 ({ack.status_name}); "
      f"mux idx now: {set(int(v) for v in batch.mux_idx[:, 0])}")
handle_command(state, MuxOverride(group=0, channel=0xFF))

ack = handle_command(state, SetIirCutoff(centi_hz=500))
print(f"retune filter to 5 Hz ({ack.status_name}): alpha={state.alpha:.6f}")

batch = step_ecu(state, sampler, 20_000)
print(f"\nframes carry all 24 latest filtered values; frame 0 samples: "
      f"{batch.samples[0][:8].tolist()}...")
print("sequence numbers continue without gaps:",
      batch.seq[:5].tolist(), "...")
