"""From concentration changes to ADC codes, one stage at a time.

Walks a single long channel through the forward chain: synthesize a
task-evoked hemodynamic response, turn it into optical density and
detected light, push it through the AC-coupled front end, and quantize.
"""

import numpy as np

from fnirstwin.afe import AfeParams, adc_quantize, analog_front_end
from fnirstwin.layout import default_layout
from fnirstwin.optics import OpticalTable
from fnirstwin.physio import (HemoParams, default_timeline,
                              forward_beer_lambert, od_to_intensity,
                              synth_hemodynamics)

layout = default_layout()
optics = OpticalTable.default()
timeline = default_timeline()
channel = layout.default_activated_channels()[0]

print("protocol:", " -> ".join(f"{lbl} {dur:.0f}s" for lbl, dur in timeline.phases))
print(f"watching channel {channel} "
      f"(group {layout.group_of(channel)}, {layout.role(channel)}, "
      f"{layout.distance_cm(channel)} cm separation)")

truth = synth_hemodynamics(timeline, layout, HemoParams(), seed=42)
t = truth.t_s
mid_task = np.searchsorted(t, 80.0)
print(f"\n1) hemodynamics at t=80s (mid-task): "
      f"dHbO={truth.dhbo_um[channel, mid_task]:+.3f} uM, "
      f"dHbR={truth.dhbr_um[channel, mid_task]:+.3f} uM")

dod = forward_beer_lambert(truth, layout, optics, age_years=25.0)
print(f"2) optical density change at 80s: "
      f"660nm {dod[channel, 0, mid_task]:+.5f}  "
      f"940nm {dod[channel, 1, mid_task]:+.5f}")
print("   (more HbO absorbs more 940 nm light and less 660 nm light)")

i0 = optics.baseline(channel, 660)
intensity = od_to_intensity(dod[channel, 0], i0)
print(f"3) detected 660nm light: baseline {i0 * 1e3:.1f} mV -> "
      f"{intensity[mid_task] * 1e3:.3f} mV at mid-task "
      f"({(intensity[mid_task] / i0 - 1) * 100:+.2f}%)")

afe = AfeParams()
rng = np.random.default_rng(42)
volts = analog_front_end(intensity, 0.0, afe, truth.sample_rate_hz, rng)
print(f"4) AFE output (AC-coupled, x{afe.ac_gain_v_per_v:.0f}, "
      f"{afe.dc_offset_v} V offset, noise sigma {afe.noise_sigma_v * 1e3:.2f} mV):")
print(f"   rest {volts[100]:.3f} V, task onset "
      f"{volts[np.searchsorted(t, 25.0)]:.3f} V")

codes = adc_quantize(volts)
print(f"5) 12-bit codes: mid-rail {adc_quantize(afe.dc_offset_v)}, "
      f"observed range {codes.min()}..{codes.max()}")
print("\nthe firmware emulation samples stage-4 voltages through the "
      "multiplexers;\nsee 02_firmware_timing.py")
