"""Full closed loop: simulate the 20/120/60 s protocol with a 1 uM
activation, run the processing pipeline, and compare against truth.
"""

import time

import numpy as np

from fnirstwin.config import DeviceConfig, simulate_session
from fnirstwin.pipeline import PipelineConfig, process_pipeline

cfg = DeviceConfig(seed=7)
layout = cfg.layout()

t0 = time.perf_counter()
run = simulate_session(cfg)
print(f"simulated {run.timeline.total_duration_s:.0f} s "
      f"({len(run.batch)} frames) in {time.perf_counter() - t0:.2f} s")

t0 = time.perf_counter()
res = process_pipeline(run.batch, layout, cfg.optics(), PipelineConfig(),
                       afe=cfg.afe)
print(f"processed in {time.perf_counter() - t0:.2f} s "
      f"({res.seq_gaps} sequence gaps)")

activated = layout.default_activated_channels()
print(f"\nactivated channels (frontal, long): {activated}")
print("late-task (60-140 s) means from the wide-band concentrations:")
print(" ch  role   dHbO (uM)  dHbR (uM)")
for c in range(24):
    h = res.channels[c]
    m = (h.t_s >= 60) & (h.t_s < 140)
    mark = "*" if c in activated else " "
    print(f" {c:2d}{mark} {layout.role(c):5s}  {h.wideband_dhbo_um[m].mean():+8.3f}"
          f"   {h.wideband_dhbr_um[m].mean():+8.3f}")
print("(*) carries the synthetic 1 uM task response; truth ratio "
      "dHbR/dHbO = -1/3")

bpm = np.median(res.heart_rate_bpm)
print(f"\nheart rate from short channel {res.heart_rate_channel}: "
      f"{bpm:.1f} bpm (configured {cfg.cardiac.rate_bpm:.0f})")
