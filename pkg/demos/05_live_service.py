"""Live session: stream records, steer an emitter, watch the ack and
status flow, then export artifacts.
"""

import json
import tempfile
import time
from pathlib import Path

from fnirstwin.config import DeviceConfig
from fnirstwin.physio import build_protocol_timeline
from fnirstwin.service import HostService, SimSource

out = Path(tempfile.mkdtemp(prefix="fnirstwin_demo_"))
cfg = DeviceConfig(seed=1)
source = SimSource(cfg, build_protocol_timeline([("baseline", 12.0)]),
                   speed=2.0)          # 2x real time
service = HostService()
sid = service.start_session(source, out)
print(f"session {sid} streaming into {out}")

sub = service.subscribe()
seen = {"raw": 0, "processed": 0, "status": 0, "ack": 0}
sent = False
t0 = time.monotonic()
while time.monotonic() - t0 < 5.0:
    line = sub.pop(timeout=0.3)
    if line is None:
        continue
    doc = json.loads(line)
    seen[doc["type"]] = seen.get(doc["type"], 0) + 1
    if doc["type"] == "processed" and not sent:
        ch0 = doc["channels"].get("0", {})
        print(f"  processed @ {doc['t_s']:.1f}s: ch0 dHbO={ch0.get('dhbo')}"
              f" uM, hr={doc.get('hr_bpm')} bpm")
        print("  -> dimming group 0's 940 nm emitter to 50% duty")
        ack = service.apply_control({"set_emitter": {
            "group": 0, "wavelength_nm": 940, "duty": 2048,
            "freq_hz": 100, "phase": 0}})
        print(f"  ack: {ack['status']}")
        sent = True
service.unsubscribe(sub)
print("records seen in 5 s:", seen)

duty = service.status()["device"]["emitters"][0][1]["duty"]
print(f"status now reports group0/940nm duty = {duty}")

service.wait(timeout=30)
service.stop_session()
arts = service.export_session()
print("exported:", ", ".join(sorted(Path(p).name for p in arts.values())))
