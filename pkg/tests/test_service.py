"""Host service: sessions, lossless recording, replay, publishing,
control relay, annotations."""

import json
import time
import urllib.request

import numpy as np
import pytest

from fnirstwin.config import DeviceConfig, simulate_session
from fnirstwin.io import read_raw_log
from fnirstwin.physio import build_protocol_timeline
from fnirstwin.pipeline import PipelineConfig, process_pipeline
from fnirstwin.service import (ControlError, HostService, ReplaySource,
                               ServiceError, SimSource, SourceBusy,
                               command_from_document)
from fnirstwin.wire import encode_frame_batch
from fnirstwin.io import export_processed_csv


def short_timeline(seconds=10.0):
    return build_protocol_timeline([("baseline", seconds)])


def run_session(tmp_path, duration_s=10.0, seed=2, speed=0):
    cfg = DeviceConfig(seed=seed)
    source = SimSource(cfg, short_timeline(duration_s), speed=speed)
    service = HostService()
    sid = service.start_session(source, tmp_path / "s1")
    assert service.wait(timeout=30.0)
    service.stop_session()
    return cfg, service, sid


class TestSessionLifecycle:
    def test_start_returns_monotonic_ids(self, tmp_path):
        cfg = DeviceConfig(seed=1)
        service = HostService()
        src = SimSource(cfg, short_timeline(1.0), speed=0)
        sid = service.start_session(src, tmp_path / "a")
        assert sid == 1
        assert service.status()["state"] == "streaming"
        service.wait(timeout=10)
        service.stop_session()
        src2 = SimSource(cfg, short_timeline(1.0), speed=0)
        assert service.start_session(src2, tmp_path / "b") == 2
        service.wait(timeout=10)
        service.stop_session()

    def test_source_exclusivity(self, tmp_path):
        cfg = DeviceConfig(seed=1)
        src = SimSource(cfg, short_timeline(5.0), speed=1.0)
        s1, s2 = HostService(), HostService()
        s1.start_session(src, tmp_path / "a")
        with pytest.raises(SourceBusy):
            s2.start_session(src, tmp_path / "b")
        s1.stop_session()

    def test_second_session_same_service_rejected(self, tmp_path):
        cfg = DeviceConfig(seed=1)
        service = HostService()
        service.start_session(SimSource(cfg, short_timeline(5.0), speed=1.0),
                              tmp_path / "a")
        with pytest.raises(SourceBusy):
            service.start_session(
                SimSource(cfg, short_timeline(1.0), speed=0), tmp_path / "b")
        service.stop_session()

    def test_replay_missing_file_rejected(self, tmp_path):
        with pytest.raises(ServiceError):
            ReplaySource(tmp_path / "nope.bin")


class TestRecorder:
    def test_ten_second_session_records_10000_frames(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=10.0)
        log = read_raw_log(tmp_path / "s1" / "raw.bin")
        assert len(log.frame_bytes) == 10_000 * 74
        assert len(log.batch) == 10_000
        assert service._session.recorder_losses == 0

    def test_lossless_matches_direct_simulation(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=4.0, seed=9)
        log = read_raw_log(tmp_path / "s1" / "raw.bin")
        direct = simulate_session(DeviceConfig(seed=9), short_timeline(4.0))
        assert log.frame_bytes == encode_frame_batch(direct.batch)
        assert np.array_equal(np.diff(log.batch.seq.astype(np.int64)),
                              np.ones(len(log.batch) - 1, dtype=np.int64))

    def test_replay_reproduces_bytes(self, tmp_path):
        run_session(tmp_path, duration_s=3.0, seed=4)
        path = tmp_path / "s1" / "raw.bin"
        source = ReplaySource(path, speed=0)
        chunks = []
        while not source.exhausted:
            _, raw = source.poll()
            chunks.append(raw)
        assert b"".join(chunks) == read_raw_log(path).frame_bytes

    def test_exports(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=6.0)
        arts = service.export_session(PipelineConfig(baseline_window_s=3.0))
        out = tmp_path / "s1"
        raw_rows = (out / "raw.csv").read_text().strip().splitlines()
        assert len(raw_rows) == 1 + 24 * 6000
        assert (out / "processed.csv").exists()
        assert (out / "ground_truth.csv").exists()
        head = raw_rows[0]
        assert head == "timestamp_us,seq,wavelength_nm,group,mux_ch,channel,adc_code"

    def test_replay_determinism_of_processing(self, tmp_path):
        run_session(tmp_path, duration_s=6.0, seed=13)
        path = tmp_path / "s1" / "raw.bin"
        outs = []
        for k in range(2):
            log = read_raw_log(path)
            res = process_pipeline(log.batch, log.config.layout(),
                                   log.config.optics(),
                                   PipelineConfig(baseline_window_s=3.0),
                                   afe=log.config.afe)
            p = tmp_path / f"proc{k}.csv"
            export_processed_csv(p, res)
            outs.append(p.read_bytes())
        assert outs[0] == outs[1]


class TestPublish:
    def test_processed_cadence_and_raw_decimation(self, tmp_path):
        cfg = DeviceConfig(seed=3)
        source = SimSource(cfg, short_timeline(13.0), speed=1.0)
        service = HostService()
        service.start_session(source, tmp_path / "s")
        # wait until the live pipeline warms up, then listen for 5 s
        deadline = time.monotonic() + 9.0
        sub = service.subscribe()
        first_processed = None
        while time.monotonic() < deadline and first_processed is None:
            line = sub.pop(timeout=0.3)
            if line and json.loads(line).get("type") == "processed":
                first_processed = time.monotonic()
        assert first_processed is not None, "no processed record arrived"
        processed = 1
        raw_times = []
        t_end = first_processed + 5.0
        while time.monotonic() < t_end:
            line = sub.pop(timeout=0.3)
            if not line:
                continue
            doc = json.loads(line)
            if doc["type"] == "processed":
                processed += 1
            elif doc["type"] == "raw":
                raw_times.append(doc["t_s"])
        service.unsubscribe(sub)
        service.stop_session()
        assert processed >= 9
        if len(raw_times) > 10:
            rate = (len(raw_times) - 1) / (raw_times[-1] - raw_times[0])
            assert rate <= 51.0

    def test_stalled_subscriber_never_blocks_recorder(self, tmp_path):
        cfg = DeviceConfig(seed=5)
        source = SimSource(cfg, short_timeline(15.0), speed=0)
        service = HostService()
        service.start_session(source, tmp_path / "s")
        stalled = service.subscribe()          # never popped
        assert service.wait(timeout=30)
        service.stop_session()
        assert service._session.recorder_losses == 0
        log = read_raw_log(tmp_path / "s" / "raw.bin")
        assert len(log.batch) == 15000         # 15 s x 1 kHz, nothing lost
        assert stalled.dropped > 0             # bounded buffer dropped oldest

    def test_no_subscribers_recording_unaffected(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=2.0)
        log = read_raw_log(tmp_path / "s1" / "raw.bin")
        assert len(log.batch) == 2000


class TestControl:
    def _live_service(self, tmp_path, seconds=6.0):
        cfg = DeviceConfig(seed=7)
        source = SimSource(cfg, short_timeline(seconds), speed=1.0)
        service = HostService()
        service.start_session(source, tmp_path / "s")
        return service, source

    def test_set_emitter_roundtrip_updates_status(self, tmp_path):
        service, source = self._live_service(tmp_path)
        t0 = time.monotonic()
        rec = service.apply_control({"set_emitter": {
            "group": 0, "wavelength_nm": 940, "duty": 2048,
            "freq_hz": 100, "phase": 0}})
        status = service.status()
        latency = time.monotonic() - t0
        service.stop_session()
        assert rec["ok"] and rec["status"] == "ok"
        assert status["device"]["emitters"][0][1]["duty"] == 2048
        assert latency < 0.2

    def test_device_nack_surfaced(self, tmp_path):
        service, _ = self._live_service(tmp_path)
        rec = service.apply_control({"set_emitter": {
            "group": 0, "wavelength_nm": 940, "duty": 2048,
            "freq_hz": 2000, "phase": 0}})
        service.stop_session()
        assert not rec["ok"] and rec["status"] == "bad-param"

    def test_structural_errors_rejected_client_side(self, tmp_path):
        service, _ = self._live_service(tmp_path)
        try:
            with pytest.raises(ControlError):
                service.apply_control({"mux_override": {"group": 9,
                                                        "channel": 1}})
            with pytest.raises(ControlError):
                service.apply_control({"warp_core": {}})
            with pytest.raises(ControlError):
                service.apply_control({"set_emitter": {"group": 0}})
        finally:
            service.stop_session()

    def test_control_without_session_rejected(self):
        with pytest.raises(ServiceError):
            HostService().apply_control({"status_req": {}})

    def test_command_document_validation_is_pure(self):
        cmd = command_from_document({"mux_override": {"group": 3,
                                                      "channel": 255}})
        assert cmd.group == 3 and cmd.channel == 255


class TestAnnotate:
    def test_markers_inserted_sorted(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=1.0)
        service.annotate("task", 20.0)
        service.annotate("note", 5.0)
        markers = service._session.markers
        times = [t for _, t in markers]
        assert times == sorted(times)
        assert ("task", 20.0) in markers

    def test_duplicate_markers_kept(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=1.0)
        n0 = len(service._session.markers)
        service.annotate("x", 3.0)
        service.annotate("x", 3.0)
        assert len(service._session.markers) == n0 + 2

    def test_negative_time_rejected(self, tmp_path):
        cfg, service, _ = run_session(tmp_path, duration_s=1.0)
        with pytest.raises(ServiceError):
            service.annotate("x", -1.0)


class TestHttp:
    def test_endpoints(self, tmp_path):
        cfg = DeviceConfig(seed=11)
        source = SimSource(cfg, short_timeline(8.0), speed=1.0)
        service = HostService()
        service.start_session(source, tmp_path / "s")
        httpd = service.serve_http(port=0)     # ephemeral port
        port = httpd.server_address[1]
        base = f"http://127.0.0.1:{port}"
        try:
            with urllib.request.urlopen(f"{base}/status", timeout=5) as r:
                doc = json.loads(r.read())
            assert doc["state"] == "streaming"
            req = urllib.request.Request(
                f"{base}/control",
                data=json.dumps({"set_emitter": {
                    "group": 1, "wavelength_nm": 660, "duty": 1000,
                    "freq_hz": 200, "phase": 0}}).encode(),
                method="POST")
            with urllib.request.urlopen(req, timeout=5) as r:
                ack = json.loads(r.read())
            assert ack["ok"]
            with urllib.request.urlopen(f"{base}/stream", timeout=5) as r:
                line = r.readline()
                assert json.loads(line)["type"] in ("raw", "processed",
                                                    "status", "ack")
        finally:
            service.stop_session()
            service.shutdown_http()


class TestPassthrough:
    def test_external_byte_stream_recorded_losslessly(self, tmp_path):
        import io as _io
        from fnirstwin.service import PassthroughSource
        cfg = DeviceConfig(seed=6)
        direct = simulate_session(cfg, short_timeline(3.0))
        blob = encode_frame_batch(direct.batch)
        # splice garbage mid-stream: parser resynchronizes, frames survive
        dirty = blob[:50 * 74] + b"\x00\x99garbage\xa5" + blob[50 * 74:]
        source = PassthroughSource(_io.BytesIO(dirty), config=cfg)
        service = HostService()
        service.start_session(source, tmp_path / "pt")
        assert service.wait(timeout=20)
        service.stop_session()
        log = read_raw_log(tmp_path / "pt" / "raw.bin")
        assert len(log.batch) == len(direct.batch)
        assert log.frame_bytes == blob
        assert source.status()["resyncs"] >= 1

    def test_passthrough_rejects_control(self, tmp_path):
        import io as _io
        from fnirstwin.service import PassthroughSource
        source = PassthroughSource(_io.BytesIO(b""), config=DeviceConfig())
        service = HostService()
        service.start_session(source, tmp_path / "pt")
        rec = service.apply_control({"status_req": {}})
        service.stop_session()
        assert not rec["ok"]
