"""Command-line surface: artifacts, determinism, exit codes."""

import json

import pytest

from fnirstwin.cli import main, parse_protocol
from fnirstwin.config import DeviceConfig, simulate_session
from fnirstwin.io import export_processed_csv, read_raw_log
from fnirstwin.physio import build_protocol_timeline
from fnirstwin.pipeline import PipelineConfig, process_pipeline


class TestParseProtocol:
    def test_standard(self):
        tl = parse_protocol("baseline:20,task:120,rest:60")
        assert tl.total_duration_s == 200.0

    def test_malformed(self):
        import argparse
        with pytest.raises(argparse.ArgumentTypeError):
            parse_protocol("baseline")
        with pytest.raises(argparse.ArgumentTypeError):
            parse_protocol("task:xyz")


class TestSimulate:
    def test_deterministic_raw_log(self, tmp_path):
        for name in ("a", "b"):
            code = main(["simulate", "--duration", "3", "--seed", "7",
                         "--protocol", "baseline:1,task:2",
                         "--out", str(tmp_path / name)])
            assert code == 0
        assert ((tmp_path / "a" / "raw.bin").read_bytes()
                == (tmp_path / "b" / "raw.bin").read_bytes())

    def test_frame_count_and_artifacts(self, tmp_path):
        main(["simulate", "--duration", "2", "--seed", "1",
              "--protocol", "baseline:2", "--out", str(tmp_path / "s")])
        log = read_raw_log(tmp_path / "s" / "raw.bin")
        assert len(log.batch) == 2000
        assert (tmp_path / "s" / "ground_truth.csv").exists()
        markers = (tmp_path / "s" / "markers.csv").read_text().splitlines()
        assert markers[0] == "label,t_s"
        cfg = json.loads((tmp_path / "s" / "config.json").read_text())
        assert cfg["seed"] == 1

    def test_ground_truth_header(self, tmp_path):
        main(["simulate", "--duration", "1", "--seed", "1",
              "--protocol", "baseline:1", "--out", str(tmp_path / "s")])
        head = (tmp_path / "s" / "ground_truth.csv").read_text().splitlines()[0]
        assert head == "t_s,channel,dhbo_um,dhbr_um"


class TestProcess:
    def test_missing_file_exits_1(self, tmp_path, capsys):
        assert main(["process", str(tmp_path / "missing.bin")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_file_path_equals_in_memory_path(self, tmp_path):
        out = tmp_path / "sim"
        main(["simulate", "--duration", "40", "--seed", "3",
              "--protocol", "baseline:10,task:30", "--out", str(out)])
        assert main(["process", str(out / "raw.bin"),
                     "--out", str(tmp_path / "proc")]) == 0
        via_files = (tmp_path / "proc" / "processed.csv").read_bytes()

        cfg = DeviceConfig(seed=3)
        run = simulate_session(cfg, build_protocol_timeline(
            [("baseline", 10.0), ("task", 30.0)]))
        res = process_pipeline(run.batch, cfg.layout(), cfg.optics(),
                               PipelineConfig(age_years=cfg.age_years),
                               afe=cfg.afe,
                               dwell_ms=cfg.mux_dwell_ms,
                               wavelength_period_ms=cfg.wavelength_period_ms)
        export_processed_csv(tmp_path / "mem.csv", res)
        assert via_files == (tmp_path / "mem.csv").read_bytes()


class TestExitCodes:
    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as e:
            main(["simulate", "--bogus"])
        assert e.value.code == 2

    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out

    def test_bench_meets_floor(self, capsys):
        assert main(["bench", "--duration", "5"]) == 0
        out = capsys.readouterr().out
        assert "combined:" in out
