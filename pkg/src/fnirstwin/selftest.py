"""Fast in-process invariant suite behind `fnirstwin selftest`.

Each check prints one PASS/FAIL line; the suite returns a process exit
code (0 all green, 1 otherwise). Deeper property coverage lives in the
pytest suite; these are the smoke-level invariants an operator can run
on an installed package in a few seconds.
"""

from __future__ import annotations

import math

import numpy as np


def _check_crc():
    from .wire import crc16
    assert crc16(b"") == 0xFFFF
    assert crc16(b"123456789") == 0x29B1


def _check_frame_roundtrip():
    from .messages import Frame
    from .wire import decode_frame, encode_frame
    rng = np.random.default_rng(11)
    for _ in range(1000):
        f = Frame(int(rng.integers(0, 2**32)),
                  int(rng.integers(0, 2**63)),
                  int(rng.choice([660, 940])),
                  rng.integers(0, 3, 8).astype(np.uint8),
                  rng.integers(0, 4096, 24).astype(np.uint16))
        assert decode_frame(encode_frame(f)) == f


def _check_parser_recovery():
    from .messages import Frame
    from .wire import FrameStreamParser, encode_frame
    rng = np.random.default_rng(13)
    frames = [Frame(i, i * 1000, 660, np.zeros(8, np.uint8),
                    rng.integers(0, 4096, 24).astype(np.uint16))
              for i in range(20)]
    blob = bytearray(b"".join(encode_frame(f) for f in frames))
    for i in range(5 * 74 + 3, 5 * 74 + 40):
        blob[i] ^= 0xAA
    got = FrameStreamParser().feed(bytes(blob))
    assert len(got) >= len(frames) - 1


def _check_iir_math():
    from .ecu import iir_alpha, iir_step
    alpha = iir_alpha(20.0, 1000.0)
    assert abs(alpha - (1 - math.exp(-2 * math.pi * 0.02))) < 1e-15
    y = 0.0
    for k in range(100):
        y = iir_step(y, 1.0, alpha)
    assert abs(y - (1 - (1 - alpha) ** 100)) < 1e-12


def _check_adc():
    from .afe import adc_quantize
    assert adc_quantize(3.3) == 4095
    assert adc_quantize(0.0) == 0
    assert adc_quantize(1.65) == 2048
    assert adc_quantize(99.0) == 4095


def _check_mbll_roundtrip():
    from .layout import default_layout
    from .optics import OpticalTable, dpf_lookup
    from .physio import HemoGroundTruth, forward_beer_lambert
    from .pipeline import mbll_invert
    rng = np.random.default_rng(17)
    layout, optics = default_layout(), OpticalTable.default()
    truth = HemoGroundTruth(rng.uniform(-5, 5, (24, 50)),
                            rng.uniform(-5, 5, (24, 50)), 50.0)
    dod = forward_beer_lambert(truth, layout, optics, 25.0)
    d660, d940 = dpf_lookup(25.0, 660), dpf_lookup(25.0, 940)
    for c in (0, 7, 23):
        hbo, hbr = mbll_invert(dod[c, 0], dod[c, 1], optics,
                               layout.distance_cm(c), d660, d940)
        assert np.max(np.abs(hbo - truth.dhbo_um[c])) < 1e-9
        assert np.max(np.abs(hbr - truth.dhbr_um[c])) < 1e-9


def _check_cbsi_contract():
    from .pipeline import cbsi
    rng = np.random.default_rng(19)
    hbo = rng.normal(0, 1, 500)
    hbr = -hbo / 2.0 + rng.normal(0, 0.1, 500)
    res = cbsi(hbo, hbr)
    corr = np.corrcoef(res.dhbo, res.dhbr)[0, 1]
    assert abs(corr + 1.0) < 1e-6


def _check_sim_determinism():
    from .config import DeviceConfig, simulate_session
    from .physio import build_protocol_timeline
    from .wire import encode_frame_batch
    tl = build_protocol_timeline([("baseline", 2.0)])
    a = simulate_session(DeviceConfig(seed=5), tl)
    b = simulate_session(DeviceConfig(seed=5), tl)
    assert encode_frame_batch(a.batch) == encode_frame_batch(b.batch)


def _check_frame_rate():
    from .config import DeviceConfig, simulate_session
    from .physio import build_protocol_timeline
    run = simulate_session(DeviceConfig(seed=1),
                           build_protocol_timeline([("baseline", 1.0)]))
    assert len(run.batch) == 1000
    assert list(run.batch.seq[:3]) == [0, 1, 2]


CHECKS = [
    ("crc16 check values", _check_crc),
    ("frame round-trip x1000", _check_frame_roundtrip),
    ("parser corruption recovery", _check_parser_recovery),
    ("firmware filter math", _check_iir_math),
    ("adc quantization", _check_adc),
    ("absorption-model round-trip", _check_mbll_roundtrip),
    ("anti-phase correction contract", _check_cbsi_contract),
    ("simulation determinism", _check_sim_determinism),
    ("1 kHz frame rate", _check_frame_rate),
]


def run_selftest(verbose: bool = True) -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
            if verbose:
                print(f"PASS  {name}")
        except Exception as exc:
            failures += 1
            if verbose:
                print(f"FAIL  {name}: {exc}")
    if verbose:
        print(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return 0 if failures == 0 else 1
