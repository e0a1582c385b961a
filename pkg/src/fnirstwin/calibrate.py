"""Noise calibration: pick the AFE noise sigma that reproduces the
validated bench SNR (mean 52.302 dB across the 24 channels, per-channel
values inside the measured 50.297..53.809 dB window).

The bench scenario is a rest-only run with the cardiac waveform as the
known signal: the same run is simulated twice from one seed, with and
without noise, and the per-channel SNR is the mean-removed power ratio
of the clean series to the (noisy - clean) residual, measured on the
logged frames.

Run `python -m fnirstwin.calibrate` to re-derive the committed value in
fnirstwin.afe.CALIBRATED_NOISE_SIGMA_V.
"""

from __future__ import annotations

import math

import numpy as np

from .config import DeviceConfig, simulate_session
from .messages import N_CHANNELS
from .physio import HemoParams, InstrumentDriftParams, build_protocol_timeline, measure_snr

BENCH_TARGET_MEAN_DB = 52.302
BENCH_MIN_DB = 50.297
BENCH_MAX_DB = 53.809
BENCH_SEED = 2025
BENCH_DURATION_S = 30.0
_WARMUP_FRAMES = 100


def bench_config(seed: int = BENCH_SEED) -> DeviceConfig:
    """Rest-only scenario: cardiac signal only, drifts disabled."""
    cfg = DeviceConfig(seed=seed)
    cfg.hemo = HemoParams(activation_amplitude_um=0.0, drift_amplitude_um=0.0)
    cfg.drift = InstrumentDriftParams(amplitude_v=0.0)
    return cfg


def snr_bench(noise_sigma_v: float | None = None,
              duration_s: float = BENCH_DURATION_S,
              seed: int = BENCH_SEED) -> np.ndarray:
    """Per-channel SNR (dB) of the default simulator at the logged frames."""
    cfg = bench_config(seed)
    timeline = build_protocol_timeline([("rest", duration_s)])
    sigma = cfg.afe.noise_sigma_v if noise_sigma_v is None else noise_sigma_v
    noisy = simulate_session(cfg, timeline, noise_override=sigma)
    clean = simulate_session(cfg, timeline, noise_override=0.0)
    s = clean.batch.samples[_WARMUP_FRAMES:].astype(float)
    n = noisy.batch.samples[_WARMUP_FRAMES:].astype(float) - s
    return np.array([measure_snr(s[:, c], n[:, c]) for c in range(N_CHANNELS)])


def calibrate_noise_sigma(target_db: float = BENCH_TARGET_MEAN_DB,
                          tol_db: float = 0.01,
                          lo: float = 1e-5, hi: float = 1e-2,
                          max_iter: int = 40) -> float:
    """Bisect (in log sigma) for the target mean bench SNR."""
    f_lo = float(np.mean(snr_bench(lo)))   # low sigma -> high SNR
    f_hi = float(np.mean(snr_bench(hi)))
    if not (f_hi < target_db < f_lo):
        raise RuntimeError(f"target {target_db} dB outside bracket "
                           f"[{f_hi:.1f}, {f_lo:.1f}] dB")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        f_mid = float(np.mean(snr_bench(mid)))
        if abs(f_mid - target_db) < tol_db:
            return mid
        if f_mid > target_db:
            lo = mid            # too quiet, raise sigma
        else:
            hi = mid
    return math.sqrt(lo * hi)


def main() -> None:
    sigma = calibrate_noise_sigma()
    snr = snr_bench(sigma)
    print(f"calibrated noise sigma: {sigma:.6e} V")
    print(f"mean SNR: {snr.mean():.3f} dB  (target {BENCH_TARGET_MEAN_DB})")
    print(f"min/max: {snr.min():.3f} / {snr.max():.3f} dB "
          f"(window {BENCH_MIN_DB} .. {BENCH_MAX_DB})")
    for c in range(N_CHANNELS):
        print(f"  ch {c:2d}: {snr[c]:6.3f} dB")


if __name__ == "__main__":
    main()
