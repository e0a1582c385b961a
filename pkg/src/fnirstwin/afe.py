"""Analog front end model: AC-coupled gain stage, additive noise, rail
clamping, and ADC quantization, plus the stateful optical sampler that
feeds the firmware emulation.

The transimpedance stage is treated as flat in-band (its 13.175 kHz
bandwidth is above the 5 kHz acquisition rate), so the chain reduces to a
first-order AC-coupling high-pass, a fixed voltage gain, a mid-rail DC
offset, Gaussian noise, and the 0..supply clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .layout import SensorLayout
from .messages import N_CHANNELS, N_GROUPS
from .optics import OpticalTable
from .physio import CardiacParams, HemoGroundTruth, InstrumentDriftParams

# Output noise sigma (volts) reproducing the validated bench SNR; see
# fnirstwin.calibrate (committed calibration script).
CALIBRATED_NOISE_SIGMA_V = 5.128153e-3


class AfeError(ValueError):
    pass


@dataclass
class AfeParams:
    """Detector analog chain parameters."""

    tia_gain_ohm: float = 60.4e3
    tia_bandwidth_hz: float = 13175.0
    ac_couple_cutoff_hz: float = 0.0796
    ac_gain_v_per_v: float = 101.0
    dc_offset_v: float = 1.65
    output_lpf_cutoff_hz: float = 1000.0
    dark_current_a: float = 2e-9
    supply_v: float = 3.3
    noise_sigma_v: float = CALIBRATED_NOISE_SIGMA_V

    def validate(self) -> None:
        for name in ("tia_gain_ohm", "tia_bandwidth_hz", "ac_couple_cutoff_hz",
                     "ac_gain_v_per_v", "output_lpf_cutoff_hz",
                     "dark_current_a", "supply_v"):
            if getattr(self, name) <= 0:
                raise AfeError(f"{name} must be positive")
        if not 0 < self.dc_offset_v < self.supply_v:
            raise AfeError("dc_offset_v must lie inside (0, supply_v)")
        if self.noise_sigma_v < 0:
            raise AfeError("noise_sigma_v must be >= 0")


def hpf_coeff(cutoff_hz: float, sample_rate_hz: float) -> float:
    """Pole location of the discrete first-order high-pass."""
    return math.exp(-2.0 * math.pi * cutoff_hz / sample_rate_hz)


def first_order_highpass(x: np.ndarray, sample_rate_hz: float,
                         cutoff_hz: float, zi: np.ndarray | None = None,
                         axis: int = -1):
    """Discrete first-order high-pass y[n] = c*(y[n-1] + x[n] - x[n-1]).

    zi is the lfilter state; None starts at steady state for x[..., 0]
    (a device that has been powered long before the record begins).
    Returns (y, zf).
    """
    c = hpf_coeff(cutoff_hz, sample_rate_hz)
    b, a = [c, -c], [1.0, -c]
    x = np.asarray(x, dtype=float)
    if zi is None:
        x0 = np.take(x, [0], axis=axis)
        zi = -c * x0
    return lfilter(b, a, x, axis=axis, zi=zi)


def inverse_first_order_highpass(y: np.ndarray, sample_rate_hz: float,
                                 cutoff_hz: float, axis: int = -1) -> np.ndarray:
    """Reconstruct the high-pass input up to its unobservable DC level.

    Inverts y[n] = c*(y[n-1] + x[n] - x[n-1]) as
    x[n] = x[n-1] + y[n]/c - y[n-1], anchored at x[-1] = 0, y[-1] = 0.
    """
    c = hpf_coeff(cutoff_hz, sample_rate_hz)
    x, _ = lfilter([1.0 / c, -1.0], [1.0, -1.0], np.asarray(y, dtype=float),
                   axis=axis, zi=np.zeros(np.take(y, [0], axis=axis).shape))
    return x


def analog_front_end(optical_v: np.ndarray, additive_v: np.ndarray | float,
                     afe: AfeParams, sim_rate_hz: float,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """One-shot AFE chain over a series (last axis is time).

    output = clamp(dc_offset + gain * HPF{optical + additive} + noise).
    """
    afe.validate()
    x = np.asarray(optical_v, dtype=float) + additive_v
    y, _ = first_order_highpass(x, sim_rate_hz, afe.ac_couple_cutoff_hz)
    out = afe.dc_offset_v + afe.ac_gain_v_per_v * y
    if afe.noise_sigma_v > 0:
        rng = rng or np.random.default_rng()
        out = out + rng.normal(0.0, afe.noise_sigma_v, size=out.shape)
    return np.clip(out, 0.0, afe.supply_v)


def adc_quantize(voltage, fullscale_v: float = 3.3, bits: int = 12):
    """Round-half-up quantization to 0..2**bits-1; out-of-range clamps."""
    levels = (1 << bits) - 1
    v = np.clip(np.asarray(voltage, dtype=float), 0.0, fullscale_v)
    code = np.floor(v / fullscale_v * levels + 0.5).astype(np.int64)
    if np.isscalar(voltage) or np.ndim(voltage) == 0:
        return int(code)
    return code


def adc_to_volts(code, fullscale_v: float = 3.3, bits: int = 12):
    """Midpoint reconstruction of a quantized code."""
    levels = (1 << bits) - 1
    return np.asarray(code, dtype=float) / levels * fullscale_v


# --- stateful sampler for the firmware emulation ------------------------------


def _ones_scales() -> np.ndarray:
    return np.ones((N_GROUPS, 2))


@dataclass
class SignalModel:
    """Everything the optical sampler needs to synthesize detector inputs."""

    truth: HemoGroundTruth
    layout: SensorLayout
    optics: OpticalTable
    afe: AfeParams
    cardiac: CardiacParams = field(default_factory=CardiacParams)
    drift: InstrumentDriftParams = field(default_factory=InstrumentDriftParams)
    age_years: float = 25.0
    seed: int = 0


class OpticalAfeSampler:
    """Vectorized (channel, wavelength, time) -> AFE output voltage.

    Simulates all 24 detector chains on the full acquisition-rate grid in
    fixed one-second chunks (so results are independent of how callers
    step time), carrying the AC-coupling state and a per-chunk seeded
    noise stream. Queries must move forward in time, matching the
    firmware's monotone virtual clock.
    """

    def __init__(self, model: SignalModel, sim_rate_hz: int = 5000,
                 wavelength_period_ms: int = 15,
                 emitter_scales: Callable[[], np.ndarray] | None = None):
        model.afe.validate()
        self.model = model
        self.sim_rate_hz = int(sim_rate_hz)
        self.tick_us = int(round(1e6 / sim_rate_hz))
        self.wavelength_period_us = int(wavelength_period_ms * 1000)
        self.emitter_scales = emitter_scales or _ones_scales
        self.chunk_len = self.sim_rate_hz  # one second per chunk
        self._chunks: dict[int, np.ndarray] = {}
        self._next_chunk = 0
        self._hpf_zi: np.ndarray | None = None
        # group index per channel, for emitter scaling
        self._group_of = np.array([model.layout.group_of(c)
                                   for c in range(N_CHANNELS)])
        # precompute dOD on the truth grid for both wavelengths
        from .physio import forward_beer_lambert
        self._dod = forward_beer_lambert(model.truth, model.layout,
                                         model.optics, model.age_years)
        self._truth_t = model.truth.t_s

    def _generate_chunk(self, index: int) -> np.ndarray:
        m = self.model
        ticks = np.arange(index * self.chunk_len, (index + 1) * self.chunk_len,
                          dtype=np.int64)
        t_us = ticks * self.tick_us
        t_s = t_us * 1e-6
        wl_idx = ((t_us // self.wavelength_period_us) % 2).astype(np.int64)

        # interpolate dOD onto the acquisition grid, select per-tick wavelength
        dod = np.empty((N_CHANNELS, len(ticks)))
        for c in range(N_CHANNELS):
            d660 = np.interp(t_s, self._truth_t, self._dod[c, 0])
            d940 = np.interp(t_s, self._truth_t, self._dod[c, 1])
            dod[c] = np.where(wl_idx == 1, d940, d660)

        scales = np.asarray(self.emitter_scales(), dtype=float)
        base = m.optics.baseline_v * scales[self._group_of]   # (24, 2)
        i0 = base[np.arange(N_CHANNELS)[:, None], wl_idx[None, :]]
        optical = i0 * np.power(10.0, -dod)

        x = optical + m.cardiac.series(t_s) + m.drift.series(t_s, m.seed)
        y, self._hpf_zi = first_order_highpass(
            x, self.sim_rate_hz, m.afe.ac_couple_cutoff_hz,
            zi=self._hpf_zi, axis=1)
        out = m.afe.dc_offset_v + m.afe.ac_gain_v_per_v * y
        if m.afe.noise_sigma_v > 0:
            rng = np.random.default_rng([m.seed, 0xA0153, index])
            out = out + rng.normal(0.0, m.afe.noise_sigma_v, size=out.shape)
        return np.clip(out, 0.0, m.afe.supply_v)

    def _chunk(self, index: int) -> np.ndarray:
        while self._next_chunk <= index:
            self._chunks[self._next_chunk] = self._generate_chunk(self._next_chunk)
            self._next_chunk += 1
        if index not in self._chunks:
            raise AfeError(f"sampler queried backward into evicted chunk {index}")
        return self._chunks[index]

    def __call__(self, channels, wavelengths_nm, t_us) -> np.ndarray:
        channels = np.asarray(channels, dtype=np.int64)
        t_us = np.asarray(t_us, dtype=np.int64)
        ticks, rem = np.divmod(t_us, self.tick_us)
        if np.any(rem != 0):
            raise AfeError("query times must lie on the acquisition grid")
        out = np.empty(ticks.shape, dtype=float)
        lo_chunk = int(ticks.min()) // self.chunk_len if ticks.size else 0
        hi_chunk = int(ticks.max()) // self.chunk_len if ticks.size else -1
        for ci in range(lo_chunk, hi_chunk + 1):
            sel = (ticks // self.chunk_len) == ci
            if not np.any(sel):
                continue
            chunk = self._chunk(ci)
            out[sel] = chunk[channels[sel], ticks[sel] - ci * self.chunk_len]
        # evict chunks fully behind the current query window
        for ci in [k for k in self._chunks if k < lo_chunk - 1]:
            del self._chunks[ci]
        return out
