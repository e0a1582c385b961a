"""Synthetic physiology: protocol timelines, task-evoked hemodynamics,
cardiac pulsation, slow drifts, and the optical forward model.

The forward model maps concentration changes to optical density changes
via the linearized absorption law: dOD(wl, t) = [eps_HbO(wl) * dHbO(t) +
eps_HbR(wl) * dHbR(t)] * d * DPF(wl, age), with eps in cm^-1 mM^-1,
concentrations in mM internally, and distance in cm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layout import SensorLayout
from .messages import N_CHANNELS, WAVELENGTHS_NM
from .optics import MM_PER_UM, OpticalTable

PHASE_LABELS = ("baseline", "task", "rest")
DEFAULT_PROTOCOL = (("baseline", 20.0), ("task", 120.0), ("rest", 60.0))


class PhysioError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolTimeline:
    """Ordered experiment phases with cumulative boundaries."""

    phases: tuple[tuple[str, float], ...]
    total_duration_s: float
    boundaries_s: tuple[float, ...]     # cumulative end time of each phase

    def phase_windows(self, label: str) -> list[tuple[float, float]]:
        out, start = [], 0.0
        for (lbl, dur), end in zip(self.phases, self.boundaries_s):
            if lbl == label:
                out.append((start, end))
            start = end
        return out

    def markers(self) -> list[tuple[str, float]]:
        """Phase-onset markers (label, t_s)."""
        out, start = [], 0.0
        for lbl, dur in self.phases:
            out.append((lbl, start))
            start += dur
        return out


def build_protocol_timeline(phases) -> ProtocolTimeline:
    """Build a timeline from (label, duration_s) pairs."""
    phases = tuple((str(lbl), float(dur)) for lbl, dur in phases)
    if not phases:
        raise PhysioError("phase list is empty")
    for lbl, dur in phases:
        if lbl not in PHASE_LABELS:
            raise PhysioError(f"unknown phase label {lbl!r}")
        if dur <= 0:
            raise PhysioError(f"non-positive duration for phase {lbl}: {dur}")
    bounds = tuple(np.cumsum([d for _, d in phases]).tolist())
    return ProtocolTimeline(phases, bounds[-1], bounds)


def default_timeline() -> ProtocolTimeline:
    return build_protocol_timeline(DEFAULT_PROTOCOL)


# --- hemodynamics -------------------------------------------------------------


@dataclass
class HemoParams:
    """Knobs for the synthetic hemodynamic generator."""

    activation_amplitude_um: float = 1.0
    hbr_ratio: float = 1.0 / 3.0
    hrf_shape: float = 4.0            # gamma shape; peak at (shape-1)*scale
    hrf_scale_s: float = 2.0
    drift_amplitude_um: float = 0.05
    sample_rate_hz: float = 50.0
    activated_channels: tuple[int, ...] | None = None  # None -> layout default


@dataclass
class HemoGroundTruth:
    """Per-channel concentration-change series in uM at the sim rate."""

    dhbo_um: np.ndarray       # (24, n)
    dhbr_um: np.ndarray       # (24, n)
    sample_rate_hz: float

    @property
    def t_s(self) -> np.ndarray:
        return np.arange(self.dhbo_um.shape[1]) / self.sample_rate_hz

    def __post_init__(self):
        if self.dhbo_um.shape != self.dhbr_um.shape:
            raise PhysioError("dHbO and dHbR series must have equal shape")


def gamma_hrf(sample_rate_hz: float, shape: float = 4.0,
              scale_s: float = 2.0, length_s: float = 40.0) -> np.ndarray:
    """Unit-sum gamma impulse response; peak at (shape-1)*scale seconds."""
    t = np.arange(0.0, length_s, 1.0 / sample_rate_hz)
    h = (t / scale_s) ** (shape - 1.0) * np.exp(-t / scale_s)
    return h / h.sum()


def _slow_drift(rng: np.random.Generator, n: int, fs: float,
                amplitude: float) -> np.ndarray:
    """Sum of three slow sinusoids with randomized periods and phases."""
    if amplitude == 0:
        return np.zeros(n)
    t = np.arange(n) / fs
    out = np.zeros(n)
    for _ in range(3):
        period = rng.uniform(60.0, 300.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        out += rng.uniform(0.3, 1.0) * np.sin(2 * math.pi * t / period + phase)
    return amplitude * out / 3.0


def synth_hemodynamics(timeline: ProtocolTimeline, layout: SensorLayout,
                       params: HemoParams | None = None,
                       seed: int = 0) -> HemoGroundTruth:
    """Boxcar task regressor convolved with the gamma response, plus drift.

    Activated channels carry amplitude * (boxcar (x) hrf) on dHbO and the
    anti-phase -hbr_ratio multiple on dHbR; every channel additionally
    receives an independent slow drift. Deterministic for a fixed seed.
    """
    params = params or HemoParams()
    if params.activation_amplitude_um < 0:
        raise PhysioError("activation amplitude must be >= 0")
    fs = params.sample_rate_hz
    n = int(round(timeline.total_duration_s * fs))
    t = np.arange(n) / fs

    boxcar = np.zeros(n)
    for start, end in timeline.phase_windows("task"):
        boxcar[(t >= start) & (t < end)] = 1.0
    hrf = gamma_hrf(fs, params.hrf_shape, params.hrf_scale_s)
    response = np.convolve(boxcar, hrf)[:n] * params.activation_amplitude_um

    activated = params.activated_channels
    if activated is None:
        activated = layout.default_activated_channels()
    activated = set(activated)

    rng = np.random.default_rng(seed)
    dhbo = np.zeros((N_CHANNELS, n))
    dhbr = np.zeros((N_CHANNELS, n))
    for c in range(N_CHANNELS):
        act = response if c in activated else 0.0
        dhbo[c] = act + _slow_drift(rng, n, fs, params.drift_amplitude_um)
        dhbr[c] = (-params.hbr_ratio * act
                   + _slow_drift(rng, n, fs, params.drift_amplitude_um))
    return HemoGroundTruth(dhbo, dhbr, fs)


# --- optical forward model ----------------------------------------------------


def forward_beer_lambert(truth: HemoGroundTruth, layout: SensorLayout,
                         optics: OpticalTable, age_years: float = 25.0) -> np.ndarray:
    """Concentration changes -> dOD, shape (24, 2, n), wavelength order (660, 940)."""
    n = truth.dhbo_um.shape[1]
    dod = np.empty((N_CHANNELS, len(WAVELENGTHS_NM), n))
    dhbo_mm = truth.dhbo_um * MM_PER_UM
    dhbr_mm = truth.dhbr_um * MM_PER_UM
    for wi, wl in enumerate(WAVELENGTHS_NM):
        eps_o = optics.epsilon("HbO", wl)
        eps_r = optics.epsilon("HbR", wl)
        dpf = optics.dpf(age_years, wl)
        for c in range(N_CHANNELS):
            d = layout.distance_cm(c)
            dod[c, wi] = (eps_o * dhbo_mm[c] + eps_r * dhbr_mm[c]) * d * dpf
    return dod


def od_to_intensity(dod: np.ndarray, i0) -> np.ndarray:
    """Invert the optical-density definition: I = I0 * 10**(-dOD)."""
    i0 = np.asarray(i0, dtype=float)
    if np.any(i0 <= 0):
        raise PhysioError("baseline intensity must be positive")
    return i0 * np.power(10.0, -np.asarray(dod, dtype=float))


# --- cardiac and instrumental components (volts at the AFE input) -------------


def _default_cardiac_gains() -> np.ndarray:
    """Per-channel cardiac amplitude factors, fixed spread in dB.

    Short channels (strong superficial pulsatility) sit at +0.5..+1.2 dB,
    long channels at -1.3..+0.4 dB; the set averages ~0 dB so the bench
    SNR spread stays inside the validated min/max window.
    """
    db = np.empty(N_CHANNELS)
    long_db = np.linspace(-1.05, 0.3, 16)
    short_db = np.linspace(0.4, 0.95, 8)
    li = si = 0
    for c in range(N_CHANNELS):
        if c % 3 == 1:             # group-major: middle detector is short
            db[c] = short_db[si]; si += 1
        else:
            db[c] = long_db[li]; li += 1
    return 10.0 ** (db / 20.0)


@dataclass
class CardiacParams:
    """Pulsatile waveform added at the AFE input, pre AC-coupling."""

    rate_bpm: float = 72.0
    # Sized so the calibrated noise sigma sits well above one ADC step
    # and dithers the quantizer.
    amplitude_v: float = 4e-3
    harmonic_ratios: tuple[float, ...] = (1.0, 0.2)
    channel_gains: np.ndarray = field(default_factory=_default_cardiac_gains)

    def waveform(self, t_s: np.ndarray) -> np.ndarray:
        f = self.rate_bpm / 60.0
        out = np.zeros_like(t_s, dtype=float)
        for k, ratio in enumerate(self.harmonic_ratios, start=1):
            out += ratio * np.sin(2 * math.pi * k * f * t_s)
        return self.amplitude_v * out

    def series(self, t_s: np.ndarray) -> np.ndarray:
        """(24, n) cardiac voltage for all channels."""
        return self.channel_gains[:, None] * self.waveform(t_s)[None, :]


@dataclass
class InstrumentDriftParams:
    """Slow additive instrumentation drift at the AFE input."""

    amplitude_v: float = 5e-5          # ~0.5% of the default baseline intensity
    period_range_s: tuple[float, float] = (60.0, 600.0)

    def series(self, t_s: np.ndarray, seed: int = 0) -> np.ndarray:
        if self.amplitude_v == 0:
            return np.zeros((N_CHANNELS, len(t_s)))
        rng = np.random.default_rng([seed, 0xD21F7])
        out = np.zeros((N_CHANNELS, len(t_s)))
        lo, hi = self.period_range_s
        for c in range(N_CHANNELS):
            for _ in range(2):
                period = rng.uniform(lo, hi)
                phase = rng.uniform(0, 2 * math.pi)
                out[c] += rng.uniform(0.3, 1.0) * np.sin(
                    2 * math.pi * t_s / period + phase)
        return self.amplitude_v * out / 2.0


# --- metrics ------------------------------------------------------------------


def measure_snr(signal: np.ndarray, noise: np.ndarray) -> float:
    """SNR in dB: 10*log10 of mean-removed signal power over noise power."""
    signal = np.asarray(signal, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if signal.size == 0 or noise.size == 0:
        raise PhysioError("signal and noise series must be non-empty")
    p_sig = np.mean((signal - signal.mean()) ** 2)
    p_noise = np.mean((noise - noise.mean()) ** 2)
    if p_noise <= 0:
        raise PhysioError("noise power is zero")
    return 10.0 * math.log10(p_sig / p_noise)
