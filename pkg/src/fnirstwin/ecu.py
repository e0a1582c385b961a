"""Deterministic virtual-clock emulation of the acquisition firmware.

Timing model: the ADC start-of-conversion fires at 5 kHz and reads the 8
currently-muxed detectors (one per group); each reading is quantized and
run through the per-stream first-order smoothing filter. A frame holding
all 24 latest filtered values is logged at 1 kHz. Multiplexers advance
every dwell period (default 5 ms) unless overridden, and the active
emitter wavelength toggles every 15 ms, aligned to a full mux cycle so
every (channel, wavelength) pair refreshes within 30 ms.

The smoothing filter keeps one state per (channel, wavelength) stream:
a single shared state would mix the two interleaved wavelengths' light
levels into each other and corrupt the downstream inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .afe import adc_quantize
from .messages import (ACK_BAD_PARAM, ACK_OK, ADC_MAX, Ack, Command,
                       MUX_AUTO, MuxOverride, N_CHANNELS, N_GROUPS,
                       PWM_DUTY_MAX, PWM_FREQ_MAX_HZ, PWM_FREQ_MIN_HZ,
                       PWM_PHASE_MAX, SetEmitter, SetIirCutoff,
                       StatusRequest, StreamControl, FrameBatch)

DEFAULT_SAMPLING_RATE_HZ = 5000
DEFAULT_LOGGING_RATE_HZ = 1000
DEFAULT_MUX_DWELL_MS = 5
DEFAULT_WAVELENGTH_PERIOD_MS = 15
DEFAULT_IIR_CUTOFF_HZ = 20.0


class EcuError(ValueError):
    pass


def iir_alpha(f_c_hz: float, f_s_hz: float) -> float:
    """Smoothing factor alpha = 1 - exp(-2*pi*f_c/f_s)."""
    if f_s_hz <= 0:
        raise EcuError(f"sampling rate must be positive, got {f_s_hz}")
    if f_c_hz < 0:
        raise EcuError(f"cutoff must be non-negative, got {f_c_hz}")
    return 1.0 - math.exp(-2.0 * math.pi * f_c_hz / f_s_hz)


def iir_step(y_prev: float, x: float, alpha: float) -> float:
    """One smoothing update: y = alpha*x + (1-alpha)*y_prev (unit DC gain)."""
    if not 0.0 <= alpha <= 1.0:
        raise EcuError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * x + (1.0 - alpha) * y_prev


@dataclass
class EmitterSettings:
    """PWM drive for one wavelength of one emitter group."""

    duty: int = PWM_DUTY_MAX          # 100% by default
    freq_hz: int = 1000
    phase: int = 0
    enabled: bool = True

    def intensity_scale(self) -> float:
        # PWM is modeled as its time-averaged brightness
        return (self.duty / PWM_DUTY_MAX) if self.enabled else 0.0


def _default_emitters() -> list[list[EmitterSettings]]:
    return [[EmitterSettings(), EmitterSettings()] for _ in range(N_GROUPS)]


@dataclass
class EcuState:
    """Complete firmware state; advanced only by step_ecu / handle_command."""

    virtual_time_us: int = 0
    seq: int = 0
    mux_override: np.ndarray = field(
        default_factory=lambda: np.full(N_GROUPS, MUX_AUTO, dtype=np.int64))
    # (channel, wl-index) filter memories; NaN = stream not yet seeded.
    # The filter warm-starts on a stream's first reading so a cold boot
    # does not ramp in from zero.
    filt: np.ndarray = field(
        default_factory=lambda: np.full((N_CHANNELS, 2), np.nan))
    iir_cutoff_hz: float = DEFAULT_IIR_CUTOFF_HZ
    alpha: float = field(default=0.0)
    emitters: list[list[EmitterSettings]] = field(default_factory=_default_emitters)
    streaming: bool = True
    sampling_rate_hz: int = DEFAULT_SAMPLING_RATE_HZ
    logging_rate_hz: int = DEFAULT_LOGGING_RATE_HZ
    mux_dwell_ms: int = DEFAULT_MUX_DWELL_MS
    wavelength_period_ms: int = DEFAULT_WAVELENGTH_PERIOD_MS

    def __post_init__(self):
        if self.alpha == 0.0:
            self.alpha = iir_alpha(self.iir_cutoff_hz, self.sampling_rate_hz)

    def emitter_scale_matrix(self) -> np.ndarray:
        """(group, wl-index) time-averaged brightness factors."""
        return np.array([[e.intensity_scale() for e in row]
                         for row in self.emitters])

    def status(self) -> dict:
        return {
            "virtual_time_us": int(self.virtual_time_us),
            "seq": int(self.seq),
            "streaming": self.streaming,
            "iir_cutoff_hz": self.iir_cutoff_hz,
            "sampling_rate_hz": self.sampling_rate_hz,
            "logging_rate_hz": self.logging_rate_hz,
            "mux_dwell_ms": self.mux_dwell_ms,
            "wavelength_period_ms": self.wavelength_period_ms,
            "mux_override": [int(v) for v in self.mux_override],
            "emitters": [[{"wavelength_nm": wl, "duty": e.duty,
                           "freq_hz": e.freq_hz, "phase": e.phase,
                           "enabled": e.enabled}
                          for wl, e in zip((660, 940), row)]
                         for row in self.emitters],
        }


def step_ecu(state: EcuState, sampler, duration_us: int) -> FrameBatch:
    """Advance the firmware clock, sampling and logging along the way.

    The sampler is called as sampler(channel_ids, wavelengths_nm, t_us)
    with numpy arrays and must return AFE output voltages. Output frames
    are identical regardless of how a span is split across calls.
    """
    if duration_us <= 0:
        raise EcuError("duration_us must be positive")
    t0 = state.virtual_time_us
    t_end = t0 + int(duration_us)
    adc_p = 1_000_000 // state.sampling_rate_hz
    log_p = 1_000_000 // state.logging_rate_hz
    dwell_us = state.mux_dwell_ms * 1000
    wl_period_us = state.wavelength_period_ms * 1000

    t_adc = np.arange(-(-t0 // adc_p), -(-t_end // adc_p), dtype=np.int64) * adc_p
    t_log = np.arange(-(-t0 // log_p), -(-t_end // log_p), dtype=np.int64) * log_p
    wl_idx = ((t_adc // wl_period_us) % 2).astype(np.int64)
    wl_nm = np.where(wl_idx == 1, 940, 660)
    auto_idx = ((t_adc // dwell_us) % 3).astype(np.int64)
    log_wl_idx = ((t_log // wl_period_us) % 2).astype(np.int64)

    n_frames = len(t_log)
    samples = np.empty((n_frames, N_CHANNELS))
    alpha = state.alpha
    b, a = [alpha], [1.0, -(1.0 - alpha)]

    for g in range(N_GROUPS):
        ov = int(state.mux_override[g])
        idx_t = auto_idx if ov == MUX_AUTO else np.full_like(auto_idx, ov)
        volts = sampler(3 * g + idx_t, wl_nm, t_adc)
        codes = adc_quantize(volts).astype(float)
        for det in range(3):
            c = 3 * g + det
            det_sel = idx_t == det
            for wi in (0, 1):
                carried = state.filt[c, wi]
                fill = 0.0 if math.isnan(carried) else carried
                sel = det_sel & (wl_idx == wi)
                y_pair = None
                if np.any(sel):
                    x = codes[sel]
                    if alpha >= 1.0:
                        y_pair = x
                    else:
                        z0 = x[0] if math.isnan(carried) else carried
                        zi = np.array([(1.0 - alpha) * z0])
                        y_pair, _ = lfilter(b, a, x, zi=zi)
                    state.filt[c, wi] = y_pair[-1]
                pos = np.nonzero(log_wl_idx == wi)[0]
                if len(pos) == 0:
                    continue
                if y_pair is None:
                    samples[pos, c] = fill
                else:
                    j = np.searchsorted(t_adc[sel], t_log[pos], side="right") - 1
                    samples[pos, c] = np.where(
                        j >= 0, y_pair[np.clip(j, 0, None)], fill)

    mux_cols = np.empty((n_frames, N_GROUPS), dtype=np.uint8)
    for g in range(N_GROUPS):
        ov = int(state.mux_override[g])
        mux_cols[:, g] = (((t_log // dwell_us) % 3) if ov == MUX_AUTO
                          else np.full(n_frames, ov))

    state.virtual_time_us = t_end
    if not state.streaming:
        return FrameBatch(seq=np.empty(0, np.uint32),
                          timestamp_us=np.empty(0, np.uint64),
                          wavelength_nm=np.empty(0, np.uint16),
                          mux_idx=np.empty((0, N_GROUPS), np.uint8),
                          samples=np.empty((0, N_CHANNELS), np.uint16))
    batch = FrameBatch(
        seq=(state.seq + np.arange(n_frames, dtype=np.uint64)).astype(np.uint32),
        timestamp_us=t_log.astype(np.uint64),
        wavelength_nm=np.where(log_wl_idx == 1, 940, 660).astype(np.uint16),
        mux_idx=mux_cols,
        samples=np.clip(np.floor(samples + 0.5), 0, ADC_MAX).astype(np.uint16),
    )
    state.seq += n_frames
    return batch


def handle_command(state: EcuState, cmd: Command) -> Ack:
    """Apply a decoded control command; invalid parameters change nothing."""
    if isinstance(cmd, SetEmitter):
        if not (0 <= cmd.group < N_GROUPS
                and cmd.wavelength_nm in (660, 940)
                and 0 <= cmd.duty <= PWM_DUTY_MAX
                and PWM_FREQ_MIN_HZ <= cmd.freq_hz <= PWM_FREQ_MAX_HZ
                and 0 <= cmd.phase <= PWM_PHASE_MAX):
            return Ack(cmd.cmd_id, ACK_BAD_PARAM)
        e = state.emitters[cmd.group][0 if cmd.wavelength_nm == 660 else 1]
        e.duty, e.freq_hz, e.phase = cmd.duty, cmd.freq_hz, cmd.phase
        return Ack(cmd.cmd_id, ACK_OK)
    if isinstance(cmd, MuxOverride):
        if not (0 <= cmd.group < N_GROUPS
                and (cmd.channel in (0, 1, 2) or cmd.channel == MUX_AUTO)):
            return Ack(cmd.cmd_id, ACK_BAD_PARAM)
        state.mux_override[cmd.group] = cmd.channel
        return Ack(cmd.cmd_id, ACK_OK)
    if isinstance(cmd, SetIirCutoff):
        f_c = cmd.centi_hz / 100.0
        if not 0 <= f_c <= state.sampling_rate_hz / 2:
            return Ack(cmd.cmd_id, ACK_BAD_PARAM)
        state.iir_cutoff_hz = f_c
        state.alpha = iir_alpha(f_c, state.sampling_rate_hz)
        return Ack(cmd.cmd_id, ACK_OK)
    if isinstance(cmd, StreamControl):
        state.streaming = bool(cmd.on)
        return Ack(cmd.cmd_id, ACK_OK)
    if isinstance(cmd, StatusRequest):
        return Ack(cmd.cmd_id, ACK_OK)
    return Ack(getattr(cmd, "cmd_id", 0), ACK_BAD_PARAM)
