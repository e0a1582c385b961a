"""Host-side processing: frames -> per-channel hemodynamics + heart rate.

Stages: demultiplex fresh samples into per-(channel, wavelength) visit
series; undo the known front-end (offset, gain, AC-coupling) to recover
input-referred intensity; convert to optical density changes against a
baseline window; zero-phase band-pass; invert the 2x2 absorption system
to concentration changes; apply the anti-phase correlation correction;
and estimate instantaneous heart rate from the raw pulsatile series of
a short channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, find_peaks, sosfreqz

from .afe import (AfeParams, adc_to_volts, inverse_first_order_highpass)
from .layout import SensorLayout
from .messages import FrameBatch, N_CHANNELS, N_GROUPS, WAVELENGTHS_NM
from .optics import MM_PER_UM, OpticalTable
from .optics import dpf_lookup  # re-exported: part of this module's surface

__all__ = [
    "ChannelSeries", "HemoSeries", "PipelineConfig", "PipelineError",
    "PipelineResult", "bandpass_zero_phase", "cbsi", "CbsiResult",
    "demux_channels", "dpf_lookup", "estimate_heart_rate",
    "intensity_to_dod", "mbll_invert", "process_pipeline",
    "reconstruct_intensity",
]


class PipelineError(ValueError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ChannelSeries:
    """Samples of one (channel, wavelength) pair after demultiplexing.

    frame_* arrays hold the per-frame fresh assignments with their stale
    mask; t_s/values hold the uniform one-value-per-visit series used
    downstream (stale samples excluded from the averages).
    """

    channel_id: int
    wavelength_nm: int
    t_s: np.ndarray
    values: np.ndarray
    frame_t_s: np.ndarray
    frame_values: np.ndarray
    stale: np.ndarray

    @property
    def sample_rate_hz(self) -> float:
        if len(self.t_s) < 2:
            return 0.0
        return 1.0 / float(np.median(np.diff(self.t_s)))


@dataclass
class HemoSeries:
    """Concentration-change series for one channel.

    dhbo/dhbr are the band-passed concentrations with their corrected
    (anti-phase-constrained) counterparts. The wideband pair skips the
    band-pass: the 0.01 Hz zero-phase edge averages over ~1 minute and
    suppresses most of a multi-minute plateau, so sustained response
    magnitudes are only meaningful on the unfiltered series.
    """

    channel_id: int
    t_s: np.ndarray
    dhbo_um: np.ndarray
    dhbr_um: np.ndarray
    cbsi_dhbo_um: np.ndarray
    cbsi_dhbr_um: np.ndarray
    cbsi_beta: float
    cbsi_degenerate: bool
    wideband_dhbo_um: np.ndarray | None = None
    wideband_dhbr_um: np.ndarray | None = None


@dataclass
class PipelineConfig:
    band_lo_hz: float = 0.01
    band_hi_hz: float = 0.5
    filter_order: int = 4
    age_years: float = 25.0
    baseline_window_s: tuple[float, float] | float = 20.0
    cardiac_band_hz: tuple[float, float] = (0.5, 3.0)
    peak_refractory_s: float = 0.33

    def baseline_window(self) -> tuple[float, float]:
        if isinstance(self.baseline_window_s, (int, float)):
            return (0.0, float(self.baseline_window_s))
        lo, hi = self.baseline_window_s
        return (float(lo), float(hi))


@dataclass
class PipelineResult:
    channels: dict[int, HemoSeries]
    series: dict[tuple[int, int], ChannelSeries]
    heart_rate_t_s: np.ndarray
    heart_rate_bpm: np.ndarray
    heart_rate_channel: int
    seq_gaps: int


# --- demultiplexing ------------------------------------------------------------


def demux_channels(frames, dwell_ms: float = 5.0,
                   wavelength_period_ms: float = 15.0,
                   values: np.ndarray | None = None
                   ) -> tuple[dict[tuple[int, int], ChannelSeries], int]:
    """Split frames into per-(channel, wavelength) visit-averaged series.

    A frame's fresh samples are the 8 channels its mux indices select,
    filed under the frame's wavelength flag. The first frame after any
    mux or wavelength switch is stale (filter still settling toward the
    new input) and is excluded from visit averages. Returns the series
    map and the number of sequence gaps seen.

    `values` optionally substitutes a (n_frames, 24) float matrix (for
    example reconstructed intensities) for the raw ADC codes.
    """
    batch = frames if isinstance(frames, FrameBatch) else FrameBatch.from_frames(list(frames))
    n = len(batch)
    if n == 0:
        return {}, 0
    if values is None:
        values = batch.samples
    elif values.shape != batch.samples.shape:
        raise PipelineError("demux", "values matrix must be (n_frames, 24)")
    t_s = batch.timestamp_us.astype(np.float64) * 1e-6
    wl = batch.wavelength_nm.astype(np.int64)
    seq = batch.seq.astype(np.int64)
    wl_changed = np.empty(n, dtype=bool)
    wl_changed[0] = True
    wl_changed[1:] = wl[1:] != wl[:-1]
    seq_gaps = int(np.count_nonzero(seq[1:] != seq[:-1] + 1))
    dwell_s = dwell_ms * 1e-3

    out: dict[tuple[int, int], ChannelSeries] = {}
    for g in range(N_GROUPS):
        mux_g = batch.mux_idx[:, g].astype(np.int64)
        mux_changed = np.empty(n, dtype=bool)
        mux_changed[0] = True
        mux_changed[1:] = mux_g[1:] != mux_g[:-1]
        stale_g = mux_changed | wl_changed
        for det in range(3):
            c = 3 * g + det
            sel = mux_g == det
            for wl_nm in WAVELENGTHS_NM:
                psel = sel & (wl == wl_nm)
                tt = t_s[psel]
                vv = values[psel, c].astype(np.float64)
                ss = stale_g[psel]
                if len(tt) == 0:
                    out[(c, wl_nm)] = ChannelSeries(
                        c, wl_nm, np.empty(0), np.empty(0), tt, vv, ss)
                    continue
                new_visit = np.empty(len(tt), dtype=bool)
                new_visit[0] = True
                new_visit[1:] = np.diff(tt) > dwell_s * 1.001
                visit = np.cumsum(new_visit) - 1
                nv = visit[-1] + 1
                cnt = np.bincount(visit[~ss], minlength=nv).astype(float)
                sums = np.bincount(visit[~ss], weights=vv[~ss], minlength=nv)
                tsum = np.bincount(visit[~ss], weights=tt[~ss], minlength=nv)
                # visits left with only stale frames fall back to all frames
                empty = cnt == 0
                if np.any(empty):
                    cnt_all = np.bincount(visit, minlength=nv).astype(float)
                    sums_all = np.bincount(visit, weights=vv, minlength=nv)
                    tsum_all = np.bincount(visit, weights=tt, minlength=nv)
                    cnt[empty] = cnt_all[empty]
                    sums[empty] = sums_all[empty]
                    tsum[empty] = tsum_all[empty]
                out[(c, wl_nm)] = ChannelSeries(
                    c, wl_nm, tsum / cnt, sums / cnt, tt, vv, ss)
    return out, seq_gaps


# --- per-series transforms ------------------------------------------------------


def reconstruct_intensity(volts: np.ndarray, sample_rate_hz: float,
                          afe: AfeParams, axis: int = -1) -> np.ndarray:
    """Undo offset, gain, and AC coupling: AFE output -> input-referred AC.

    The AC-coupling high-pass removes sustained hemodynamic content below
    ~0.08 Hz; inverting it (the front-end parameters are known to the
    host) restores the slow signal up to an unobservable constant. Must
    run on a channel's full logged series, where both wavelengths are
    interleaved as the analog stage physically saw them; per-wavelength
    slices would integrate the inter-wavelength level offset into a ramp.
    """
    ac = (np.asarray(volts, dtype=float) - afe.dc_offset_v) / afe.ac_gain_v_per_v
    # A genuine high-pass output has near-zero mean over a long record;
    # any residual mean (quantization offset, gain/offset mismatch) would
    # integrate into a spurious ramp, so remove it before inverting.
    ac = ac - ac.mean(axis=axis, keepdims=True)
    return inverse_first_order_highpass(ac, sample_rate_hz,
                                        afe.ac_couple_cutoff_hz, axis=axis)


def intensity_to_dod(intensity: np.ndarray, t_s: np.ndarray,
                     baseline_window: tuple[float, float]) -> np.ndarray:
    """dOD(t) = -log10(I(t) / I_ref), I_ref = mean over the baseline window."""
    intensity = np.asarray(intensity, dtype=float)
    if np.any(intensity <= 0):
        raise PipelineError("dod", "non-positive intensity sample")
    lo, hi = baseline_window
    m = (t_s >= lo) & (t_s < hi)
    if not np.any(m):
        raise PipelineError("dod", f"baseline window [{lo}, {hi}) s is empty")
    i_ref = intensity[m].mean()
    return -np.log10(intensity / i_ref)


def bandpass_zero_phase(x: np.ndarray, fs: float, lo: float, hi: float,
                        order: int = 4) -> np.ndarray:
    """Butterworth band-pass, forward and backward passes (zero phase).

    The combined response is the squared magnitude of the one-pass
    Butterworth. It is applied spectrally: the low band edge (0.01 Hz)
    rings for longer than typical records, so running the recursion in
    the time domain smears edge transients across the whole series no
    matter the padding. The series is linearly detrended, odd-reflection
    padded by three settling lengths (clipped to the series length), and
    multiplied by |H(f)|^2 of the second-order-section design.
    """
    x = np.asarray(x, dtype=float)
    if not 0 < lo < hi < fs / 2:
        raise PipelineError("bandpass", f"band ({lo}, {hi}) Hz invalid for "
                                        f"fs={fs} Hz")
    n = len(x)
    if n <= 6 * order:
        raise PipelineError("bandpass", f"series too short ({n} samples)")
    # remove the straight line through the endpoints so the mirrored
    # extension is value-continuous with zero-mean pads (DC and a global
    # ramp are outside the band anyway)
    ramp = x[0] + (x[-1] - x[0]) * np.arange(n) / max(n - 1, 1)
    xd = x - ramp
    pad = min(n - 1, int(round(3 * fs / lo)))
    xe = np.concatenate([xd[pad:0:-1], xd, xd[-2:-pad - 2:-1]])
    freqs = np.fft.rfftfreq(len(xe), 1.0 / fs)
    sos = butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    _, h = sosfreqz(sos, worN=freqs, fs=fs)
    spec = np.fft.rfft(xe) * np.abs(h) ** 2
    return np.fft.irfft(spec, n=len(xe))[pad:pad + n]


def mbll_invert(dod_660: np.ndarray, dod_940: np.ndarray,
                optics: OpticalTable, d_cm: float,
                dpf_660: float, dpf_940: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve the 2x2 absorption system per sample; returns (dHbO, dHbR) in uM."""
    if d_cm <= 0 or dpf_660 <= 0 or dpf_940 <= 0:
        raise PipelineError("mbll", "distance and DPFs must be positive")
    eps = optics.epsilon_matrix()
    cond = np.linalg.cond(eps)
    if not np.isfinite(cond) or cond > 1e4:
        raise PipelineError("mbll", f"extinction matrix ill-conditioned "
                                    f"(cond={cond:.3g})")
    a = eps[0, 0] * d_cm * dpf_660
    b = eps[0, 1] * d_cm * dpf_660
    c = eps[1, 0] * d_cm * dpf_940
    d = eps[1, 1] * d_cm * dpf_940
    det = a * d - b * c
    dhbo_mm = (d * np.asarray(dod_660) - b * np.asarray(dod_940)) / det
    dhbr_mm = (-c * np.asarray(dod_660) + a * np.asarray(dod_940)) / det
    return dhbo_mm / MM_PER_UM, dhbr_mm / MM_PER_UM


@dataclass
class CbsiResult:
    dhbo: np.ndarray
    dhbr: np.ndarray
    beta: float
    degenerate: bool


def cbsi(dhbo: np.ndarray, dhbr: np.ndarray) -> CbsiResult:
    """Anti-phase correlation correction.

    beta = std(dHbO)/std(dHbR); corrected dHbO* = (dHbO - beta*dHbR)/2 and
    dHbR* = -dHbO*/beta, which makes the pair perfectly anti-correlated.
    Zero-variance inputs pass through with the degenerate flag set.
    """
    dhbo = np.asarray(dhbo, dtype=float)
    dhbr = np.asarray(dhbr, dtype=float)
    if dhbo.shape != dhbr.shape or dhbo.size < 2:
        raise PipelineError("cbsi", "series must have equal length >= 2")
    s_o, s_r = float(np.std(dhbo)), float(np.std(dhbr))
    if s_r == 0.0 or s_o == 0.0:
        return CbsiResult(dhbo.copy(), dhbr.copy(), 0.0, True)
    beta = s_o / s_r
    corrected = (dhbo - beta * dhbr) / 2.0
    return CbsiResult(corrected, -corrected / beta, beta, False)


def estimate_heart_rate(intensity: np.ndarray, fs: float,
                        band_hz: tuple[float, float] = (0.5, 3.0),
                        refractory_s: float = 0.33
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Instantaneous bpm from the pulsatile waveform's peak intervals.

    Band-passes to the cardiac band, finds maxima with prominence of at
    least 0.25x the band-passed RMS separated by the refractory time,
    refines peak instants with a parabolic fit, and converts successive
    intervals to bpm. Returns (t_s of each interval end, bpm).
    """
    x = np.asarray(intensity, dtype=float)
    if fs <= 6.0:
        raise PipelineError("heart-rate", f"sample rate {fs} Hz too low")
    if len(x) / fs < 5.0:
        raise PipelineError("heart-rate", "need at least 5 s of data")
    bp = bandpass_zero_phase(x, fs, band_hz[0], band_hz[1], order=2)
    rms = float(np.sqrt(np.mean(bp ** 2)))
    if rms == 0.0:
        raise PipelineError("heart-rate", "no pulsatile content")
    peaks, _ = find_peaks(bp, prominence=0.25 * rms,
                          distance=max(1, int(round(refractory_s * fs))))
    # zero-phase filtering leaves edge regions unreliable: skip peaks
    # within one low-band period of either end
    guard = int(round(fs / band_hz[0]))
    peaks = peaks[(peaks > max(0, guard)) & (peaks < len(bp) - 1 - guard)]
    if len(peaks) < 2:
        raise PipelineError("heart-rate", "no peaks found")
    y0, y1, y2 = bp[peaks - 1], bp[peaks], bp[peaks + 1]
    denom = y0 - 2 * y1 + y2
    delta = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom == 0, 1, denom), 0.0)
    t_peaks = (peaks + delta) / fs
    intervals = np.diff(t_peaks)
    return t_peaks[1:], 60.0 / intervals


# --- end-to-end composition ----------------------------------------------------


def process_pipeline(frames, layout: SensorLayout, optics: OpticalTable,
                     config: PipelineConfig | None = None,
                     afe: AfeParams | None = None,
                     dwell_ms: float = 5.0,
                     wavelength_period_ms: float = 15.0) -> PipelineResult:
    """Run the full chain over a recorded frame stream."""
    config = config or PipelineConfig()
    afe = afe or AfeParams()
    batch = frames if isinstance(frames, FrameBatch) else FrameBatch.from_frames(list(frames))
    if len(batch) == 0:
        raise PipelineError("demux", "no frames to process")
    t0_us = int(batch.timestamp_us[0])
    # drop the first full dual-wavelength cycle: filter streams are still
    # seeding and frames carry placeholder zeros for unvisited channels
    warm_us = 2 * int(wavelength_period_ms * 1000)
    keep = batch.timestamp_us.astype(np.int64) >= t0_us + warm_us
    batch = FrameBatch(batch.seq[keep], batch.timestamp_us[keep],
                       batch.wavelength_nm[keep], batch.mux_idx[keep],
                       batch.samples[keep])
    if len(batch) < 8:
        raise PipelineError("demux", "record too short after warm-up trim")
    window = config.baseline_window()
    rel_batch = FrameBatch(batch.seq,
                           ((batch.timestamp_us.astype(np.int64) - t0_us)
                            ).astype(np.uint64),
                           batch.wavelength_nm, batch.mux_idx, batch.samples)
    series, seq_gaps = demux_channels(rel_batch, dwell_ms,
                                      wavelength_period_ms)

    # Per channel, the AC-coupled front end saw the two wavelengths'
    # intensities interleaved. Split the record into the slow common
    # component (the per-cycle mean of both wavelengths, which the
    # high-pass attenuated and which therefore needs inversion) and the
    # per-wavelength deviation from that mean (a ~33 Hz alternation the
    # high-pass passed through untouched). Integrating only the cycle
    # mean keeps hold/settling fine structure out of the integrator.
    intensities: dict[tuple[int, int], np.ndarray] = {}
    dods: dict[tuple[int, int], np.ndarray] = {}
    dods_wide: dict[tuple[int, int], np.ndarray] = {}
    gain = afe.ac_gain_v_per_v
    for c in range(N_CHANNELS):
        s660, s940 = series[(c, 660)], series[(c, 940)]
        if len(s660.t_s) < 2 or len(s940.t_s) < 2:
            raise PipelineError("demux", f"channel {c}: no visits")
        y660 = (adc_to_volts(s660.values) - afe.dc_offset_v) / gain
        y940 = (adc_to_volts(s940.values) - afe.dc_offset_v) / gain
        fs_c = s660.sample_rate_hz
        m = 0.5 * (y660 + np.interp(s660.t_s, s940.t_s, y940))
        slow = reconstruct_intensity(afe.dc_offset_v + gain * m, fs_c, afe)
        base660 = (s660.t_s >= window[0]) & (s660.t_s < window[1])
        if not np.any(base660):
            raise PipelineError("dod", f"baseline window {window} s is empty")
        slow = slow - slow[base660].mean()
        i0 = 0.5 * (optics.baseline(c, 660) + optics.baseline(c, 940))
        i660 = i0 + slow + (y660 - m)
        i940 = (i0 + np.interp(s940.t_s, s660.t_s, slow)
                + (y940 - np.interp(s940.t_s, s660.t_s, m)))
        for wl_nm, s, intensity in ((660, s660, i660), (940, s940, i940)):
            fs = s.sample_rate_hz
            intensities[(c, wl_nm)] = intensity
            dod = intensity_to_dod(intensity, s.t_s, window)
            dods_wide[(c, wl_nm)] = dod
            dods[(c, wl_nm)] = bandpass_zero_phase(
                dod, fs, config.band_lo_hz, config.band_hi_hz,
                config.filter_order)

    dpf_660 = dpf_lookup(config.age_years, 660)
    dpf_940 = dpf_lookup(config.age_years, 940)
    channels: dict[int, HemoSeries] = {}
    for c in range(N_CHANNELS):
        s660, s940 = series[(c, 660)], series[(c, 940)]
        t = s660.t_s
        dod660 = dods[(c, 660)]
        dod940 = np.interp(t, s940.t_s, dods[(c, 940)])
        dhbo, dhbr = mbll_invert(dod660, dod940, optics,
                                 layout.distance_cm(c), dpf_660, dpf_940)
        corr = cbsi(dhbo, dhbr)
        wb660 = dods_wide[(c, 660)]
        wb940 = np.interp(t, s940.t_s, dods_wide[(c, 940)])
        wb_hbo, wb_hbr = mbll_invert(wb660, wb940, optics,
                                     layout.distance_cm(c), dpf_660, dpf_940)
        channels[c] = HemoSeries(c, t, dhbo, dhbr, corr.dhbo, corr.dhbr,
                                 corr.beta, corr.degenerate,
                                 wideband_dhbo_um=wb_hbo,
                                 wideband_dhbr_um=wb_hbr)

    # heart rate from the strongest short-channel pulsatile series
    best, best_rms = None, -1.0
    for c in layout.short_channels:
        for wl_nm in WAVELENGTHS_NM:
            s = series[(c, wl_nm)]
            fs = s.sample_rate_hz
            if fs <= 6.0 or len(s.t_s) / fs < 5.0:
                continue
            try:
                bp = bandpass_zero_phase(intensities[(c, wl_nm)], fs,
                                         *config.cardiac_band_hz, order=2)
            except PipelineError:
                continue
            rms = float(np.sqrt(np.mean(bp ** 2)))
            if rms > best_rms:
                best, best_rms = (c, wl_nm), rms
    hr_t, hr_bpm, hr_channel = np.empty(0), np.empty(0), -1
    if best is not None:
        s = series[best]
        try:
            hr_t, hr_bpm = estimate_heart_rate(
                intensities[best], s.sample_rate_hz,
                band_hz=config.cardiac_band_hz,
                refractory_s=config.peak_refractory_s)
            hr_t = hr_t + s.t_s[0]  # series-relative -> record-relative
            hr_channel = best[0]
        except PipelineError:
            pass                    # pulseless record: report no heart rate

    return PipelineResult(channels=channels, series=series,
                          heart_rate_t_s=hr_t, heart_rate_bpm=hr_bpm,
                          heart_rate_channel=hr_channel, seq_gaps=seq_gaps)
