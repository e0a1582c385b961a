"""Firmware emulation: filter math, scheduling, framing, commands."""

import math

import numpy as np
import pytest

from fnirstwin.ecu import (EcuError, EcuState, handle_command, iir_alpha,
                           iir_step, step_ecu)
from fnirstwin.messages import (ACK_BAD_PARAM, ACK_OK, MUX_AUTO, MuxOverride,
                                SetEmitter, SetIirCutoff, StatusRequest,
                                StreamControl, FrameBatch)


def constant_sampler(value):
    def sampler(channels, wavelengths, t_us):
        return np.full(np.shape(t_us), value, dtype=float)
    return sampler


def channel_coded_sampler(channels, wavelengths, t_us):
    """Voltage encodes channel id and wavelength, for demux bookkeeping."""
    wl_flag = (np.asarray(wavelengths) == 940).astype(float)
    return (np.asarray(channels) * 0.1 + wl_flag * 0.04) / 4.0


class TestIirAlpha:
    def test_zero_cutoff(self):
        assert iir_alpha(0.0, 1000.0) == 0.0

    def test_derived_value_20_1000(self):
        assert iir_alpha(20.0, 1000.0) == pytest.approx(
            0.11808862170182366, rel=1e-12)

    def test_limit_to_one(self):
        assert abs(iir_alpha(1e6 * 1000.0, 1000.0) - 1.0) < 1e-12

    def test_invalid_fs(self):
        with pytest.raises(EcuError):
            iir_alpha(10.0, 0.0)
        with pytest.raises(EcuError):
            iir_alpha(-1.0, 100.0)


class TestIirStep:
    def test_passthrough(self):
        assert iir_step(0.3, 0.7, 1.0) == 0.7

    def test_hold(self):
        assert iir_step(0.3, 0.7, 0.0) == 0.3

    def test_half(self):
        assert iir_step(0.0, 1.0, 0.5) == 0.5

    def test_alpha_range_enforced(self):
        with pytest.raises(EcuError):
            iir_step(0.0, 1.0, 1.5)
        with pytest.raises(EcuError):
            iir_step(0.0, 1.0, -0.1)

    def test_impulse_response_is_geometric(self):
        alpha = iir_alpha(20.0, 1000.0)
        y, out = 0.0, []
        for k in range(100):
            y = iir_step(y, 1.0 if k == 0 else 0.0, alpha)
            out.append(y)
        want = alpha * (1 - alpha) ** np.arange(100)
        assert np.max(np.abs(np.array(out) - want)) < 1e-12

    def test_sinusoid_magnitude_matches_one_pole_response(self):
        alpha = iir_alpha(20.0, 1000.0)
        fs, f = 1000.0, 20.0
        t = np.arange(0, 3.0, 1 / fs)
        x = np.sin(2 * math.pi * f * t)
        y, out = 0.0, np.empty_like(x)
        for i, xi in enumerate(x):
            y = iir_step(y, xi, alpha)
            out[i] = y
        w = 2 * math.pi * f / fs
        h = alpha / abs(1 - (1 - alpha) * np.exp(-1j * w))
        tail = out[int(1.0 * fs):]
        got = (tail.max() - tail.min()) / 2
        assert got == pytest.approx(h, rel=0.01)


class TestStepEcu:
    def test_one_second_emits_exactly_1000_frames(self):
        state = EcuState()
        batch = step_ecu(state, constant_sampler(1.0), 1_000_000)
        assert len(batch) == 1000
        assert list(batch.seq[:2]) == [0, 1]
        assert int(batch.seq[-1]) == 999
        assert np.all(np.diff(batch.timestamp_us.astype(np.int64)) > 0)

    def test_mux_advances_every_five_frames(self):
        state = EcuState()
        batch = step_ecu(state, constant_sampler(1.0), 60_000)
        for g in range(8):
            col = batch.mux_idx[:, g].astype(int)
            want = (np.arange(60) // 5) % 3
            assert np.array_equal(col, want)

    def test_wavelength_alternates_every_15_frames(self):
        state = EcuState()
        batch = step_ecu(state, constant_sampler(1.0), 30_000)
        assert np.all(batch.wavelength_nm[:15] == 660)
        assert np.all(batch.wavelength_nm[15:30] == 940)

    def test_chunked_equals_whole(self):
        s1, s2 = EcuState(), EcuState()
        whole = step_ecu(s1, channel_coded_sampler, 500_000)
        parts = [step_ecu(s2, channel_coded_sampler, d)
                 for d in (70_000, 130_000, 300_000)]
        merged = FrameBatch.concat(parts)
        assert np.array_equal(whole.samples, merged.samples)
        assert np.array_equal(whole.seq, merged.seq)
        assert np.array_equal(whole.mux_idx, merged.mux_idx)

    def test_pair_refresh_within_30ms(self):
        # every (channel, wavelength) pair gets fresh ADC samples inside
        # any 30 ms window: max gap between consecutive dwell samples
        state = EcuState()
        batch = step_ecu(state, constant_sampler(0.5), 300_000)
        for g in range(8):
            mux = batch.mux_idx[:, g].astype(int)
            for det in range(3):
                for wl in (660, 940):
                    sel = (mux == det) & (batch.wavelength_nm == wl)
                    t = batch.timestamp_us[sel].astype(np.int64)
                    assert len(t) > 0
                    assert np.max(np.diff(t)) <= 30_000

    def test_streaming_off_suppresses_frames_but_advances(self):
        state = EcuState()
        handle_command(state, StreamControl(False))
        batch = step_ecu(state, constant_sampler(1.0), 100_000)
        assert len(batch) == 0
        assert state.virtual_time_us == 100_000
        assert state.seq == 0
        handle_command(state, StreamControl(True))
        batch = step_ecu(state, constant_sampler(1.0), 100_000)
        assert len(batch) == 100
        assert int(batch.seq[0]) == 0

    def test_constant_input_converges_to_code(self):
        state = EcuState()
        batch = step_ecu(state, constant_sampler(1.65), 2_000_000)
        # warm-started filter should sit at the quantized level immediately
        assert np.all(batch.samples[-100:] == 2048)

    def test_invalid_duration(self):
        with pytest.raises(EcuError):
            step_ecu(EcuState(), constant_sampler(1.0), 0)


class TestHandleCommand:
    def test_set_emitter_ok_and_reflected(self):
        state = EcuState()
        ack = handle_command(state, SetEmitter(0, 940, 4095, 1526, 0))
        assert ack.status == ACK_OK
        e = state.emitters[0][1]
        assert (e.duty, e.freq_hz, e.phase) == (4095, 1526, 0)

    def test_set_emitter_bad_freq_no_change(self):
        state = EcuState()
        before = state.emitters[2][0].freq_hz
        ack = handle_command(state, SetEmitter(2, 660, 100, 2000, 0))
        assert ack.status == ACK_BAD_PARAM
        assert state.emitters[2][0].freq_hz == before

    def test_set_emitter_low_freq_bound(self):
        state = EcuState()
        assert handle_command(state, SetEmitter(0, 660, 0, 24, 0)).ok
        assert handle_command(state, SetEmitter(0, 660, 0, 23, 0)).status \
            == ACK_BAD_PARAM

    def test_mux_override_and_restore(self):
        state = EcuState()
        ack = handle_command(state, MuxOverride(3, 2))
        assert ack.ok and state.mux_override[3] == 2
        batch = step_ecu(state, constant_sampler(1.0), 20_000)
        assert np.all(batch.mux_idx[:, 3] == 2)
        assert not np.all(batch.mux_idx[:, 0] == 2)
        ack = handle_command(state, MuxOverride(3, MUX_AUTO))
        assert ack.ok and state.mux_override[3] == MUX_AUTO

    def test_mux_override_bad_params(self):
        state = EcuState()
        assert handle_command(state, MuxOverride(9, 0)).status == ACK_BAD_PARAM
        assert handle_command(state, MuxOverride(0, 5)).status == ACK_BAD_PARAM

    def test_set_iir_cutoff_recomputes_alpha(self):
        state = EcuState()
        ack = handle_command(state, SetIirCutoff(5000))   # 50 Hz
        assert ack.ok
        assert state.iir_cutoff_hz == 50.0
        assert state.alpha == pytest.approx(iir_alpha(50.0, 5000.0))

    def test_set_iir_cutoff_beyond_nyquist_rejected(self):
        state = EcuState()
        before = state.alpha
        ack = handle_command(state, SetIirCutoff(300_000))  # 3 kHz > fs/2
        assert ack.status == ACK_BAD_PARAM
        assert state.alpha == before

    def test_status_request_is_ok_noop(self):
        state = EcuState()
        snapshot = state.status()
        assert handle_command(state, StatusRequest()).ok
        assert state.status() == snapshot
