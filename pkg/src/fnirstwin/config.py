"""Device configuration: one document tying together the signal model,
front-end parameters, firmware schedule, and simulation seeds, with JSON
round-tripping for session headers and config files.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .afe import AfeParams, OpticalAfeSampler, SignalModel
from .ecu import (DEFAULT_IIR_CUTOFF_HZ, DEFAULT_LOGGING_RATE_HZ,
                  DEFAULT_MUX_DWELL_MS, DEFAULT_SAMPLING_RATE_HZ,
                  DEFAULT_WAVELENGTH_PERIOD_MS, EcuState, iir_alpha, step_ecu)
from .layout import SensorLayout, harness_layout, headband_layout
from .messages import FrameBatch
from .optics import OpticalTable
from .physio import (CardiacParams, HemoGroundTruth, HemoParams,
                     InstrumentDriftParams, ProtocolTimeline,
                     build_protocol_timeline, default_timeline,
                     synth_hemodynamics)

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class DeviceConfig:
    """Complete simulated-device setup."""

    layout_name: str = "harness"
    baseline_v: float = 0.040
    age_years: float = 25.0
    iir_cutoff_hz: float = DEFAULT_IIR_CUTOFF_HZ
    mux_dwell_ms: int = DEFAULT_MUX_DWELL_MS
    wavelength_period_ms: int = DEFAULT_WAVELENGTH_PERIOD_MS
    sampling_rate_hz: int = DEFAULT_SAMPLING_RATE_HZ
    logging_rate_hz: int = DEFAULT_LOGGING_RATE_HZ
    seed: int = 0
    afe: AfeParams = field(default_factory=AfeParams)
    cardiac: CardiacParams = field(default_factory=CardiacParams)
    drift: InstrumentDriftParams = field(default_factory=InstrumentDriftParams)
    hemo: HemoParams = field(default_factory=HemoParams)

    def layout(self) -> SensorLayout:
        if self.layout_name == "harness":
            return harness_layout()
        if self.layout_name == "headband":
            return headband_layout()
        raise ConfigError(f"unknown layout {self.layout_name!r}")

    def optics(self) -> OpticalTable:
        return OpticalTable.default(baseline_v=self.baseline_v)

    def make_ecu_state(self) -> EcuState:
        return EcuState(
            iir_cutoff_hz=self.iir_cutoff_hz,
            alpha=iir_alpha(self.iir_cutoff_hz, self.sampling_rate_hz),
            sampling_rate_hz=self.sampling_rate_hz,
            logging_rate_hz=self.logging_rate_hz,
            mux_dwell_ms=self.mux_dwell_ms,
            wavelength_period_ms=self.wavelength_period_ms,
        )

    # --- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {"format_version": CONFIG_FORMAT_VERSION,
                **_jsonable(dataclasses.asdict(self))}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceConfig":
        doc = dict(doc)
        doc.pop("format_version", None)
        cfg = cls()
        for name, value in doc.items():
            if not hasattr(cfg, name):
                raise ConfigError(f"unknown config field {name!r}")
            current = getattr(cfg, name)
            if dataclasses.is_dataclass(current) and isinstance(value, dict):
                for sub, sval in value.items():
                    if not hasattr(current, sub):
                        raise ConfigError(f"unknown field {name}.{sub}")
                    cur = getattr(current, sub)
                    if isinstance(cur, np.ndarray):
                        sval = np.asarray(sval, dtype=float)
                    elif isinstance(cur, tuple) and isinstance(sval, list):
                        sval = tuple(sval)
                    setattr(current, sub, sval)
            else:
                setattr(cfg, name, value)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "DeviceConfig":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


# --- whole-session simulation --------------------------------------------------


@dataclass
class SimRun:
    batch: FrameBatch
    truth: HemoGroundTruth
    timeline: ProtocolTimeline
    config: DeviceConfig

    @property
    def markers(self) -> list[tuple[str, float]]:
        return self.timeline.markers()


def build_sim(config: DeviceConfig, timeline: ProtocolTimeline | None = None,
              duration_s: float | None = None,
              noise_override: float | None = None
              ) -> tuple[EcuState, OpticalAfeSampler, HemoGroundTruth,
                         ProtocolTimeline]:
    """Assemble ECU state + sampler for a session without running it."""
    if timeline is None:
        timeline = default_timeline()
    if duration_s is not None and duration_s > timeline.total_duration_s:
        # pad the tail with rest so the truth grid covers the whole run
        timeline = build_protocol_timeline(
            list(timeline.phases)
            + [("rest", duration_s - timeline.total_duration_s)])
    layout = config.layout()
    optics = config.optics()
    truth = synth_hemodynamics(timeline, layout, config.hemo, seed=config.seed)
    afe = config.afe
    if noise_override is not None:
        afe = dataclasses.replace(afe, noise_sigma_v=noise_override)
    model = SignalModel(truth, layout, optics, afe, cardiac=config.cardiac,
                        drift=config.drift, age_years=config.age_years,
                        seed=config.seed)
    state = config.make_ecu_state()
    sampler = OpticalAfeSampler(
        model, sim_rate_hz=config.sampling_rate_hz,
        wavelength_period_ms=config.wavelength_period_ms,
        emitter_scales=state.emitter_scale_matrix)
    return state, sampler, truth, timeline


def simulate_session(config: DeviceConfig,
                     timeline: ProtocolTimeline | None = None,
                     duration_s: float | None = None,
                     chunk_s: float = 1.0,
                     noise_override: float | None = None) -> SimRun:
    """Run a full protocol through the firmware emulation."""
    state, sampler, truth, timeline = build_sim(config, timeline, duration_s,
                                                noise_override)
    total_us = int(round((duration_s or timeline.total_duration_s) * 1e6))
    chunk_us = int(round(chunk_s * 1e6))
    batches = []
    done = 0
    while done < total_us:
        step = min(chunk_us, total_us - done)
        batches.append(step_ecu(state, sampler, step))
        done += step
    return SimRun(FrameBatch.concat(batches), truth, timeline, config)
