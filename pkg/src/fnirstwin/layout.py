"""Sensor geometry: 8 emitter groups, each with 3 detectors (1 short, 2 long).

Channel ids are group-major: group g owns channels 3g, 3g+1, 3g+2. The
middle detector of each group sits on the emitter module (short channel);
the flanking two are long channels at the 3.5 cm center-to-center pitch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .messages import N_CHANNELS, N_GROUPS

SHORT_DISTANCE_CM = 1.0
LONG_DISTANCE_CM = 3.5

REGIONS = ("frontal", "parietal", "temporal", "occipital")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Detector:
    channel_id: int
    role: str                       # "short" | "long"
    source_detector_distance_cm: float


@dataclass(frozen=True)
class EmitterGroup:
    group_id: int
    region: str
    detectors: tuple[Detector, Detector, Detector]


@dataclass
class SensorLayout:
    groups: tuple[EmitterGroup, ...]
    _distance: dict[int, float] = field(init=False, repr=False)
    _role: dict[int, str] = field(init=False, repr=False)
    _group_of: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.groups) != N_GROUPS:
            raise LayoutError(f"expected {N_GROUPS} groups, got {len(self.groups)}")
        self._distance, self._role, self._group_of = {}, {}, {}
        for g in self.groups:
            roles = sorted(d.role for d in g.detectors)
            if roles != ["long", "long", "short"]:
                raise LayoutError(f"group {g.group_id}: needs 1 short + 2 long "
                                  f"detectors, got {roles}")
            for d in g.detectors:
                if d.source_detector_distance_cm <= 0:
                    raise LayoutError(f"channel {d.channel_id}: non-positive "
                                      "source-detector distance")
                if d.channel_id in self._distance:
                    raise LayoutError(f"duplicate channel id {d.channel_id}")
                self._distance[d.channel_id] = d.source_detector_distance_cm
                self._role[d.channel_id] = d.role
                self._group_of[d.channel_id] = g.group_id
        if sorted(self._distance) != list(range(N_CHANNELS)):
            raise LayoutError("channel ids must cover 0..23 exactly")

    def distance_cm(self, channel: int) -> float:
        return self._distance[channel]

    def role(self, channel: int) -> str:
        return self._role[channel]

    def group_of(self, channel: int) -> int:
        return self._group_of[channel]

    def group_channels(self, group_id: int) -> tuple[int, int, int]:
        return tuple(d.channel_id for d in self.groups[group_id].detectors)

    @property
    def short_channels(self) -> list[int]:
        return [c for c in range(N_CHANNELS) if self._role[c] == "short"]

    @property
    def long_channels(self) -> list[int]:
        return [c for c in range(N_CHANNELS) if self._role[c] == "long"]

    def channels_in_region(self, region: str) -> list[int]:
        return [d.channel_id for g in self.groups if g.region == region
                for d in g.detectors]

    def default_activated_channels(self) -> list[int]:
        """Long channels of the frontal groups (cortical task response)."""
        return [c for c in self.channels_in_region("frontal")
                if self._role[c] == "long"]


def _make_group(group_id: int, region: str) -> EmitterGroup:
    base = 3 * group_id
    return EmitterGroup(group_id, region, (
        Detector(base, "long", LONG_DISTANCE_CM),
        Detector(base + 1, "short", SHORT_DISTANCE_CM),
        Detector(base + 2, "long", LONG_DISTANCE_CM),
    ))


def harness_layout() -> SensorLayout:
    """Full-head harness: frontal, parietal, temporal, occipital coverage."""
    regions = ("frontal", "frontal", "frontal", "frontal",
               "parietal", "parietal", "temporal", "occipital")
    return SensorLayout(tuple(_make_group(g, r) for g, r in enumerate(regions)))


def headband_layout() -> SensorLayout:
    """Compact headband: all groups dedicated to the frontal lobe."""
    return SensorLayout(tuple(_make_group(g, "frontal") for g in range(N_GROUPS)))


def default_layout() -> SensorLayout:
    return harness_layout()
