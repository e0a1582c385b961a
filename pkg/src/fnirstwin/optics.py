"""Chromophore extinction table, pathlength factors, and baseline optics.

Extinction coefficients are ingested from a committed CSV (compiled adult
hemoglobin tabulations, base-10, cm^-1 per mM). The differential pathlength
factor comes from a general age/wavelength polynomial whose coefficients
live in a committed JSON document. Concentrations are handled in mM
internally and reported in uM at the API boundary; distances are in cm.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .messages import N_CHANNELS, WAVELENGTHS_NM

MM_PER_UM = 1e-3  # one documented uM -> mM conversion point


class OpticsError(ValueError):
    pass


def _data_text(name: str) -> str:
    return resources.files("fnirstwin.data").joinpath(name).read_text()


def load_extinction_csv(text: str | None = None) -> dict[tuple[str, int], float]:
    """Parse the extinction table: (chromophore, wavelength_nm) -> epsilon."""
    if text is None:
        text = _data_text("extinction_coefficients.csv")
    table: dict[tuple[str, int], float] = {}
    for row in csv.DictReader(text.splitlines()):
        eps = float(row["epsilon_cm_per_mM"])
        if eps <= 0:
            raise OpticsError(f"non-positive extinction coefficient: {row}")
        table[(row["chromophore"], int(row["wavelength_nm"]))] = eps
    return table


@dataclass
class DpfModel:
    """Age- and wavelength-dependent differential pathlength factor.

    The committed polynomial was fitted on 690-832 nm; past its red edge
    the cubic term collapses below physical pathlengths, so evaluation is
    clamped to the committed evaluation range while the domain check
    still covers both device wavelengths.
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    age_range: tuple[float, float]
    wavelength_range: tuple[float, float]
    evaluation_clamp: tuple[float, float]

    @classmethod
    def load(cls, text: str | None = None) -> "DpfModel":
        if text is None:
            text = _data_text("dpf_coefficients.json")
        doc = json.loads(text)
        co = doc["coefficients"]
        return cls(a=co["a"], b=co["b"], c=co["c"], d=co["d"], e=co["e"],
                   f=co["f"],
                   age_range=tuple(doc["age_range_years"]),
                   wavelength_range=tuple(doc["wavelength_range_nm"]),
                   evaluation_clamp=tuple(doc["evaluation_clamp_nm"]))

    def __call__(self, age_years: float, wavelength_nm: float) -> float:
        lo, hi = self.age_range
        if not lo <= age_years <= hi:
            raise OpticsError(f"age {age_years} outside supported range "
                              f"[{lo}, {hi}]")
        wlo, whi = self.wavelength_range
        if not wlo <= wavelength_nm <= whi:
            raise OpticsError(f"wavelength {wavelength_nm} nm outside "
                              f"coefficient domain [{wlo}, {whi}]")
        wl = float(np.clip(wavelength_nm, *self.evaluation_clamp))
        return (self.a + self.b * float(age_years) ** self.c
                + self.d * wl**3 + self.e * wl**2 + self.f * wl)


_DEFAULT_DPF = None


def dpf_lookup(age_years: float, wavelength_nm: float) -> float:
    """Pathlength factor from the committed general equation (dimensionless)."""
    global _DEFAULT_DPF
    if _DEFAULT_DPF is None:
        _DEFAULT_DPF = DpfModel.load()
    return _DEFAULT_DPF(age_years, wavelength_nm)


def _default_baseline() -> np.ndarray:
    return np.full((N_CHANNELS, 2), 0.040)


@dataclass
class OpticalTable:
    """Extinction matrix, DPF model, and per-channel baseline intensities.

    baseline_v holds the ADC-referred baseline intensity I0 in volts,
    indexed (channel, wavelength-index) with wavelength order (660, 940).
    """

    extinction: dict[tuple[str, int], float]
    dpf: DpfModel
    baseline_v: np.ndarray = field(default_factory=_default_baseline)

    MAX_CONDITION = 100.0

    @classmethod
    def default(cls, baseline_v: float | np.ndarray = 0.040) -> "OpticalTable":
        base = np.broadcast_to(np.asarray(baseline_v, dtype=float),
                               (N_CHANNELS, 2)).copy()
        table = cls(extinction=load_extinction_csv(), dpf=DpfModel.load(),
                    baseline_v=base)
        table.validate()
        return table

    def epsilon(self, chromophore: str, wavelength_nm: int) -> float:
        try:
            return self.extinction[(chromophore, wavelength_nm)]
        except KeyError:
            raise OpticsError(f"no extinction entry for {chromophore} "
                              f"at {wavelength_nm} nm") from None

    def epsilon_matrix(self) -> np.ndarray:
        """2x2 matrix, rows (660, 940), columns (HbO, HbR)."""
        return np.array([[self.epsilon("HbO", wl), self.epsilon("HbR", wl)]
                         for wl in WAVELENGTHS_NM])

    def validate(self) -> None:
        m = self.epsilon_matrix()
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond >= self.MAX_CONDITION:
            raise OpticsError(f"extinction matrix ill-conditioned "
                              f"(cond={cond:.1f})")
        if np.any(self.baseline_v <= 0) or np.any(self.baseline_v >= 3.3):
            raise OpticsError("baseline intensities must lie in (0, 3.3) V")

    def baseline(self, channel: int, wavelength_nm: int) -> float:
        return float(self.baseline_v[channel, WAVELENGTHS_NM.index(wavelength_nm)])
