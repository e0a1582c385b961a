"""Extinction table ingestion and pathlength-factor model."""

import numpy as np
import pytest

from fnirstwin.optics import (OpticalTable, OpticsError, dpf_lookup,
                              load_extinction_csv)


class TestExtinctionTable:
    def test_committed_values(self):
        table = load_extinction_csv()
        assert table[("HbO", 660)] == 0.3196
        assert table[("HbR", 660)] == 3.2266
        assert table[("HbO", 940)] == 1.2140
        assert table[("HbR", 940)] == 0.6934

    def test_matrix_well_conditioned(self):
        optics = OpticalTable.default()
        cond = np.linalg.cond(optics.epsilon_matrix())
        assert cond < 100

    def test_missing_entry_raises(self):
        optics = OpticalTable.default()
        with pytest.raises(OpticsError):
            optics.epsilon("HbO", 800)

    def test_negative_epsilon_rejected(self):
        text = ("chromophore,wavelength_nm,epsilon_cm_per_mM\n"
                "HbO,660,-1.0\n")
        with pytest.raises(OpticsError):
            load_extinction_csv(text)

    def test_baseline_validation(self):
        with pytest.raises(OpticsError):
            OpticalTable.default(baseline_v=0.0)
        with pytest.raises(OpticsError):
            OpticalTable.default(baseline_v=3.4)


class TestDpf:
    def test_regression_locked_values(self):
        # frozen after first computation from the committed general equation
        assert dpf_lookup(25.0, 660) == pytest.approx(6.30363623746382,
                                                      rel=1e-12)
        assert dpf_lookup(25.0, 940) == pytest.approx(5.499527431063825,
                                                      rel=1e-12)
        assert dpf_lookup(60.0, 660) == pytest.approx(7.258700533636102,
                                                      rel=1e-12)

    def test_matches_independent_polynomial(self):
        def oracle(age, wl):
            wl = min(max(wl, 660.0), 832.0)
            return (223.3 + 0.05624 * age**0.8493 - 5.723e-7 * wl**3
                    + 0.001245 * wl**2 - 0.9025 * wl)
        for age in (0, 18, 25, 60, 120):
            for wl in (660, 700, 750, 832, 900, 940):
                assert dpf_lookup(age, wl) == pytest.approx(oracle(age, wl),
                                                            rel=1e-12)

    def test_deterministic(self):
        assert dpf_lookup(33.0, 660) == dpf_lookup(33.0, 660)

    def test_age_monotonicity(self):
        for wl in (660, 940):
            assert dpf_lookup(60.0, wl) > dpf_lookup(20.0, wl)
        ages = np.linspace(0, 120, 60)
        for wl in (660, 940):
            vals = [dpf_lookup(a, wl) for a in ages]
            assert np.all(np.diff(vals) > 0)

    def test_wavelength_domain_enforced(self):
        with pytest.raises(OpticsError):
            dpf_lookup(25.0, 500)
        with pytest.raises(OpticsError):
            dpf_lookup(25.0, 1000)

    def test_age_domain_enforced(self):
        with pytest.raises(OpticsError):
            dpf_lookup(-1.0, 660)
        with pytest.raises(OpticsError):
            dpf_lookup(150.0, 660)

    def test_values_physical(self):
        for age in (5, 25, 80):
            for wl in (660, 760, 832, 940):
                assert 3.0 < dpf_lookup(age, wl) < 10.0
