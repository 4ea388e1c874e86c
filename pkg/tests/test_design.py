from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schwinger_sim.design import (
    LITHIUM_6_AMU,
    POTASSIUM_40_AMU,
    LatticeConvention,
    OpticalLatticeParams,
    derive_scales,
    hopping_estimate,
    joule_to_microkelvin,
    lattice_constant_nm,
    lithium_example,
    mass_gap,
    microkelvin_to_joule,
    oscillator_frequency,
    recoil_energy,
    validate_hierarchy,
)
from schwinger_sim.errors import ValidationError

# Independent constants (CODATA 2018) so the check does not reuse scipy.constants.
HBAR = 1.054571817e-34
KB = 1.380649e-23
AMU = 1.66053906660e-27


def recoil_by_hand(wavelength_nm, mass_amu):
    a = wavelength_nm * 1e-9 / 4
    return math.pi**2 * HBAR**2 / (8 * mass_amu * AMU * a * a) / KB * 1e6


class TestRecoil:
    def test_lithium_value(self):
        E_R = recoil_energy(lithium_example())
        assert E_R == pytest.approx(recoil_by_hand(500, LITHIUM_6_AMU), rel=1e-9)
        assert 6.3 < E_R < 6.5

    def test_doubling_spacing_quarters(self):
        p = lithium_example()
        q = OpticalLatticeParams(p.W0, p.dW, 2 * p.wavelength, p.atom_mass, p.temperature)
        assert recoil_energy(q) == pytest.approx(recoil_energy(p) / 4, rel=1e-12)

    def test_mass_scaling(self):
        li = lithium_example()
        k = OpticalLatticeParams(li.W0, li.dW, li.wavelength, POTASSIUM_40_AMU, li.temperature)
        assert recoil_energy(li) / recoil_energy(k) == pytest.approx(POTASSIUM_40_AMU / LITHIUM_6_AMU)

    def test_half_convention(self):
        p = OpticalLatticeParams(10, 1, 500, LITHIUM_6_AMU, 0.3, LatticeConvention.HALF)
        assert lattice_constant_nm(p) == 250
        assert recoil_energy(p) == pytest.approx(recoil_energy(lithium_example()) / 4)


class TestHopping:
    def test_paper_inputs(self):
        assert hopping_estimate(10, 7) == pytest.approx(4.2, abs=0.05)
        assert hopping_estimate(10, 7) == pytest.approx(5.0, rel=0.30)

    def test_equal_depth_and_recoil(self):
        assert hopping_estimate(3.0, 3.0) == pytest.approx(4 / math.pi * 3.0 * math.exp(-math.pi / 4))

    def test_monotone_decreasing_in_depth(self):
        ratio = np.linspace(2, 50, 400)
        J = [hopping_estimate(r * 1.0, 1.0) for r in ratio]
        assert np.all(np.diff(J) < 0)

    @pytest.mark.parametrize("args", [(0, 1), (1, 0), (-1, 1)])
    def test_invalid(self, args):
        with pytest.raises(ValidationError):
            hopping_estimate(*args)


class TestMassAndOscillator:
    def test_mass(self):
        assert mass_gap(1.0) == 0.5
        assert mass_gap(0.0) == 0.0
        assert mass_gap(2 * 0.37) == 2 * mass_gap(0.37)
        with pytest.raises(ValidationError):
            mass_gap(-1.0)

    def test_oscillator(self):
        assert oscillator_frequency(10, 7) == pytest.approx(4 * math.sqrt(70))
        assert oscillator_frequency(2.5, 2.5) == pytest.approx(10.0)
        assert oscillator_frequency(40, 7) / oscillator_frequency(10, 7) == pytest.approx(2.0)

    def test_oscillator_matches_harmonic_curvature(self):
        """Second derivative of W0 sin^2(2kx) at a minimum gives the same frequency."""
        p = lithium_example()
        a = lattice_constant_nm(p) * 1e-9
        k = math.pi / (2 * a)
        W0 = microkelvin_to_joule(p.W0)
        m = p.atom_mass * AMU
        h = 1e-3 * a
        W = lambda x: W0 * math.sin(2 * k * x) ** 2
        curvature = (W(h) - 2 * W(0.0) + W(-h)) / h**2
        omega = math.sqrt(curvature / m)
        assert joule_to_microkelvin(HBAR * omega) == pytest.approx(
            oscillator_frequency(p.W0, recoil_energy(p)), rel=1e-5)


class TestScalesAndHierarchy:
    def test_lithium_scales(self):
        s = derive_scales(lithium_example())
        assert s.lattice_constant == 125
        assert s.mass_gap == 0.5
        assert s.hierarchy_ratios == pytest.approx(
            (s.oscillator_frequency / s.hopping, s.hopping / s.mass_gap, s.mass_gap / s.temperature))
        assert s.mass_over_hopping == pytest.approx(s.mass_gap / s.hopping)
        assert s.aJ == pytest.approx(125 * s.hopping)
        assert s.time_unit == pytest.approx(HBAR / microkelvin_to_joule(s.hopping), rel=1e-6)

    def test_paper_temperature_fails_mass_over_temperature(self):
        report = validate_hierarchy(derive_scales(lithium_example(0.3)))
        status = [c.status for c in report.checks]
        assert status == ["pass", "pass", "fail"]
        assert report.checks[2].ratio == pytest.approx(0.5 / 0.3)
        assert report.failed

    def test_cold_enough_passes(self):
        report = validate_hierarchy(derive_scales(lithium_example(0.05)))
        assert report.passed

    def test_temperature_equal_mass_fails(self):
        report = validate_hierarchy(derive_scales(lithium_example(0.5)))
        assert report.checks[2].status == "fail"

    def test_warn_band(self):
        report = validate_hierarchy(derive_scales(lithium_example(0.125)))
        assert report.checks[2].status == "warn"

    def test_deep_lattice_breaks_hopping_over_mass(self):
        s = [derive_scales(OpticalLatticeParams(W0, 1.0, 500, LITHIUM_6_AMU, 0.01)) for W0 in (10, 100, 400)]
        status = [validate_hierarchy(x).checks[1].status for x in s]
        assert status[0] == "pass" and status[-1] == "fail"

    def test_table_mentions_every_relation(self):
        table = validate_hierarchy(derive_scales(lithium_example())).table()
        for name in ("omega_osc >> J", "J >> M", "M >> T"):
            assert name in table

    def test_thresholds_validated(self):
        with pytest.raises(ValidationError):
            validate_hierarchy(derive_scales(lithium_example()), threshold=2, warn_threshold=3)


class TestValidation:
    @pytest.mark.parametrize("field", ["W0", "dW", "wavelength", "atom_mass", "temperature"])
    def test_positive_inputs(self, field):
        kwargs = dict(W0=10, dW=1, wavelength=500, atom_mass=6, temperature=0.3)
        kwargs[field] = 0.0
        with pytest.raises(ValidationError):
            OpticalLatticeParams(**kwargs)

    def test_large_superlattice_warns(self):
        with pytest.warns(UserWarning):
            OpticalLatticeParams(1.0, 2.0, 500, 6, 0.1)

    @given(st.floats(1e-6, 1e6))
    def test_unit_round_trip(self, x):
        assert joule_to_microkelvin(microkelvin_to_joule(x)) == pytest.approx(x, rel=1e-12)
