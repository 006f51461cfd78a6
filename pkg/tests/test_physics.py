"""
Unit tests for Planck integrals, group opacities and the equation of state.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from src.errors import DomainError
from src.physics import (
    PI4_OVER_15,
    GroupStructure,
    MaterialEos,
    OpacityModel,
    PhysConstants,
    group_opacity,
    planck_group,
    planck_integral,
    radiation_constant_codata,
    spectral_opacity,
)


def planck_density(u):
    return u**3 / math.expm1(u) if u > 0 else 0.0


@pytest.mark.unit
class TestPlanckIntegral:
    """Test the dimensionless incomplete Planck integral."""

    @pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 1.999, 2.0, 2.001, 5.0, 30.0])
    def test_matches_quadrature(self, x):
        """Test both series branches against adaptive quadrature."""
        expected, _ = quad(planck_density, 0.0, x, epsabs=0, epsrel=1e-13, limit=200)
        assert float(planck_integral(x)) == pytest.approx(expected, rel=1e-10)

    def test_large_argument_reaches_full_integral(self):
        assert float(planck_integral(800.0)) == pytest.approx(PI4_OVER_15, rel=1e-14)

    def test_zero_argument(self):
        assert float(planck_integral(0.0)) == 0.0

    def test_negative_argument_rejected(self):
        with pytest.raises(DomainError):
            planck_integral(-1.0)


@pytest.mark.unit
class TestPlanckGroup:
    """Test group-integrated Planck functions."""

    @pytest.mark.parametrize("temperature", [0.001, 0.1, 1.0, 10.0])
    def test_groups_sum_to_total_emission(self, temperature):
        """Test that sum_g 4 pi B_g = c a_R T^4 for a structure spanning the spectrum."""
        constants = PhysConstants()
        groups = GroupStructure.logarithmic(17, 0.1, 20.0)
        B = planck_group(temperature, groups, constants)
        total = constants.c * constants.a_R * temperature**4
        assert np.sum(4.0 * math.pi * B) == pytest.approx(total, rel=1e-10)

    def test_single_group_matches_quadrature(self):
        constants = PhysConstants()
        groups = GroupStructure((0.0, 1.0, 2.0, math.inf))
        T = 0.7
        B = planck_group(T, groups, constants)
        fraction, _ = quad(planck_density, 1.0 / T, 2.0 / T, epsrel=1e-13)
        expected = constants.c * constants.a_R * T**4 / (4 * math.pi) * fraction / PI4_OVER_15
        assert B[1] == pytest.approx(expected, rel=1e-10)

    def test_shape_follows_temperature(self):
        groups = GroupStructure.logarithmic(5, 0.1, 10.0)
        B = planck_group(np.full((3, 4), 0.5), groups)
        assert B.shape == (5, 3, 4)

    def test_cold_temperature_stays_finite(self):
        groups = GroupStructure.logarithmic(17, 0.1, 20.0)
        B = planck_group(1.0e-4, groups)
        assert np.all(np.isfinite(B))
        assert np.all(B >= 0)

    def test_nonpositive_temperature_rejected(self):
        groups = GroupStructure.logarithmic(4, 0.1, 10.0)
        with pytest.raises(DomainError):
            planck_group(0.0, groups)


@pytest.mark.unit
class TestGroupOpacity:
    """Test Planck-weighted group opacities."""

    def test_finite_group_matches_quadrature(self):
        model = OpacityModel()
        groups = GroupStructure((0.0, 0.5, 1.0, math.inf))
        T = 0.3

        def weight(hnu):
            return hnu**3 / math.expm1(hnu / T)

        num, _ = quad(lambda e: spectral_opacity(e, T, model) * weight(e), 0.5, 1.0, epsrel=1e-13)
        den, _ = quad(weight, 0.5, 1.0, epsrel=1e-13)
        kappa = group_opacity(T, groups, model)
        assert kappa[1] == pytest.approx(num / den, rel=1e-9)

    def test_group_mean_lies_within_spectral_range(self):
        """Test that each finite-group mean lies between the spectral extremes of its group."""
        groups = GroupStructure.logarithmic(6, 0.1, 10.0)
        T = 1.0
        kappa = group_opacity(T, groups)
        edges = groups.boundaries
        for g in range(1, groups.n_groups - 1):
            hi = spectral_opacity(edges[g], T)
            lo = spectral_opacity(edges[g + 1], T)
            assert lo <= kappa[g] <= hi

    def test_cold_opacities_are_finite(self):
        groups = GroupStructure.logarithmic(17, 0.1, 20.0)
        kappa = group_opacity(np.array([1.0e-3, 1.0]), groups)
        assert np.all(np.isfinite(kappa))
        assert np.all(kappa > 0)

    def test_opacity_decreases_with_photon_energy(self):
        groups = GroupStructure.logarithmic(8, 0.1, 20.0)
        kappa = group_opacity(1.0, groups)
        assert np.all(np.diff(kappa) < 0)

    def test_spectral_opacity_rejects_zero_energy(self):
        with pytest.raises(DomainError):
            spectral_opacity(0.0, 1.0)


@pytest.mark.unit
class TestConstantsAndStructures:
    """Test constants, group layouts and the equation of state."""

    def test_radiation_constant_value(self):
        assert radiation_constant_codata() == pytest.approx(0.01372, rel=1e-3)

    def test_speed_of_light(self):
        assert PhysConstants().c == pytest.approx(29.9792458, rel=1e-12)

    def test_logarithmic_layout(self):
        groups = GroupStructure.logarithmic(17, 0.1, 20.0)
        assert groups.n_groups == 17
        assert groups.spans_spectrum
        assert groups.boundaries[1] == pytest.approx(0.1)
        assert groups.boundaries[-2] == pytest.approx(20.0)

    def test_decreasing_boundaries_rejected(self):
        with pytest.raises(DomainError):
            GroupStructure((0.0, 2.0, 1.0))

    def test_eos_round_trip(self):
        eos = MaterialEos(c_v=0.25)
        assert eos.temperature(eos.energy(0.8)) == pytest.approx(0.8)

    def test_eos_rejects_negative_energy(self):
        with pytest.raises(DomainError):
            MaterialEos(c_v=0.25).temperature(-1.0)
