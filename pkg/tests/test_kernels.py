"""
Unit tests for the Bessel functions and fundamental solutions.
"""

import mpmath
import numpy as np
import pytest
from scipy import special

from rkcq_scatter import (
    DomainError,
    FrequencyPoint,
    SingularityError,
    bessel_k0,
    bessel_k0_scaled,
    bessel_k1,
    bessel_k1_scaled,
    dlp_kernel_2d,
    fundamental_solution,
    fundamental_solution_gradient_2d,
)


class TestBessel:
    """Test K_0 and K_1 on the right half plane."""

    def test_reference_values(self):
        assert abs(bessel_k0(1.0) - 0.421024438240708) < 1e-14
        assert abs(bessel_k1(1.0) - 0.601907230197235) < 1e-14

    def test_conjugate_symmetry(self):
        """Test K(conj z) = conj K(z)."""
        z = np.array([0.3 + 2.0j, 5.0 - 1.0j, 40.0 + 30.0j])
        np.testing.assert_allclose(bessel_k0(np.conj(z)), np.conj(bessel_k0(z)), rtol=1e-14)
        np.testing.assert_allclose(bessel_k1(np.conj(z)), np.conj(bessel_k1(z)), rtol=1e-14)

    def test_scaled_values_do_not_underflow(self):
        """Test that e^z K(z) stays finite and nonzero where K(z) underflows."""
        value, underflow = bessel_k0(np.array([1.0, 800.0]), with_status=True)
        assert list(underflow) == [False, True]
        assert value[1] == 0
        scaled = bessel_k0_scaled(800.0)
        # e^z K_0(z) ~ sqrt(pi / 2z)
        assert abs(scaled - np.sqrt(np.pi / 1600.0)) < 1e-3 * abs(scaled)
        assert bessel_k1_scaled(800.0).real > bessel_k0_scaled(800.0).real

    def test_against_extended_precision(self):
        """Test K_0 and K_1 against mpmath on a polar grid of the right half plane."""
        moduli = np.logspace(-6, np.log10(600.0), 25)
        angles = np.linspace(-np.pi / 2 + 0.01, np.pi / 2 - 0.01, 21)
        z = (moduli[:, None] * np.exp(1j * angles[None, :])).reshape(-1)
        with mpmath.workdps(30):
            k0 = np.array([complex(mpmath.besselk(0, mpmath.mpc(w.real, w.imag))) for w in z])
            k1 = np.array([complex(mpmath.besselk(1, mpmath.mpc(w.real, w.imag))) for w in z])
        np.testing.assert_allclose(bessel_k0(z), k0, rtol=1e-12)
        np.testing.assert_allclose(bessel_k1(z), k1, rtol=1e-12)

    def test_wronskian(self):
        """Test I_0(z) K_1(z) + I_1(z) K_0(z) = 1/z."""
        z = 2.0 + 3.0j
        value = special.iv(0, z) * bessel_k1(z) + special.iv(1, z) * bessel_k0(z)
        assert abs(value - 1.0 / z) <= 1e-12 * abs(1.0 / z)

    def test_derivative_of_k0_is_minus_k1(self):
        rng = np.random.default_rng(7)
        z = rng.uniform(0.1, 20.0, 50) * np.exp(1j * rng.uniform(-1.4, 1.4, 50))
        h = 1e-5 * np.abs(z)
        fd = (bessel_k0(z + h) - bessel_k0(z - h)) / (2 * h)
        np.testing.assert_allclose(fd, -bessel_k1(z), rtol=1e-6)

    def test_strictly_decreasing_on_positive_axis(self):
        x = np.logspace(-2, 2, 400)
        assert np.all(np.diff(bessel_k0(x).real) < 0)
        assert np.all(np.diff(bessel_k1(x).real) < 0)

    @pytest.mark.parametrize("z", [0.0, -1.0, 1j])
    def test_outside_domain(self, z):
        with pytest.raises(DomainError):
            bessel_k0(z)
        with pytest.raises(DomainError):
            bessel_k1_scaled(z)


class TestFundamentalSolution:
    """Test Phi and its derivatives."""

    def test_two_dimensional_value(self):
        """Test Phi(x; 1) = K_0(1) / (2 pi) at |x| = 1."""
        value = fundamental_solution([0.6, 0.8], 1.0)
        assert abs(value - 0.421024438240708 / (2 * np.pi)) < 1e-14

    def test_three_dimensional_value(self):
        x = np.array([1.0, 2.0, 2.0])
        s = 0.5 + 1.0j
        expected = np.exp(-3.0 * s) / (12.0 * np.pi)
        assert abs(fundamental_solution(x, s, d=3) - expected) < 1e-15

    def test_broadcasting(self):
        x = np.random.default_rng(1).uniform(0.5, 1.5, size=(4, 3, 2))
        assert fundamental_solution(x, 2.0 + 1.0j).shape == (4, 3)

    def test_gradient_matches_finite_differences(self):
        """Test the analytic gradient against central differences."""
        x = np.array([0.7, -0.4])
        s = 1.5 + 2.0j
        h = 1e-6
        fd = np.array([
            (fundamental_solution(x + h * e, s) - fundamental_solution(x - h * e, s)) / (2 * h)
            for e in np.eye(2)
        ])
        np.testing.assert_allclose(fundamental_solution_gradient_2d(x, s), fd, rtol=1e-7)

    def test_solves_modified_helmholtz_away_from_origin(self):
        """Test -Delta Phi + s^2 Phi = 0 with a five-point stencil."""
        x = np.array([0.7, 0.4])
        s = 2.0 + 1.0j
        h = 5e-4
        center = fundamental_solution(x, s)
        neighbours = sum(fundamental_solution(x + sign * h * e, s)
                         for e in np.eye(2) for sign in (1.0, -1.0))
        laplacian = (neighbours - 4.0 * center) / h ** 2
        residual = -laplacian + s ** 2 * center
        assert abs(residual) <= 1e-6 * abs(s ** 2 * center)

    def test_double_layer_kernel_is_normal_derivative_in_y(self):
        """Test d/dnu(y) Phi(x - y) = -grad Phi(x - y) . nu."""
        x, y = np.array([0.2, 0.9]), np.array([1.0, 0.3])
        nu = np.array([0.6, 0.8])
        s = 3.0 - 1.0j
        expected = -fundamental_solution_gradient_2d(x - y, s) @ nu
        assert abs(dlp_kernel_2d(x, y, nu, s) - expected) < 1e-14

    def test_singular_and_invalid_arguments(self):
        with pytest.raises(SingularityError):
            fundamental_solution([0.0, 0.0], 1.0)
        with pytest.raises(DomainError):
            fundamental_solution([1.0, 0.0], -0.5)
        with pytest.raises(DomainError):
            fundamental_solution([1.0, 0.0, 0.0], 1.0, d=2)
        with pytest.raises(SingularityError):
            dlp_kernel_2d([1.0, 1.0], [1.0, 1.0], [0.0, 1.0], 1.0)


class TestFrequencyPoint:
    """Test the sector membership helper."""

    def test_sector_membership(self):
        assert FrequencyPoint(4.0).in_sector()
        assert not FrequencyPoint(0.5).in_sector()
        assert not FrequencyPoint(2.0 + 20.0j).in_sector()
        assert FrequencyPoint(2.0 + 20.0j, sigma0=1.0, delta=0.0).in_sector()

    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            FrequencyPoint(-1.0)
        with pytest.raises(DomainError):
            FrequencyPoint(1.0, sigma0=0.0)
        with pytest.raises(DomainError):
            FrequencyPoint(1.0, delta=2.0)
