import cmath
import math

import numpy as np
import pytest
from scipy import integrate

from wignerlab.errors import DomainError, PoleError
from wignerlab.freeconv import (
    AtomicMeasure,
    density,
    integrate_against_rho,
    is_in_omega,
    solve_pastur,
    stieltjes,
    support_window,
)


def semicircle_g(z, v=1.0):
    # independent closed form: G = (z - sqrt(z^2 - 4v)) / (2v), branch G ~ 1/z
    sq = cmath.sqrt(z * z - 4.0 * v)
    if (z.conjugate() * sq).real < 0.0:
        sq = -sq
    return (z - sq) / (2.0 * v)


class TestAtomicMeasure:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            AtomicMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.6]))

    def test_duplicates_aggregate(self):
        nu = AtomicMeasure.from_values([1.0, 1.0, -1.0, 0.0])
        assert nu.locations.tolist() == [-1.0, 0.0, 1.0]
        assert nu.weights.tolist() == [0.25, 0.25, 0.5]

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            AtomicMeasure(np.array([np.inf]), np.array([1.0]))

    def test_moments(self):
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        assert nu.moment(1) == 0.0
        assert nu.moment(2) == 1.0


class TestStieltjes:
    def test_point_mass_at_2i(self):
        nu = AtomicMeasure.point_mass(0.0)
        assert stieltjes(nu, 2j) == pytest.approx(-0.5j)

    def test_two_atoms(self):
        # 0.5*(1/(2i+1) + 1/(2i-1)) = -0.4i by direct rational arithmetic
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        assert stieltjes(nu, 2j) == pytest.approx(-0.4j)

    def test_first_derivative_point_mass(self):
        nu = AtomicMeasure.point_mass(0.0)
        for w in (2j, 1 + 1j, -0.5 + 0.3j):
            assert stieltjes(nu, w, 1) == pytest.approx(-1.0 / w**2)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_derivatives_match_finite_differences(self, order):
        nu = AtomicMeasure.from_atoms([(-1.5, 0.3), (0.2, 0.5), (2.0, 0.2)])
        w = 0.7 + 1.3j
        h = 1e-5
        lower = stieltjes(nu, w - h, order - 1)
        upper = stieltjes(nu, w + h, order - 1)
        fd = (upper - lower) / (2 * h)
        assert stieltjes(nu, w, order) == pytest.approx(fd, rel=1e-7)

    def test_pole_error_on_real_axis(self):
        nu = AtomicMeasure.point_mass(1.0)
        with pytest.raises(PoleError):
            stieltjes(nu, 1.0 + 0.0j)

    def test_real_evaluation_away_from_atoms(self):
        nu = AtomicMeasure.point_mass(0.0)
        assert stieltjes(nu, 2.0 + 0.0j) == pytest.approx(0.5)


class TestSolvePastur:
    def test_semicircle_value_at_2i(self):
        sol = solve_pastur(AtomicMeasure.point_mass(0.0), 1.0, 2j)
        assert sol.G == pytest.approx(1j * (1 - math.sqrt(2)), abs=1e-12)

    def test_semicircle_grid(self):
        nu = AtomicMeasure.point_mass(0.0)
        for re in np.linspace(-5, 5, 11):
            for im in (0.1, 0.5, 1.0, 4.0):
                z = complex(re, im)
                sol = solve_pastur(nu, 1.0, z)
                assert abs(sol.G - semicircle_g(z)) < 1e-10

    def test_omega_times_g_is_one(self):
        nu = AtomicMeasure.point_mass(0.0)
        for z in (2j, 1 + 1j, -3 + 0.2j, 0.5 + 0.1j):
            sol = solve_pastur(nu, 1.7, z)
            assert abs(sol.omega * sol.G - 1.0) < 1e-10

    def test_reflection_exact(self):
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        up = solve_pastur(nu, 1.0, 1 + 2j)
        down = solve_pastur(nu, 1.0, 1 - 2j)
        assert down.G == up.G.conjugate()
        assert down.omega == up.omega.conjugate()
        assert down.G2 == up.G2.conjugate()

    def test_small_variance_limit(self):
        # v -> 0 proxy: convolution with a near-point-mass changes little
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        for z in (2j, 1 + 1j):
            sol = solve_pastur(nu, 1e-8, z)
            assert abs(sol.G - stieltjes(nu, z)) < 1e-6

    def test_derivatives_match_finite_differences(self):
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        h = 1e-5
        for z in (2j, 1 + 1j, -0.7 + 0.4j):
            sol = solve_pastur(nu, 1.0, z)
            gp = (solve_pastur(nu, 1.0, z + h).G - solve_pastur(nu, 1.0, z - h).G) / (2 * h)
            gpp = (
                solve_pastur(nu, 1.0, z + h).G1 - solve_pastur(nu, 1.0, z - h).G1
            ) / (2 * h)
            wp = (
                solve_pastur(nu, 1.0, z + h).omega - solve_pastur(nu, 1.0, z - h).omega
            ) / (2 * h)
            wpp = (
                solve_pastur(nu, 1.0, z + h).omega1 - solve_pastur(nu, 1.0, z - h).omega1
            ) / (2 * h)
            assert sol.G1 == pytest.approx(gp, rel=1e-5)
            assert sol.G2 == pytest.approx(gpp, rel=1e-5)
            assert sol.omega1 == pytest.approx(wp, rel=1e-5)
            assert sol.omega2 == pytest.approx(wpp, rel=1e-5)

    def test_subordination_self_map(self):
        nu = AtomicMeasure.from_atoms([(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)])
        for z in (0.3 + 0.1j, 2j, -1 + 0.5j, 4 + 1j):
            sol = solve_pastur(nu, 1.3, z)
            assert sol.omega.imag >= z.imag
            assert sol.G.imag < 0

    def test_pastur_residual_invariant(self):
        nu = AtomicMeasure.from_atoms([(-1.0, 0.3), (0.5, 0.7)])
        for z in (0.2j, 1 + 0.15j, -2 + 3j):
            sol = solve_pastur(nu, 0.8, z)
            assert abs(sol.G - stieltjes(nu, sol.omega)) <= 1e-12

    def test_real_z_rejected(self):
        with pytest.raises(DomainError):
            solve_pastur(AtomicMeasure.point_mass(0.0), 1.0, 2.0)

    def test_derivative_consistency_invariant(self):
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        sol = solve_pastur(nu, 1.0, 0.4 + 0.9j)
        g1_nu = stieltjes(nu, sol.omega, 1)
        assert sol.omega1 == pytest.approx(1.0 / (1.0 + 1.0 * g1_nu), rel=1e-10)
        assert sol.G1 == pytest.approx(g1_nu * sol.omega1, rel=1e-10)


class TestDensity:
    def test_semicircle_center(self):
        est = density(AtomicMeasure.point_mass(0.0), 1.0, 0.0)
        assert est.value == pytest.approx(1.0 / math.pi, abs=1e-6)

    def test_outside_support(self):
        est = density(AtomicMeasure.point_mass(0.0), 1.0, 3.0)
        assert est.value <= 1e-6

    def test_semicircle_profile(self):
        nu = AtomicMeasure.point_mass(0.0)
        for x in (-1.5, -0.5, 0.7, 1.9):
            expected = math.sqrt(max(4.0 - x * x, 0.0)) / (2.0 * math.pi)
            assert density(nu, 1.0, x).value == pytest.approx(expected, abs=1e-6)

    def test_normalization_two_atoms(self):
        nu = AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
        lo, hi = support_window(nu, 0.5)
        total, _ = integrate.quad(
            lambda x: density(nu, 0.5, x).value, lo, hi, limit=200,
            points=[-1.0, 1.0],
        )
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            density(AtomicMeasure.point_mass(0.0), 1.0, 0.0, eta_schedule=[1e-2, 1e-3])


class TestIntegrateAgainstRho:
    def test_total_mass(self):
        nu = AtomicMeasure.point_mass(0.0)
        assert integrate_against_rho(nu, 1.0, lambda x: 1.0) == pytest.approx(1.0, abs=1e-4)

    def test_odd_function_vanishes(self):
        nu = AtomicMeasure.point_mass(0.0)
        assert integrate_against_rho(nu, 1.0, lambda x: x) == pytest.approx(0.0, abs=1e-4)

    def test_second_moment_is_variance(self):
        nu = AtomicMeasure.point_mass(0.0)
        assert integrate_against_rho(nu, 1.0, lambda x: x * x) == pytest.approx(1.0, abs=1e-3)


def test_is_in_omega_diagnostic():
    nu = AtomicMeasure.point_mass(0.0)
    # far in the upper half-plane H maps upward; just above an atom it does not
    assert is_in_omega(nu, 1.0, 5j)
    assert not is_in_omega(nu, 1.0, 0.1j)
