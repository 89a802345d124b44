import math

import numpy as np
import pytest
from scipy import integrate

from wignerlab import testfn
from wignerlab.errors import ParameterError, RepresentationError
from wignerlab.freeconv import AtomicMeasure, solve_pastur
from wignerlab.theory import (
    FluctuationParams,
    bao_xie_b0,
    bao_xie_c0,
    beta,
    beta_tilde,
    bias_bound,
    extend_bias,
    extend_variance,
    gamma_kernel,
    gamma_primitive,
    hs_norm,
    semicircle_transform,
)

DELTA0 = AtomicMeasure.point_mass(0.0)


def gue_params(nu=DELTA0):
    return FluctuationParams(sigma2=1.0, s2=1.0, tau=0.0, kappa=0.0, nu=nu)


def goe_params(nu=DELTA0):
    return FluctuationParams(sigma2=1.0, s2=2.0, tau=1.0, kappa=0.0, nu=nu)


def rademacher_params(nu=DELTA0):
    return FluctuationParams(sigma2=1.0, s2=1.0, tau=1.0, kappa=-2.0, nu=nu)


def random_param_draws(count, seed=20240817):
    rng = np.random.default_rng(seed)
    draws = []
    while len(draws) < count:
        sigma2 = rng.uniform(0.5, 2.0)
        s2 = rng.uniform(0.5, 3.0)
        tau = rng.uniform(-1.0, 1.0) * sigma2
        kappa = rng.uniform(-1.5, 1.5) * sigma2**2
        z = complex(rng.uniform(-3, 3), rng.choice([-1, 1]) * rng.uniform(0.5, 3.0))
        draws.append((sigma2, s2, tau, kappa, z))
    return draws


class TestBeta:
    def test_gue_bias_vanishes_identically(self):
        p = gue_params()
        for z in (2j, 1 + 1j, -1 + 0.5j, 3 - 2j):
            assert beta(p, z) == 0.0

    def test_goe_type_frozen_value(self):
        # hand derivation: beta = -G'(z) G(z) / (1 - G(z)^2) at sigma2=1;
        # with G(2i) = i(1 - sqrt(2)) this is 0.0517767j
        value = beta(goe_params(), 2j)
        assert value == pytest.approx(0.0517766952966369j, abs=1e-9)

    def test_goe_type_against_independent_closed_form(self):
        for z in (2j, 1 + 1j, -2 + 0.7j):
            g = semicircle_transform(z, 1.0)
            g1 = semicircle_transform(z, 1.0, 1)
            expected = -g1 * g / (1.0 - g * g)
            assert beta(goe_params(), z) == pytest.approx(expected, rel=1e-10)

    def test_beta_is_omega1_times_beta_tilde(self):
        p = rademacher_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        for z in (2j, 1 + 1j, -0.5 + 0.8j):
            sol = solve_pastur(p.nu, p.sigma2, z)
            b, bt = beta(p, z), beta_tilde(p, z)
            assert b == pytest.approx(sol.omega1 * bt, rel=1e-12)

    def test_reflection(self):
        p = rademacher_params()
        for z in (2j, 1 + 1j):
            assert beta(p, z.conjugate()) == pytest.approx(beta(p, z).conjugate(), rel=1e-12)

    def test_dual_path_b0(self):
        for sigma2, s2, tau, kappa, z in random_param_draws(50):
            p = FluctuationParams(sigma2=sigma2, s2=s2, tau=tau, kappa=kappa, nu=DELTA0)
            direct = bao_xie_b0(sigma2, s2, tau, kappa, z)
            scale = max(abs(direct), 1e-12)
            assert abs(beta(p, z) - direct) / scale < 1e-9


class TestGammaKernel:
    def test_symmetry(self):
        p = rademacher_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        pairs = [(2j, 1 + 1j), (0.5 + 0.7j, -1 - 0.6j), (3j, 3j)]
        for z1, z2 in pairs:
            a = gamma_kernel(p, z1, z2).gamma
            b = gamma_kernel(p, z2, z1).gamma
            assert a == pytest.approx(b, rel=1e-12)

    def test_tau_zero_drops_tau_terms(self):
        p = gue_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        kv = gamma_kernel(p, 2j, 1 + 1j)
        # independent reassembly without any tau contribution
        s1 = solve_pastur(p.nu, p.sigma2, 2j)
        s2 = solve_pastur(p.nu, p.sigma2, 1 + 1j)
        w = p.nu.weights
        d1 = s1.omega - p.nu.locations
        d2 = s2.omega - p.nu.locations
        i00 = np.sum(w / (d1 * d2))
        di = -s1.omega1 * np.sum(w / (d1**2 * d2))
        dj = -s2.omega1 * np.sum(w / (d1 * d2**2))
        dij = s1.omega1 * s2.omega1 * np.sum(w / (d1**2 * d2**2))
        den = 1.0 - p.sigma2 * i00
        expected = p.sigma2 * dij / den + p.sigma2**2 * di * dj / den**2
        assert kv.gamma == pytest.approx(complex(expected), rel=1e-12)

    def test_dual_path_c0(self):
        draws = random_param_draws(50, seed=999)
        rng = np.random.default_rng(1)
        for sigma2, s2, tau, kappa, z1 in draws:
            z2 = complex(rng.uniform(-3, 3), rng.choice([-1, 1]) * rng.uniform(0.5, 3.0))
            p = FluctuationParams(sigma2=sigma2, s2=s2, tau=tau, kappa=kappa, nu=DELTA0)
            direct = bao_xie_c0(sigma2, s2, tau, kappa, z1, z2)
            scale = max(abs(direct), 1e-12)
            assert abs(gamma_kernel(p, z1, z2).gamma - direct) / scale < 1e-9

    def test_mixed_finite_difference_of_primitive(self):
        p = rademacher_params(AtomicMeasure.from_atoms([(-1.0, 0.4), (0.5, 0.6)]))
        h = 1e-4
        points = [(2j, 1 + 1j), (1 + 2j, -1 + 1.5j), (0.5 + 0.9j, 0.5 - 0.9j)]
        for z1, z2 in points:
            fd = (
                gamma_primitive(p, z1 + h, z2 + h)
                - gamma_primitive(p, z1 + h, z2 - h)
                - gamma_primitive(p, z1 - h, z2 + h)
                + gamma_primitive(p, z1 - h, z2 - h)
            ) / (4 * h * h)
            kv = gamma_kernel(p, z1, z2)
            assert abs(kv.gamma - fd) / abs(kv.gamma) < 1e-5

    def test_reflection(self):
        p = goe_params()
        kv = gamma_kernel(p, 2j, 1 + 1j)
        kc = gamma_kernel(p, -2j, 1 - 1j)
        assert kc.gamma == pytest.approx(kv.gamma.conjugate(), rel=1e-12)

    def test_branch_margin_guard_interior(self):
        p = gue_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        for z in (0.5j, 1 + 0.5j, 2 + 0.6j):
            kv = gamma_kernel(p, z, z.conjugate())
            assert abs(p.sigma2 * kv.I) < 1.0
            assert kv.valid

    def test_c0_conjugate_pair_real_positive(self):
        for z in (2j, 1 + 1j, -1 + 0.8j):
            c0 = bao_xie_c0(1.0, 2.0, 1.0, 0.0, z, z.conjugate())
            assert abs(c0.imag) < 1e-12 * abs(c0)
            assert c0.real > 0


class TestBiasBound:
    def params(self, n=500):
        atoms = np.concatenate([np.full(n // 2, -1.0), np.full(n - n // 2, 1.0)])
        return FluctuationParams(
            sigma2=1.0, s2=1.0, tau=0.0, kappa=0.0,
            nu=AtomicMeasure.from_values(atoms), mode="finite_N", n=n,
        )

    def test_nonnegative_and_decreasing_in_imz(self):
        p = self.params()
        values = [bias_bound(p, complex(1.0, y)) for y in (0.5, 1.0, 2.0, 4.0)]
        assert all(v >= 0 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_growth_rate_down_to_half(self):
        p = self.params()
        # along z = iy the bound is a polynomial of degree <= 5 in 1/y times
        # the diagonal sum; check the ratio stays within that envelope
        b_half = bias_bound(p, 0.5j)
        b_one = bias_bound(p, 1.0j)
        assert b_half / b_one <= 2.0**5 * 10.0

    def test_requires_finite_n_mode(self):
        with pytest.raises(ParameterError):
            bias_bound(gue_params(), 2j)


class TestHsNorm:
    def test_gaussian_against_quadrature_oracle(self):
        # fourier transform of exp(-x^2/2) is sqrt(2 pi) exp(-t^2/2)
        phi = testfn.from_callable(lambda x: np.exp(-0.5 * x**2), "gauss")
        result = hs_norm(phi, 1.0)
        oracle_sq, _ = integrate.quad(
            lambda t: (1.0 + 2.0 * abs(t)) ** 2 * 2.0 * math.pi * math.exp(-t * t),
            -20, 20,
        )
        assert not result.divergent
        assert result.value == pytest.approx(math.sqrt(oracle_sq), rel=1e-4)

    def test_indicator_diverges(self):
        phi = testfn.from_callable(
            lambda x: np.where(np.abs(x) <= 1.0, 1.0, 0.0), "indicator"
        )
        assert hs_norm(phi, 1.0).divergent

    def test_homogeneity(self):
        phi = testfn.smooth_bump(0.0, 1.0, 3)
        phi2 = testfn.from_callable(lambda x: 2.0 * phi(x), "2bump")
        n1 = hs_norm(phi, 1.0).value
        n2 = hs_norm(phi2, 1.0).value
        assert n2 == pytest.approx(2.0 * n1, rel=1e-12)


class TestExtendBias:
    def test_gue_zero(self):
        p = gue_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        phi = testfn.real_resolvent_pair(2j)
        result = extend_bias(p, phi, window=(-60.0, 60.0))
        assert abs(result.value) <= 1e-4 + result.error

    def test_exact_span_combination(self):
        p = rademacher_params()
        z0 = 1.0 + 1.5j
        phi = testfn.real_resolvent_pair(z0)
        exact = (beta(p, z0) + beta(p, z0.conjugate())).real
        result = extend_bias(p, phi, window=(-60.0, 60.0))
        assert abs(result.value - exact) <= 1e-4 + result.error

    def test_linearity(self):
        p = rademacher_params()
        phi1 = testfn.real_resolvent_pair(2j)
        phi2 = testfn.real_resolvent_pair(1 + 1j)
        both = testfn.from_callable(lambda x: phi1(x) + phi2(x), "sum")
        w = (-60.0, 60.0)
        r1 = extend_bias(p, phi1, window=w)
        r2 = extend_bias(p, phi2, window=w)
        r12 = extend_bias(p, both, window=w)
        assert abs(r12.value - r1.value - r2.value) <= r1.error + r2.error + r12.error + 1e-6


class TestExtendVariance:
    def test_exact_pair_formula(self):
        p = rademacher_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        z = 1.0 + 1.2j
        phi = testfn.real_resolvent_pair(z)
        result = extend_variance(p, phi)
        g = lambda a, b: gamma_kernel(p, a, b).gamma
        expected = g(z, z) + 2.0 * g(z, z.conjugate()) + g(z.conjugate(), z.conjugate())
        assert abs(result.imag if hasattr(result, "imag") else 0.0) == 0.0
        assert result.value == pytest.approx(expected.real, rel=1e-12)
        assert result.fit_residual == 0.0

    def test_quadratic_scaling(self):
        p = gue_params()
        phi = testfn.smooth_bump(0.0, 1.5, 4)
        double = testfn.from_callable(lambda x: 2.0 * phi(x), "2bump", support=(-1.5, 1.5))
        v1 = extend_variance(p, phi)
        v2 = extend_variance(p, double)
        assert v2.value == pytest.approx(4.0 * v1.value, rel=1e-9)

    def test_nonnegativity_on_fitted_suite(self):
        p = rademacher_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        functions = [
            testfn.smooth_bump(0.0, 2.0, 3),
            testfn.smooth_bump(0.5, 1.0, 5),
            testfn.capped_polynomial([0.0, 1.0], (-2.0, 2.0), order=3),
        ]
        for phi in functions:
            res = extend_variance(p, phi)
            assert res.value >= -1e-8 * max(1.0, abs(res.value))

    def test_fit_recovers_exact_span_value(self):
        # fit a masked resolvent pair and compare to its exact bilinear value
        p = rademacher_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]))
        z0 = 0.4 + 0.8j
        pair = testfn.real_resolvent_pair(z0)
        exact = extend_variance(p, pair).value
        masked = testfn.from_callable(lambda x: pair(x), "masked_pair")
        fitted = extend_variance(p, masked)
        assert fitted.value == pytest.approx(exact, rel=1e-3)

    def test_representation_error_for_rough_function(self):
        p = gue_params()
        indicator = testfn.from_callable(
            lambda x: np.where(np.abs(x) <= 1.0, 1.0, 0.0), "indicator",
            support=(-1.0, 1.0),
        )
        with pytest.raises(RepresentationError):
            extend_variance(p, indicator, max_residual=1e-3)


def test_guard_sigma2_I_below_one():
    # asymptotic well-definedness: |sigma2 * I(z, conj z)| < 1 for Im z >= 0.5
    configs = [
        gue_params(AtomicMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])),
        rademacher_params(AtomicMeasure.from_atoms([(-2.0, 0.3), (1.0, 0.7)])),
        goe_params(),
    ]
    for p in configs:
        for re in np.linspace(-3, 3, 7):
            kv = gamma_kernel(p, complex(re, 0.5), complex(re, -0.5))
            assert abs(p.sigma2 * kv.I) < 1.0
