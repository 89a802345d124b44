"""Closed-form limit quantities for fluctuations of linear spectral statistics.

Implements the limiting bias beta(z), the covariance kernel Gamma(z1, z2),
their specializations to the undeformed (semicircle) case, the finite-N bias
bound, and the extension of bias/variance functionals from the resolvent span
to more general test functions.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import AccuracyError, ParameterError, RepresentationError, SingularityError
from .freeconv import AtomicMeasure, SubordinationSolution, solve_pastur

__all__ = [
    "FluctuationParams",
    "KernelValue",
    "beta",
    "beta_tilde",
    "gamma_kernel",
    "gamma_primitive",
    "semicircle_transform",
    "bao_xie_b0",
    "bao_xie_c0",
    "bias_bound",
    "ExtrapolatedValue",
    "extend_bias",
    "VarianceExtension",
    "extend_variance",
    "HsNormResult",
    "hs_norm",
    "default_pole_grid",
]

KERNEL_MARGIN = 1e-6
_DENOM_GUARD = 1e-10


@dataclass(frozen=True, eq=False)
class FluctuationParams:
    """Moment parameters and deformation measure entering the limit formulas.

    ``mode`` records whether ``nu`` plays the role of a limiting measure or of
    the empirical measure of a concrete N-dimensional deformation; in the
    latter case ``n`` must be set (the bias bound needs it). The four moment
    parameters are always the N-rescaled ones, so the same numbers serve both
    modes.
    """

    sigma2: float
    s2: float
    tau: float
    kappa: float
    nu: AtomicMeasure
    mode: str = "limit"
    n: int | None = None

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ParameterError("sigma2 must be positive")
        if self.s2 <= 0:
            raise ParameterError("s2 must be positive")
        if self.mode not in ("limit", "finite_N"):
            raise ParameterError("mode must be 'limit' or 'finite_N'")
        if self.mode == "finite_N" and (self.n is None or self.n < 1):
            raise ParameterError("finite_N mode requires the dimension n")

    @classmethod
    def from_ensemble(cls, params) -> "FluctuationParams":
        """Finite-N parameters of a concrete ensemble (nu = deformation ESD)."""
        return cls(
            sigma2=params.sigma2,
            s2=params.s2,
            tau=params.tau,
            kappa=params.kappa,
            nu=params.nu(),
            mode="finite_N",
            n=params.n,
        )

    def solve(self, z: complex, warm_start=None) -> SubordinationSolution:
        return solve_pastur(self.nu, self.sigma2, z, warm_start=warm_start)


def _bias_bracket(p: FluctuationParams, sol: SubordinationSolution) -> complex:
    w1 = sol.omega1
    denom = p.tau + (p.sigma2 - p.tau) * w1
    if abs(denom) < _DENOM_GUARD:
        raise SingularityError(f"bias denominator tau+(sigma2-tau)*omega' ~ 0 at z={sol.z}")
    return p.s2 - p.sigma2 + p.tau**2 * (w1 - 1.0) / denom - p.kappa * sol.G1 / w1


def beta(params: FluctuationParams, z: complex) -> complex:
    """Limiting bias of the trace of the resolvent at z."""
    sol = params.solve(z)
    return sol.G2 / (2.0 * sol.omega1**2) * _bias_bracket(params, sol)


def beta_tilde(params: FluctuationParams, z: complex) -> complex:
    """Companion bias with one extra omega' factor; beta = omega' * beta_tilde."""
    sol = params.solve(z)
    return sol.G2 / (2.0 * sol.omega1**3) * _bias_bracket(params, sol)


@dataclass(frozen=True)
class KernelValue:
    """Covariance kernel value with its branch-distance diagnostic."""

    z1: complex
    z2: complex
    I: complex
    gamma: complex
    branch_margin: float

    @property
    def valid(self) -> bool:
        return self.branch_margin > KERNEL_MARGIN


def _pair_integrals(nu: AtomicMeasure, w1: complex, w2: complex):
    """J_pq = sum_i nu_i (w1 - d_i)^-p (w2 - d_i)^-q for p,q in {1,2}."""
    d1 = w1 - nu.locations
    d2 = w2 - nu.locations
    inv1, inv2 = 1.0 / d1, 1.0 / d2
    w = nu.weights
    j11 = complex(np.sum(w * inv1 * inv2))
    j21 = complex(np.sum(w * inv1**2 * inv2))
    j12 = complex(np.sum(w * inv1 * inv2**2))
    j22 = complex(np.sum(w * inv1**2 * inv2**2))
    return j11, j21, j12, j22


def _gamma_from_solutions(
    p: FluctuationParams, s1: SubordinationSolution, s2: SubordinationSolution
) -> KernelValue:
    j11, j21, j12, j22 = _pair_integrals(p.nu, s1.omega, s2.omega)
    i00 = j11
    d1 = -s1.omega1 * j21
    d2 = -s2.omega1 * j12
    d12 = s1.omega1 * s2.omega1 * j22
    den_s = 1.0 - p.sigma2 * i00
    den_t = 1.0 - p.tau * i00
    margin = min(abs(den_s), abs(den_t))
    gamma = (p.s2 - p.sigma2 - p.tau) * d12
    gamma += p.kappa * (d1 * d2 + i00 * d12)
    gamma += p.sigma2 * d12 / den_s + p.sigma2**2 * d1 * d2 / den_s**2
    gamma += p.tau * d12 / den_t + p.tau**2 * d1 * d2 / den_t**2
    return KernelValue(z1=s1.z, z2=s2.z, I=i00, gamma=gamma, branch_margin=margin)


def gamma_kernel(params: FluctuationParams, z1: complex, z2: complex) -> KernelValue:
    """Limiting covariance kernel of traces of resolvents at (z1, z2).

    The mixed derivative of the primitive is evaluated analytically through
    the pair integrals J_pq; values closer than ``KERNEL_MARGIN`` to either
    logarithmic branch point are flagged invalid rather than continued.
    """
    s1 = params.solve(z1)
    s2 = params.solve(z2)
    return _gamma_from_solutions(params, s1, s2)


def gamma_primitive(params: FluctuationParams, z1: complex, z2: complex) -> complex:
    """Primitive whose mixed (z1, z2)-derivative is the covariance kernel.

    Uses principal branches for both logarithms.
    """
    s1 = params.solve(z1)
    s2 = params.solve(z2)
    i00, _, _, _ = _pair_integrals(params.nu, s1.omega, s2.omega)
    den_s = 1.0 - params.sigma2 * i00
    den_t = 1.0 - params.tau * i00
    if min(abs(den_s), abs(den_t)) < KERNEL_MARGIN:
        raise SingularityError("primitive evaluated too close to a branch point")
    value = (params.s2 - params.sigma2 - params.tau) * i00
    value += 0.5 * params.kappa * i00**2
    value -= cmath.log(den_s) + cmath.log(den_t)
    return value


def semicircle_transform(z: complex, v: float, order: int = 0) -> complex:
    """Closed-form Stieltjes transform of the semicircle law of variance v.

    Branch chosen so G(z) ~ 1/z at infinity. Orders 0-2 are supported.
    """
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("semicircle transform evaluated off the real axis only")
    sq = cmath.sqrt(z * z - 4.0 * v)
    if (z.conjugate() * sq).real < 0.0:
        sq = -sq
    g = 2.0 / (z + sq)
    if order == 0:
        return g
    g1 = -g * g / (1.0 - v * g * g)
    if order == 1:
        return g1
    if order == 2:
        return -2.0 * g * g1 / (1.0 - v * g * g) ** 2
    raise ValueError("order must be 0, 1 or 2")


def bao_xie_b0(sigma2: float, s2: float, tau: float, kappa: float, z: complex) -> complex:
    """Undeformed-case bias, written directly in the semicircle transform."""
    g = semicircle_transform(z, sigma2)
    g1 = semicircle_transform(z, sigma2, 1)
    den = 1.0 - tau * g * g
    if abs(den) < _DENOM_GUARD:
        raise SingularityError("1 - tau*G^2 ~ 0")
    return -g1 * g * (s2 - sigma2 + tau**2 * g * g / den + kappa * g * g)


def bao_xie_c0(
    sigma2: float, s2: float, tau: float, kappa: float, z1: complex, z2: complex
) -> complex:
    """Undeformed-case covariance of traces of resolvents at (z1, z2)."""
    g1 = semicircle_transform(z1, sigma2)
    g2 = semicircle_transform(z2, sigma2)
    gg = g1 * g2
    den_s = 1.0 - sigma2 * gg
    den_t = 1.0 - tau * gg
    if min(abs(den_s), abs(den_t)) < _DENOM_GUARD:
        raise SingularityError("C0 denominator ~ 0")
    bracket = s2 - sigma2 - tau + 2.0 * kappa * gg
    bracket += sigma2 / den_s**2 + tau / den_t**2
    return semicircle_transform(z1, sigma2, 1) * semicircle_transform(z2, sigma2, 1) * bracket


def bias_bound(params: FluctuationParams, z: complex) -> float:
    """Explicit finite-N envelope for the bias of the trace of the resolvent.

    Assembled from the degree-3 polynomial bound times the (1 + 2*v*y^2)
    amplification, with the diagonal of the deterministic-equivalent resolvent
    approximated through the subordination point.
    """
    if params.mode != "finite_N":
        raise ParameterError("bias_bound requires finite_N mode")
    n = params.n
    sol = params.solve(z)
    y = 1.0 / abs(complex(z).imag)
    # N-rescaled coefficients: degree 1 carries N(sigma_N^2 + s_N^2),
    # degree 3 carries N^2 m_N + N(3N+1) sigma_N^4.
    a1 = params.sigma2 + params.s2
    a3 = params.kappa + 2.0 * params.sigma2**2 + params.tau**2
    a3 += (3.0 * n + 1.0) * params.sigma2**2 / n
    poly = a1 * y + a3 * y**3
    amplification = 1.0 + 2.0 * params.sigma2 * y * y
    diag_sum = n * float(np.sum(params.nu.weights / np.abs(sol.omega - params.nu.locations) ** 2))
    return amplification * poly * diag_sum / n


@dataclass(frozen=True)
class ExtrapolatedValue:
    value: float
    error: float

    def __float__(self):
        return self.value


def default_y_schedule(y_max: float = 0.256, y_min: float = 1e-3, ratio: float = 0.5):
    ys = []
    y = y_max
    while y > y_min:
        ys.append(y)
        y *= ratio
    ys.append(y_min)
    return tuple(ys)


def _neville_zero(steps, values):
    n = len(values)
    p = list(values)
    estimates = [p[-1]]
    for level in range(1, n):
        for i in range(n - 1, level - 1, -1):
            s_i, s_prev = steps[i], steps[i - level]
            p[i] = (s_prev * p[i] - s_i * p[i - 1]) / (s_prev - s_i)
        estimates.append(p[-1])
    return estimates


def _integration_window(params: FluctuationParams, phi) -> tuple[float, float]:
    support = getattr(phi, "support", None)
    if support is not None:
        return float(support[0]), float(support[1])
    lo, hi = params.nu.support
    pad = 2.0 * math.sqrt(params.sigma2) + 50.0
    return lo - pad, hi + pad


def extend_bias(
    params: FluctuationParams,
    phi,
    y_schedule=None,
    window: tuple[float, float] | None = None,
) -> ExtrapolatedValue:
    """Bias functional on a general real test function.

    Extends the bias from the resolvent span by Stieltjes inversion of the
    limiting bias: b(phi) = -(1/pi) lim_y integral phi(x) Im beta(x+iy) dx,
    extrapolated to y = 0 in sqrt(y). Returns value and extrapolation-error
    estimate.
    """
    ys = tuple(y_schedule) if y_schedule is not None else default_y_schedule()
    if any(b >= a for a, b in zip(ys, ys[1:])) or ys[-1] > 1e-3 + 1e-15:
        raise ValueError("y schedule must decrease to <= 1e-3")
    a, b = window if window is not None else _integration_window(params, phi)
    lo, hi = params.nu.support
    edge_pad = 2.0 * math.sqrt(params.sigma2)
    breaks = [x for x in (lo - edge_pad, lo, hi, hi + edge_pad) if a < x < b]

    levels = []
    for y in ys:
        def integrand(x: float, _y=y) -> float:
            return float(np.real(phi(x))) * beta(params, complex(x, _y)).imag

        val, _ = integrate.quad(integrand, a, b, limit=300, points=breaks or None,
                                epsabs=1e-10, epsrel=1e-9)
        levels.append(-val / math.pi)
    steps = [math.sqrt(y) for y in ys]
    estimates = _neville_zero(steps, levels)
    corrections = [abs(estimates[k] - estimates[k - 1]) for k in range(1, len(estimates))]
    err = corrections[-1] if corrections else 0.0
    scale = max(abs(estimates[-1]), 1.0)
    if len(corrections) >= 3 and corrections[-1] > 10.0 * corrections[-3] + 1e-12 * scale:
        raise AccuracyError("bias extrapolation diverges along the y schedule")
    return ExtrapolatedValue(value=estimates[-1], error=err)


@dataclass(frozen=True)
class VarianceExtension:
    """Variance of a general test function via its resolvent-span projection."""

    value: float
    fit_residual: float
    poles: tuple[complex, ...]
    coefficients: tuple[complex, ...]


def default_pole_grid(params: FluctuationParams, n_real: int = 16, heights=(0.25, 0.5, 1.0)):
    """Poles straddling the spectral support, upper half-plane only."""
    lo, hi = params.nu.support
    half = 2.0 * math.sqrt(params.sigma2)
    xs = np.linspace(lo - half - 0.5, hi + half + 0.5, n_real)
    return tuple(complex(x, h) for h in heights for x in xs)


def _fit_window(params: FluctuationParams, phi) -> tuple[float, float]:
    """Window covering the spectral support and the function's support."""
    lo, hi = params.nu.support
    half = 2.0 * math.sqrt(params.sigma2)
    a, b = lo - half - 1.0, hi + half + 1.0
    support = getattr(phi, "support", None)
    if support is not None:
        a, b = min(a, float(support[0])), max(b, float(support[1]))
    return a, b


def extend_variance(
    params: FluctuationParams,
    phi,
    pole_grid=None,
    fit_window: tuple[float, float] | None = None,
    fit_points: int = 801,
    max_residual: float = 5e-2,
    ridge: float = 1e-7,
) -> VarianceExtension:
    """Variance functional on a real test function.

    If the function carries an exact resolvent representation it is used
    directly; otherwise phi is least-squares fitted on the resolvent span
    over a pole grid (conjugate poles included so the combination is real),
    and the variance is the non-conjugated bilinear evaluation
    V = sum_jk c_j c_k Gamma(z_j, z_k).

    The fit is ridge-regularized: a representation is only meaningful for
    the bilinear form when its coefficients stay bounded, otherwise huge
    cancelling resolvent combinations match phi pointwise while their
    variance diverges.
    """
    exact = getattr(phi, "poles", None)
    if exact is not None:
        poles = tuple(complex(z) for z, _ in exact)
        coeffs = tuple(complex(c) for _, c in exact)
        residual = 0.0
    else:
        grid = tuple(pole_grid) if pole_grid is not None else default_pole_grid(params)
        a, b = fit_window if fit_window is not None else _fit_window(params, phi)
        xs = np.linspace(a, b, fit_points)
        target = np.real(np.asarray(phi(xs), dtype=complex))
        columns = []
        for z in grid:
            gz = 1.0 / (z - xs)
            columns.append(2.0 * gz.real)
            columns.append(-2.0 * gz.imag)
        design = np.stack(columns, axis=1)
        col_scale = np.linalg.norm(design, axis=0)
        scaled = design / col_scale
        n_cols = scaled.shape[1]
        augmented = np.vstack([scaled, math.sqrt(ridge) * np.eye(n_cols)])
        rhs = np.concatenate([target, np.zeros(n_cols)])
        sol, *_ = np.linalg.lstsq(augmented, rhs, rcond=None)
        sol = sol / col_scale
        residual = float(np.max(np.abs(design @ sol - target)))
        scale = max(1.0, float(np.max(np.abs(target))))
        if residual > max_residual * scale:
            raise RepresentationError(
                f"resolvent-span fit residual {residual:.3e} exceeds "
                f"{max_residual:.1e} * {scale:.3g}"
            )
        poles, coeffs = [], []
        for j, z in enumerate(grid):
            c = complex(sol[2 * j], sol[2 * j + 1])
            poles.extend([z, z.conjugate()])
            coeffs.extend([c, c.conjugate()])
        poles, coeffs = tuple(poles), tuple(coeffs)

    sols = {z: params.solve(z) for z in set(poles)}
    total = 0.0 + 0.0j
    rounding_scale = 0.0
    for zj, cj in zip(poles, coeffs):
        for zk, ck in zip(poles, coeffs):
            kv = _gamma_from_solutions(params, sols[zj], sols[zk])
            if not kv.valid:
                raise SingularityError(
                    f"kernel invalid (branch margin {kv.branch_margin:.2e}) at {zj}, {zk}"
                )
            total += cj * ck * kv.gamma
            rounding_scale += abs(cj) * abs(ck) * abs(kv.gamma)
    if abs(total.imag) > 1e-12 * rounding_scale + 1e-10 * max(1.0, abs(total.real)):
        raise AccuracyError(f"variance has non-negligible imaginary part {total.imag:.3e}")
    return VarianceExtension(
        value=total.real, fit_residual=residual, poles=poles, coefficients=coeffs
    )


@dataclass(frozen=True)
class HsNormResult:
    value: float
    error: float
    divergent: bool

    def __float__(self):
        return self.value


def hs_norm(
    phi,
    s: float,
    half_width: float = 80.0,
    points: int = 1 << 15,
) -> HsNormResult:
    """Sobolev-type norm || (1+2|t|)^s * fourier(phi) ||_L2.

    Fourier convention: f^(t) = integral f(x) exp(-i t x) dx, approximated by
    an FFT of uniform samples on [-half_width, half_width). The norm is
    recomputed at doubled resolution (which also doubles the frequency range);
    growth under refinement raises the divergent flag.
    """
    if s <= 0:
        raise ValueError("s must be positive")

    def norm_at(n: int) -> float:
        h = 2.0 * half_width / n
        xs = -half_width + h * np.arange(n)
        samples = np.asarray(phi(xs), dtype=complex)
        spectrum = h * np.fft.fft(samples)
        ts = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
        weight = (1.0 + 2.0 * np.abs(ts)) ** (2.0 * s)
        dt = 2.0 * math.pi / (n * h)
        return float(np.sqrt(np.sum(weight * np.abs(spectrum) ** 2) * dt))

    coarse = norm_at(points)
    fine = norm_at(2 * points)
    error = abs(fine - coarse)
    divergent = fine > 1.05 * coarse and error > 1e-9 * max(coarse, 1.0)
    return HsNormResult(value=fine, error=error, divergent=bool(divergent))
