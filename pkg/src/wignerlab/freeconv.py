"""Free additive convolution of a semicircular law with an atomic measure.

Everything here works with the scalar subordination fixed point

    G(z) = G_nu(z - v*G(z)),        omega(z) = z - v*G(z),

solved off the real axis, plus Stieltjes inversion for the density of the
convolution and quadrature against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, EdgeSingularityError, PoleError, SolverError

__all__ = [
    "AtomicMeasure",
    "SubordinationSolution",
    "DensityEstimate",
    "stieltjes",
    "solve_pastur",
    "density",
    "integrate_against_rho",
    "is_in_omega",
    "default_eta_schedule",
    "support_window",
]

_WEIGHT_TOL = 1e-12
_PASTUR_TOL = 1e-13
_NEWTON_SWITCH = 1e-3
_MAX_ITER = 10_000
_EDGE_GUARD = 1e-10


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite atomic probability measure on the real line.

    Atoms are stored sorted by location with aggregated weights; weights must
    sum to one within 1e-12.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if loc.ndim != 1 or wts.shape != loc.shape or loc.size == 0:
            raise ValueError("locations and weights must be matching 1-d arrays")
        if not np.all(np.isfinite(loc)):
            raise ValueError("atom locations must be finite")
        if np.any(wts <= 0):
            raise ValueError("atom weights must be positive")
        if abs(wts.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {wts.sum()!r}, not 1")
        order = np.argsort(loc, kind="stable")
        loc, wts = loc[order], wts[order]
        # aggregate duplicate locations so the representation is canonical
        uniq, inverse = np.unique(loc, return_inverse=True)
        agg = np.zeros_like(uniq)
        np.add.at(agg, inverse, wts)
        object.__setattr__(self, "locations", uniq)
        object.__setattr__(self, "weights", agg)
        self.locations.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def point_mass(cls, x: float = 0.0) -> "AtomicMeasure":
        return cls(np.array([float(x)]), np.array([1.0]))

    @classmethod
    def from_atoms(cls, atoms) -> "AtomicMeasure":
        """Build from an iterable of (location, weight) pairs."""
        locs = np.array([a[0] for a in atoms], dtype=float)
        wts = np.array([a[1] for a in atoms], dtype=float)
        return cls(locs, wts)

    @classmethod
    def from_values(cls, values) -> "AtomicMeasure":
        """Empirical measure of a sample (equal weights, duplicates merged)."""
        vals = np.asarray(values, dtype=float).ravel()
        return cls(vals, np.full(vals.size, 1.0 / vals.size))

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.locations**k))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.locations[0]), float(self.locations[-1])

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.locations.tolist(), self.weights.tolist()))


def stieltjes(nu: AtomicMeasure, w: complex, order: int = 0) -> complex:
    """Order-k derivative of the Stieltjes transform of an atomic measure.

    G^(k)(w) = (-1)^k k! sum_i w_i (w - d_i)^(-k-1), exact up to rounding.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    w = complex(w)
    diff = w - nu.locations
    if w.imag == 0.0:
        gap = np.min(np.abs(diff))
        if gap < 1e-300 or gap < 1e-14 * max(1.0, abs(w)):
            raise PoleError(f"evaluation point {w} coincides with an atom")
    sign = -1.0 if order % 2 else 1.0
    coeff = sign * math.factorial(order)
    return complex(coeff * np.sum(nu.weights / diff ** (order + 1)))


@dataclass(frozen=True)
class SubordinationSolution:
    """Pastur fixed point at one spectral parameter, with derivatives.

    Fields G1/G2 and omega1/omega2 are first and second z-derivatives of the
    transform G and the subordination map omega, filled by the closed-form
    chain rule, never by numerical differentiation.
    """

    z: complex
    v: float
    G: complex
    omega: complex
    G1: complex
    G2: complex
    omega1: complex
    omega2: complex
    iterations: int
    residual: float

    def conjugate(self) -> "SubordinationSolution":
        return SubordinationSolution(
            z=self.z.conjugate(),
            v=self.v,
            G=self.G.conjugate(),
            omega=self.omega.conjugate(),
            G1=self.G1.conjugate(),
            G2=self.G2.conjugate(),
            omega1=self.omega1.conjugate(),
            omega2=self.omega2.conjugate(),
            iterations=self.iterations,
            residual=self.residual,
        )


def _pastur_upper(nu: AtomicMeasure, v: float, z: complex, g0: complex | None) -> tuple[complex, int, float]:
    """Solve G = G_nu(z - vG) for z in the open upper half-plane."""
    g = g0 if g0 is not None else 1.0 / z
    if g.imag > 0.0:
        g = g.conjugate()

    def fixed_map(gg: complex) -> complex:
        return stieltjes(nu, z - v * gg, 0)

    residual = abs(g - fixed_map(g))
    newton = False
    for it in range(1, _MAX_ITER + 1):
        if residual <= _PASTUR_TOL:
            return g, it - 1, residual
        if newton or residual < _NEWTON_SWITCH:
            omega = z - v * g
            deriv = 1.0 + v * stieltjes(nu, omega, 1)
            step_ok = abs(deriv) > 1e-14
            if step_ok:
                g_new = g - (g - stieltjes(nu, omega, 0)) / deriv
                r_new = abs(g_new - fixed_map(g_new)) if g_new.imag < 0.0 else math.inf
                if r_new < residual:
                    g, residual, newton = g_new, r_new, True
                    continue
            newton = False  # Newton stalled; fall through to damped step
        g = 0.5 * g + 0.5 * fixed_map(g)
        residual = abs(g - fixed_map(g))
    raise SolverError(
        f"Pastur iteration did not converge at z={z} (residual {residual:.3e})",
        residual=residual,
    )


def solve_pastur(
    nu: AtomicMeasure,
    v: float,
    z: complex,
    warm_start: complex | None = None,
) -> SubordinationSolution:
    """Solve the subordination fixed point at z and fill all derivatives.

    Solutions in the lower half-plane are obtained by Schwarz reflection, so
    the symmetry G(conj z) = conj G(z) holds exactly by construction.
    """
    if v <= 0:
        raise ValueError("semicircular variance v must be positive")
    z = complex(z)
    if z.imag == 0.0:
        raise DomainError("solve_pastur requires Im z != 0")
    if z.imag < 0.0:
        ws = warm_start.conjugate() if warm_start is not None else None
        return solve_pastur(nu, v, z.conjugate(), ws).conjugate()

    # near the real axis, walk eta down from a safe height with warm starts
    # so the iteration never leaves the basin near a spectral edge
    if warm_start is None and z.imag < 0.05:
        eta = 0.2
        g_chain = None
        while eta > z.imag:
            g_chain, _, _ = _pastur_upper(nu, v, complex(z.real, eta), g_chain)
            eta *= 0.5
        warm_start = g_chain

    g, iterations, residual = _pastur_upper(nu, v, z, warm_start)
    omega = z - v * g
    g1_nu = stieltjes(nu, omega, 1)
    denom = 1.0 + v * g1_nu
    if abs(denom) < _EDGE_GUARD:
        raise EdgeSingularityError(f"1 + v*G_nu'(omega) ~ 0 at z={z}")
    omega1 = 1.0 / denom
    g1 = g1_nu * omega1
    g2_nu = stieltjes(nu, omega, 2)
    omega2 = -v * g2_nu * omega1**3
    g2 = g2_nu * omega1**2 + g1_nu * omega2
    return SubordinationSolution(
        z=z, v=v, G=g, omega=omega, G1=g1, G2=g2,
        omega1=omega1, omega2=omega2, iterations=iterations, residual=residual,
    )


def is_in_omega(nu: AtomicMeasure, v: float, w: complex) -> bool:
    """Diagnostic: does w lie in the image domain of the subordination map?

    Tests Im H(w) > 0 for H(w) = w + v*G_nu(w).
    """
    h = complex(w) + v * stieltjes(nu, w, 0)
    return h.imag > 0.0


def default_eta_schedule(eta_max: float = 1e-2, eta_min: float = 5e-7, ratio: float = 0.4):
    """Geometric schedule of imaginary offsets for Stieltjes inversion."""
    etas = []
    eta = eta_max
    while eta > eta_min:
        etas.append(eta)
        eta *= ratio
    etas.append(eta_min)
    return tuple(etas)


@dataclass(frozen=True)
class DensityEstimate:
    """Density value recovered by extrapolating -Im G/pi to the real axis."""

    x: float
    value: float
    error: float
    warning: bool = False
    etas_used: int = 0

    def __float__(self):
        return self.value


def _extrapolate_to_zero(steps, values):
    """Neville extrapolation of values(step) to step -> 0.

    ``steps`` must be strictly decreasing. Returns (limit, error_estimate,
    monotone_flag); the estimate sequence is anchored at the smallest steps,
    and the error estimate is the change produced by the last refinement.
    """
    n = len(values)
    p = list(values)
    estimates = [p[-1]]
    for level in range(1, n):
        for i in range(n - 1, level - 1, -1):
            s_i, s_prev = steps[i], steps[i - level]
            p[i] = (s_prev * p[i] - s_i * p[i - 1]) / (s_prev - s_i)
        estimates.append(p[-1])
    corrections = [abs(estimates[k] - estimates[k - 1]) for k in range(1, n)]
    err = corrections[-1] if corrections else 0.0
    monotone = all(
        corrections[k] <= 4.0 * corrections[k - 1] + 1e-15 for k in range(1, len(corrections))
    )
    return estimates[-1], err, monotone


def density(
    nu: AtomicMeasure,
    v: float,
    x: float,
    eta_schedule=None,
) -> DensityEstimate:
    """Density of the free convolution at a real point x.

    Evaluates -Im G(x + i*eta)/pi down the schedule with warm-started solves
    and extrapolates to eta = 0 in the variable sqrt(eta), which also captures
    the square-root behaviour at spectral edges.
    """
    etas = tuple(eta_schedule) if eta_schedule is not None else default_eta_schedule()
    if any(e2 >= e1 for e1, e2 in zip(etas, etas[1:])) or etas[-1] > 1e-6:
        raise ValueError("eta schedule must decrease, with tail <= 1e-6")
    vals = []
    warm = None
    warning = False
    for eta in etas:
        try:
            sol = solve_pastur(nu, v, complex(x, eta), warm_start=warm)
        except (SolverError, EdgeSingularityError):
            warning = True
            break
        warm = sol.G
        vals.append(-sol.G.imag / math.pi)
    if len(vals) < 3:
        raise SolverError(f"density solve failed near x={x}")
    steps = [math.sqrt(e) for e in etas[: len(vals)]]
    value, err, monotone = _extrapolate_to_zero(steps, vals)
    if not monotone:
        warning = True
    return DensityEstimate(
        x=float(x),
        value=max(value, 0.0),
        error=err,
        warning=warning,
        etas_used=len(vals),
    )


def support_window(nu: AtomicMeasure, v: float) -> tuple[float, float]:
    """Interval certainly containing the support of the free convolution."""
    lo, hi = nu.support
    half = 2.0 * math.sqrt(v)
    return lo - half, hi + half


def integrate_against_rho(
    nu: AtomicMeasure,
    v: float,
    phi,
    eta_schedule=None,
    rtol: float = 1e-8,
) -> float:
    """Quadrature of a test function against the free-convolution density.

    Uses adaptive quadrature over the support window, with atom locations
    supplied as break points.
    """
    if v <= 0:
        raise ValueError("v must be positive")
    a, b = support_window(nu, v)
    if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
        raise DomainError("support window detection failed")
    breaks = [float(d) for d in nu.locations if a < d < b]

    def integrand(x: float) -> float:
        return float(phi(x)) * density(nu, v, x, eta_schedule).value

    value, _ = integrate.quad(
        integrand, a, b, points=breaks[:80] or None, limit=250,
        epsabs=1e-8, epsrel=rtol,
    )
    return float(value)
