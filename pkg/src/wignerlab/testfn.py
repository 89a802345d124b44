"""Test functions shared by the spectral, theory and Monte Carlo modules.

The registry covers resolvent kernels phi_z(x) = 1/(z - x), their real
combinations, compactly supported bumps of explicit finite smoothness and
grid-sampled functions. Bumps are polynomial-based on purpose: an order-k
bump has exactly k continuous derivatives, so smoothness-class claims stay
falsifiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "TestFunction",
    "resolvent",
    "real_resolvent_pair",
    "smooth_bump",
    "capped_polynomial",
    "from_grid",
    "from_callable",
    "from_spec",
    "classify",
    "Registry",
]


@dataclass(frozen=True)
class TestFunction:
    """Evaluable test function with metadata used by the extension pipeline.

    ``poles`` carries an exact resolvent representation
    phi(x) = sum_j coeff_j / (z_j - x) when one exists (then no least-squares
    fit is ever needed); ``regularity`` is the claimed smoothness order.
    """

    fn_id: str
    kind: str
    fn: Callable[[np.ndarray], np.ndarray]
    is_real: bool
    support: tuple[float, float] | None = None
    regularity: float | None = None
    poles: tuple[tuple[complex, complex], ...] | None = None

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def sup_norm(self, window: tuple[float, float], n: int = 4001) -> float:
        xs = np.linspace(window[0], window[1], n)
        return float(np.max(np.abs(self(xs))))


def resolvent(z: complex, fn_id: str | None = None) -> TestFunction:
    """phi_z(x) = 1/(z - x) for Im z != 0."""
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("resolvent test function requires Im z != 0")
    return TestFunction(
        fn_id=fn_id or f"resolvent({z:.6g})",
        kind="resolvent",
        fn=lambda x: 1.0 / (z - x),
        is_real=False,
        regularity=math.inf,
        poles=((z, 1.0 + 0.0j),),
    )


def real_resolvent_pair(z: complex, fn_id: str | None = None) -> TestFunction:
    """2 Re phi_z = phi_z + phi_conj(z); real on the real line."""
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("real_resolvent_pair requires Im z != 0")
    return TestFunction(
        fn_id=fn_id or f"real_resolvent_pair({z:.6g})",
        kind="real_resolvent_pair",
        fn=lambda x: (2.0 * (z.real - x)) / ((z.real - x) ** 2 + z.imag**2),
        is_real=True,
        regularity=math.inf,
        poles=((z, 1.0 + 0.0j), (z.conjugate(), 1.0 + 0.0j)),
    )


def smooth_bump(center: float, width: float, order: int, fn_id: str | None = None) -> TestFunction:
    """Bump ((1 - u^2)_+)^(order+1), u = (x-center)/width.

    Has exactly ``order`` continuous derivatives; the next one jumps at the
    support boundary.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if order < 0:
        raise ValueError("order must be nonnegative")
    power = order + 1

    def fn(x):
        u = (x - center) / width
        core = np.clip(1.0 - u * u, 0.0, None)
        return core**power

    return TestFunction(
        fn_id=fn_id or f"bump(c={center:g},w={width:g},k={order})",
        kind="smooth_bump",
        fn=fn,
        is_real=True,
        support=(center - width, center + width),
        regularity=float(order),
    )


def _plateau(u: np.ndarray, order: int) -> np.ndarray:
    """Monotone C^order transition from 0 at u<=0 to 1 at u>=1."""
    uu = np.clip(u, 0.0, 1.0)
    # regularized incomplete beta with integer parameters, evaluated stably
    k = order + 1
    total = np.zeros_like(uu)
    for j in range(k, 2 * k):
        total += math.comb(2 * k - 1, j) * uu**j * (1.0 - uu) ** (2 * k - 1 - j)
    return total


def capped_polynomial(
    coeffs,
    window: tuple[float, float],
    order: int = 2,
    ramp: float | None = None,
    fn_id: str | None = None,
) -> TestFunction:
    """Polynomial on ``window`` taken smoothly to zero outside it.

    ``coeffs`` are ascending powers; the cutoff ramp has C^order regularity
    and width ``ramp`` (default: a tenth of the window).
    """
    a, b = float(window[0]), float(window[1])
    if b <= a:
        raise ValueError("window must be increasing")
    w = ramp if ramp is not None else 0.1 * (b - a)
    c = np.asarray(coeffs, dtype=float)

    def fn(x):
        p = np.polynomial.polynomial.polyval(x, c)
        left = _plateau((x - (a - w)) / w, order)
        right = _plateau(((b + w) - x) / w, order)
        return p * left * right

    return TestFunction(
        fn_id=fn_id or f"capped_poly(deg={len(c)-1},[{a:g},{b:g}],k={order})",
        kind="capped_polynomial",
        fn=fn,
        is_real=True,
        support=(a - w, b + w),
        regularity=float(order),
    )


def from_grid(xs, values, fn_id: str, is_real: bool = True) -> TestFunction:
    """Piecewise-linear interpolant of samples, zero outside the grid."""
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
        raise ValueError("need matching 1-d arrays with at least two samples")

    def fn(x):
        return np.interp(x, xs, values, left=0.0, right=0.0)

    return TestFunction(
        fn_id=fn_id,
        kind="grid",
        fn=fn,
        is_real=is_real,
        support=(float(xs[0]), float(xs[-1])),
        regularity=0.0,
    )


def from_callable(
    f: Callable,
    fn_id: str,
    is_real: bool = True,
    support: tuple[float, float] | None = None,
    regularity: float | None = None,
) -> TestFunction:
    fn = f if _accepts_array(f) else np.vectorize(f)
    return TestFunction(
        fn_id=fn_id, kind="callable", fn=fn, is_real=is_real,
        support=support, regularity=regularity,
    )


def _accepts_array(f) -> bool:
    try:
        out = f(np.array([0.0, 1.0]))
    except Exception:
        return False
    return np.shape(out) == (2,)


def from_spec(spec: dict) -> TestFunction:
    """Build a test function from a config dictionary (CLI entry point)."""
    kind = spec.get("kind")
    if kind == "resolvent":
        return resolvent(complex(spec["z"][0], spec["z"][1]), spec.get("id"))
    if kind == "real_resolvent_pair":
        return real_resolvent_pair(complex(spec["z"][0], spec["z"][1]), spec.get("id"))
    if kind == "smooth_bump":
        return smooth_bump(spec["center"], spec["width"], spec["order"], spec.get("id"))
    if kind == "capped_polynomial":
        return capped_polynomial(
            spec["coeffs"], tuple(spec["window"]), spec.get("order", 2), spec.get("ramp"),
            spec.get("id"),
        )
    if kind == "grid":
        return from_grid(spec["x"], spec["values"], spec.get("id", "grid"))
    raise ValueError(f"unknown test function kind {kind!r}")


def classify(phi: TestFunction, s: float, **norm_kwargs):
    """Sobolev-class verdict for a test function.

    Returns (label, norm_estimate) with label in ``in_hs`` / ``not_in_hs`` /
    ``unknown``. Bumps of known order use the embedding (order k is in H_s
    for s <= k); everything else goes through the numerical norm.
    """
    from . import theory

    if phi.kind in ("smooth_bump", "capped_polynomial") and phi.regularity is not None:
        if s <= phi.regularity:
            result = theory.hs_norm(phi, s, **norm_kwargs)
            return "in_hs", result.value
    result = theory.hs_norm(phi, s, **norm_kwargs)
    if result.divergent:
        return "not_in_hs", None
    if result.error > 0.2 * max(result.value, 1e-300):
        return "unknown", result.value
    return "in_hs", result.value


class Registry:
    """Mutable id -> TestFunction mapping used by the CLI."""

    def __init__(self):
        self._functions: dict[str, TestFunction] = {}

    def register(self, phi: TestFunction) -> TestFunction:
        self._functions[phi.fn_id] = phi
        return phi

    def get(self, fn_id: str) -> TestFunction:
        try:
            return self._functions[fn_id]
        except KeyError:
            raise KeyError(f"unknown test function id {fn_id!r}") from None

    def ids(self):
        return sorted(self._functions)
