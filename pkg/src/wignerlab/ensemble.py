"""Deformed Wigner ensembles: entry laws, parameters, reproducible sampling.

A sample is X = W + D with W Hermitian, independent entries above the
diagonal at per-entry scale sigma_n = sqrt(sigma2/n), a real diagonal at
scale s_n = sqrt(s2/n), and a deterministic diagonal deformation D stored in
sorted order. Sampling is a pure function of (params, master_seed, index)
through a counter-keyed Philox stream, so parallel reruns are bitwise stable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DegenerateTruncationError, ParameterError
from .freeconv import AtomicMeasure

__all__ = [
    "EntryLaw",
    "GaussianComplex",
    "GaussianReal",
    "RademacherReal",
    "RademacherComplexFourPoint",
    "CustomDiscrete",
    "EnsembleParams",
    "WignerSample",
    "sample",
    "truncate_center_homogenize",
    "choose_delta",
    "law_from_config",
    "deformation_from_config",
]

MOMENT_RTOL = 1e-12
DEFAULT_DEFORMATION_BOUND = 100.0


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _gauss_trunc_second_moment(c: float) -> float:
    """E[g^2 1_{|g|<=c}] for standard normal g."""
    return (2.0 * _norm_cdf(c) - 1.0) - 2.0 * c * _norm_pdf(c)


class EntryLaw:
    """Entry distribution at unit scale.

    Off-diagonal variables u satisfy E u = 0 and E|u|^2 = 1; the matrix entry
    is sigma_n * u. Diagonal variables v are real with E v = 0, E v^2 = 1 and
    enter as s_n * v. Subclasses provide exact (law-level, never sampled)
    moments and truncated moments.
    """

    name: str = "abstract"
    is_complex: bool = False

    # normalized moments of the off-diagonal u
    def offdiag_sq(self) -> float:
        raise NotImplementedError

    def offdiag_abs4(self) -> float:
        raise NotImplementedError

    def sample_offdiag(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def sample_diag(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def truncated_offdiag(self, sigma_n: float, delta: float) -> tuple[complex, float]:
        """(mean, variance) of sigma_n*u restricted to |entry| <= delta."""
        raise NotImplementedError

    def truncated_diag(self, s_n: float, delta: float) -> tuple[float, float]:
        raise NotImplementedError

    def config(self) -> dict:
        return {"name": self.name}

    # scaled views used by EnsembleParams
    def implied_tau(self, sigma2: float) -> float:
        return sigma2 * self.offdiag_sq()

    def implied_kappa(self, sigma2: float) -> float:
        return sigma2**2 * (self.offdiag_abs4() - 2.0 - self.offdiag_sq() ** 2)


class GaussianComplex(EntryLaw):
    """GUE-type entries: complex Gaussian off-diagonal, real Gaussian diagonal."""

    name = "gaussian_complex"
    is_complex = True

    def offdiag_sq(self) -> float:
        return 0.0

    def offdiag_abs4(self) -> float:
        return 2.0

    def sample_offdiag(self, rng, size):
        re = rng.standard_normal(size)
        im = rng.standard_normal(size)
        return (re + 1j * im) / math.sqrt(2.0)

    def sample_diag(self, rng, size):
        return rng.standard_normal(size)

    def truncated_offdiag(self, sigma_n, delta):
        u0 = (delta / sigma_n) ** 2
        second = sigma_n**2 * (1.0 - math.exp(-u0) * (1.0 + u0))
        return 0.0 + 0.0j, second

    def truncated_diag(self, s_n, delta):
        return 0.0, s_n**2 * _gauss_trunc_second_moment(delta / s_n)


class GaussianReal(EntryLaw):
    """GOE-type entries: real Gaussian everywhere."""

    name = "gaussian_real"
    is_complex = False

    def offdiag_sq(self) -> float:
        return 1.0

    def offdiag_abs4(self) -> float:
        return 3.0

    def sample_offdiag(self, rng, size):
        return rng.standard_normal(size)

    def sample_diag(self, rng, size):
        return rng.standard_normal(size)

    def truncated_offdiag(self, sigma_n, delta):
        return 0.0 + 0.0j, sigma_n**2 * _gauss_trunc_second_moment(delta / sigma_n)

    def truncated_diag(self, s_n, delta):
        return 0.0, s_n**2 * _gauss_trunc_second_moment(delta / s_n)


class RademacherReal(EntryLaw):
    """Two-point entries +-sigma_n off-diagonal, +-s_n diagonal."""

    name = "rademacher_real"
    is_complex = False

    def offdiag_sq(self) -> float:
        return 1.0

    def offdiag_abs4(self) -> float:
        return 1.0

    def sample_offdiag(self, rng, size):
        return rng.choice(np.array([-1.0, 1.0]), size=size)

    def sample_diag(self, rng, size):
        return rng.choice(np.array([-1.0, 1.0]), size=size)

    def _trunc(self, scale, delta):
        if delta >= scale:
            return 0.0, scale**2
        raise DegenerateTruncationError(
            f"truncation level {delta} removes the whole two-point support {scale}"
        )

    def truncated_offdiag(self, sigma_n, delta):
        mean, var = self._trunc(sigma_n, delta)
        return complex(mean), var

    def truncated_diag(self, s_n, delta):
        return self._trunc(s_n, delta)


class RademacherComplexFourPoint(EntryLaw):
    """Off-diagonal uniform on {+-sigma_n, +-i sigma_n}; diagonal +-s_n."""

    name = "rademacher_complex_four_point"
    is_complex = True

    def offdiag_sq(self) -> float:
        return 0.0

    def offdiag_abs4(self) -> float:
        return 1.0

    def sample_offdiag(self, rng, size):
        return rng.choice(np.array([1.0 + 0j, -1.0 + 0j, 1j, -1j]), size=size)

    def sample_diag(self, rng, size):
        return rng.choice(np.array([-1.0, 1.0]), size=size)

    def truncated_offdiag(self, sigma_n, delta):
        if delta >= sigma_n:
            return 0.0 + 0.0j, sigma_n**2
        raise DegenerateTruncationError(
            f"truncation level {delta} removes the whole four-point support {sigma_n}"
        )

    def truncated_diag(self, s_n, delta):
        if delta >= s_n:
            return 0.0, s_n**2
        raise DegenerateTruncationError(
            f"truncation level {delta} removes the diagonal support {s_n}"
        )


class CustomDiscrete(EntryLaw):
    """Finite-support law given at unit scale.

    Off-diagonal support may be complex; weights must give E u = 0,
    E|u|^2 = 1 and real E u^2. The diagonal support is real with E v = 0,
    E v^2 = 1.
    """

    name = "custom_discrete"

    def __init__(self, offdiag_atoms: Iterable, diag_atoms: Iterable):
        self.off_support = np.array([complex(a[0]) for a in offdiag_atoms])
        self.off_weights = np.array([float(a[1]) for a in offdiag_atoms])
        self.diag_support = np.array([float(a[0]) for a in diag_atoms])
        self.diag_weights = np.array([float(a[1]) for a in diag_atoms])
        for w in (self.off_weights, self.diag_weights):
            if np.any(w <= 0) or abs(w.sum() - 1.0) > MOMENT_RTOL:
                raise ParameterError("law weights must be positive and sum to 1")
        mean = np.sum(self.off_weights * self.off_support)
        if abs(mean) > MOMENT_RTOL:
            raise ParameterError(f"off-diagonal law mean {mean} is not 0")
        abs2 = float(np.sum(self.off_weights * np.abs(self.off_support) ** 2))
        if abs(abs2 - 1.0) > MOMENT_RTOL:
            raise ParameterError(f"off-diagonal law second moment {abs2} is not 1")
        sq = np.sum(self.off_weights * self.off_support**2)
        if abs(sq.imag) > MOMENT_RTOL:
            raise ParameterError("E[u^2] must be real (uncorrelated Re/Im parts)")
        dmean = float(np.sum(self.diag_weights * self.diag_support))
        dabs2 = float(np.sum(self.diag_weights * self.diag_support**2))
        if abs(dmean) > MOMENT_RTOL or abs(dabs2 - 1.0) > MOMENT_RTOL:
            raise ParameterError("diagonal law must have mean 0 and second moment 1")
        self.is_complex = bool(np.any(np.abs(self.off_support.imag) > 0))

    def offdiag_sq(self) -> float:
        return float(np.sum(self.off_weights * self.off_support**2).real)

    def offdiag_abs4(self) -> float:
        return float(np.sum(self.off_weights * np.abs(self.off_support) ** 4))

    def sample_offdiag(self, rng, size):
        idx = rng.choice(self.off_support.size, size=size, p=self.off_weights)
        vals = self.off_support[idx]
        return vals if self.is_complex else vals.real

    def sample_diag(self, rng, size):
        idx = rng.choice(self.diag_support.size, size=size, p=self.diag_weights)
        return self.diag_support[idx]

    def _trunc(self, support, weights, scale, delta):
        scaled = support * scale
        keep = np.abs(scaled) <= delta
        mean = np.sum(weights * scaled * keep)
        second = float(np.sum(weights * np.abs(scaled) ** 2 * keep))
        var = second - abs(mean) ** 2
        if var <= 0.0:
            raise DegenerateTruncationError(
                f"truncation at {delta} leaves no variance in the discrete law"
            )
        return mean, var

    def truncated_offdiag(self, sigma_n, delta):
        mean, var = self._trunc(self.off_support, self.off_weights, sigma_n, delta)
        return complex(mean), var

    def truncated_diag(self, s_n, delta):
        mean, var = self._trunc(self.diag_support, self.diag_weights, s_n, delta)
        return float(mean.real), var

    def config(self) -> dict:
        return {
            "name": self.name,
            "offdiag": [[v.real, v.imag, w] for v, w in zip(self.off_support, self.off_weights)],
            "diag": [[float(v), w] for v, w in zip(self.diag_support, self.diag_weights)],
        }


_NAMED_LAWS = {
    "gaussian_complex": GaussianComplex,
    "gaussian_real": GaussianReal,
    "rademacher_real": RademacherReal,
    "rademacher_complex_four_point": RademacherComplexFourPoint,
}


def law_from_config(spec) -> EntryLaw:
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec["name"]
    if name in _NAMED_LAWS:
        return _NAMED_LAWS[name]()
    if name == "custom_discrete":
        off = [(complex(a[0], a[1]), a[2]) for a in spec["offdiag"]]
        diag = [(a[0], a[1]) for a in spec["diag"]]
        return CustomDiscrete(off, diag)
    raise ParameterError(f"unknown entry law {name!r}")


def deformation_from_config(spec, n: int) -> np.ndarray:
    """Deformation atoms from an explicit list or a quantile description."""
    if "atoms" in spec:
        atoms = np.asarray(spec["atoms"], dtype=float)
        return np.sort(atoms)
    q = spec.get("quantile_spec")
    if q is None:
        raise ParameterError("deformation needs 'atoms' or 'quantile_spec'")
    kind = q.get("kind")
    if kind == "zero":
        return np.zeros(n)
    if kind == "two_point":
        a, b = float(q["a"]), float(q["b"])
        wa = float(q.get("weight_a", 0.5))
        count_a = int(round(wa * n))
        return np.sort(np.concatenate([np.full(count_a, a), np.full(n - count_a, b)]))
    if kind == "uniform":
        a, b = float(q["a"]), float(q["b"])
        # midpoint quantiles of the uniform law on [a, b]
        return a + (b - a) * (np.arange(n) + 0.5) / n
    raise ParameterError(f"unknown quantile_spec kind {kind!r}")


@dataclass(frozen=True, eq=False)
class EnsembleParams:
    """Moment parameters (N-rescaled) plus entry law and deformation.

    ``sigma2``, ``s2``, ``tau``, ``kappa`` are the large-N limits of
    N sigma_N^2, N s_N^2, N tau_N, N^2 kappa_N; per-entry values derive from
    them exactly, so the finite-N deterministic equivalent uses the same
    numbers.
    """

    n: int
    sigma2: float
    s2: float
    tau: float
    kappa: float
    entry_law: EntryLaw
    deformation: np.ndarray
    deformation_bound: float = DEFAULT_DEFORMATION_BOUND

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be a positive integer")
        if self.sigma2 <= 0 or self.s2 <= 0:
            raise ParameterError("sigma2 and s2 must be positive")
        # fourth-moment nonnegativity: N^2 m_N = kappa + 2 sigma2^2 + tau^2
        if self.kappa + 2.0 * self.sigma2**2 + self.tau**2 < 0.0:
            raise ParameterError(
                "m_N = kappa_N + 2 sigma_N^4 + tau_N^2 must be nonnegative"
            )
        implied_tau = self.entry_law.implied_tau(self.sigma2)
        implied_kappa = self.entry_law.implied_kappa(self.sigma2)
        if not _close(self.tau, implied_tau):
            raise ParameterError(
                f"tau={self.tau} inconsistent with entry law (implies {implied_tau})"
            )
        if not _close(self.kappa, implied_kappa):
            raise ParameterError(
                f"kappa={self.kappa} inconsistent with entry law (implies {implied_kappa})"
            )
        d = np.sort(np.asarray(self.deformation, dtype=float).ravel())
        if d.size != self.n:
            raise ParameterError(f"deformation has {d.size} atoms, expected n={self.n}")
        if not np.all(np.isfinite(d)):
            raise ParameterError("deformation atoms must be finite")
        if np.max(np.abs(d), initial=0.0) > self.deformation_bound:
            raise ParameterError(
                f"deformation atoms exceed the configured bound {self.deformation_bound}"
            )
        object.__setattr__(self, "deformation", d)
        self.deformation.setflags(write=False)

    @classmethod
    def create(
        cls,
        n: int,
        entry_law: EntryLaw | str,
        deformation,
        sigma2: float = 1.0,
        s2: float | None = None,
        tau: float | None = None,
        kappa: float | None = None,
        deformation_bound: float = DEFAULT_DEFORMATION_BOUND,
    ) -> "EnsembleParams":
        """Build params with law-implied defaults.

        Default diagonal scale is s2 = 2 sigma2 for the real Gaussian law
        (standard GOE diagonal) and s2 = sigma2 otherwise.
        """
        law = law_from_config(entry_law) if isinstance(entry_law, str) else entry_law
        if s2 is None:
            s2 = 2.0 * sigma2 if isinstance(law, GaussianReal) else sigma2
        if tau is None:
            tau = law.implied_tau(sigma2)
        if kappa is None:
            kappa = law.implied_kappa(sigma2)
        deformation = np.asarray(deformation, dtype=float)
        return cls(
            n=n, sigma2=sigma2, s2=s2, tau=tau, kappa=kappa,
            entry_law=law, deformation=deformation,
            deformation_bound=deformation_bound,
        )

    # per-entry moments
    @property
    def sigma_n2(self) -> float:
        return self.sigma2 / self.n

    @property
    def s_n2(self) -> float:
        return self.s2 / self.n

    @property
    def tau_n(self) -> float:
        return self.tau / self.n

    @property
    def kappa_n(self) -> float:
        return self.kappa / self.n**2

    @property
    def m_n(self) -> float:
        return self.kappa_n + 2.0 * self.sigma_n2**2 + self.tau_n**2

    def nu(self) -> AtomicMeasure:
        """Empirical spectral measure of the deformation."""
        return AtomicMeasure.from_values(self.deformation)

    def config(self) -> dict:
        return {
            "n": self.n,
            "sigma2": self.sigma2,
            "s2": self.s2,
            "tau": self.tau,
            "kappa": self.kappa,
            "entry_law": self.entry_law.config(),
            "deformation": {"atoms": self.deformation.tolist()},
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "EnsembleParams":
        n = int(cfg["n"])
        law = law_from_config(cfg["entry_law"])
        atoms = deformation_from_config(cfg["deformation"], n)
        return cls.create(
            n=n,
            entry_law=law,
            deformation=atoms,
            sigma2=float(cfg.get("sigma2", 1.0)),
            s2=None if cfg.get("s2") is None else float(cfg["s2"]),
            tau=None if cfg.get("tau") is None else float(cfg["tau"]),
            kappa=None if cfg.get("kappa") is None else float(cfg["kappa"]),
            deformation_bound=float(cfg.get("deformation_bound", DEFAULT_DEFORMATION_BOUND)),
        )

    def digest(self) -> str:
        payload = json.dumps(self.config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= MOMENT_RTOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True, eq=False)
class WignerSample:
    """One realization X = W + D with its provenance."""

    matrix: np.ndarray
    seed_path: tuple[int, int]
    params_hash: str
    params: EnsembleParams

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def _rng_for(master_seed: int, index: int) -> np.random.Generator:
    # counter-keyed construction: one Philox stream per (seed, index)
    seq = np.random.SeedSequence(entropy=(int(master_seed), int(index)))
    return np.random.Generator(np.random.Philox(seq))


def sample(params: EnsembleParams, master_seed: int, index: int = 0) -> WignerSample:
    """Draw X = W + D deterministically from (master_seed, index)."""
    n = params.n
    rng = _rng_for(master_seed, index)
    sigma_n = math.sqrt(params.sigma_n2)
    s_n = math.sqrt(params.s_n2)
    n_off = n * (n - 1) // 2
    off = params.entry_law.sample_offdiag(rng, n_off) * sigma_n
    diag = params.entry_law.sample_diag(rng, n).real * s_n

    dtype = np.complex128 if params.entry_law.is_complex else np.float64
    w = np.zeros((n, n), dtype=dtype)
    iu = np.triu_indices(n, k=1)
    w[iu] = off.astype(dtype)
    w[(iu[1], iu[0])] = np.conj(off).astype(dtype)
    w[np.diag_indices(n)] = diag + params.deformation
    return WignerSample(
        matrix=w,
        seed_path=(int(master_seed), int(index)),
        params_hash=params.digest(),
        params=params,
    )


def choose_delta(n: int) -> float:
    """Default truncation schedule 1/log(n): slower than any power of n."""
    if n < 2:
        raise ParameterError("choose_delta requires n >= 2")
    return 1.0 / math.log(n)


def truncate_center_homogenize(smp: WignerSample, delta_n: float) -> WignerSample:
    """Truncate entries at delta_n, recenter and restore the variances.

    The truncated mean and variance come from the entry law analytically,
    never from the sample. When truncation provably does nothing (law support
    inside the level, zero mean, exact variance) the sample is returned
    unchanged.
    """
    if delta_n <= 0:
        raise ParameterError("delta_n must be positive")
    params = smp.params
    sigma_n = math.sqrt(params.sigma_n2)
    s_n = math.sqrt(params.s_n2)
    off_mean, off_var = params.entry_law.truncated_offdiag(sigma_n, delta_n)
    diag_mean, diag_var = params.entry_law.truncated_diag(s_n, delta_n)
    if off_var <= 0.0 or diag_var <= 0.0:
        raise DegenerateTruncationError(f"truncated variance vanished at delta={delta_n}")

    w = smp.matrix - np.diag(params.deformation)
    off_scale = sigma_n / math.sqrt(off_var)
    diag_scale = s_n / math.sqrt(diag_var)
    # snap rescalings that are 1 up to rounding so the no-op case is exact
    if abs(off_scale - 1.0) < 5e-16:
        off_scale = 1.0
    if abs(diag_scale - 1.0) < 5e-16:
        diag_scale = 1.0
    if (
        off_mean == 0.0
        and diag_mean == 0.0
        and off_scale == 1.0
        and diag_scale == 1.0
        and float(np.max(np.abs(w))) <= delta_n
    ):
        return smp

    mean_off = off_mean if params.entry_law.is_complex else off_mean.real
    hat = np.where(np.abs(w) <= delta_n, w, w.dtype.type(0))
    out = (hat - mean_off) * off_scale
    diag = (np.real(np.diag(hat)) - diag_mean) * diag_scale
    out[np.diag_indices(smp.n)] = diag + params.deformation
    # exact Hermitian symmetrization of the off-diagonal part
    iu = np.triu_indices(smp.n, k=1)
    out[(iu[1], iu[0])] = np.conj(out[iu])
    return WignerSample(
        matrix=out,
        seed_path=smp.seed_path,
        params_hash=smp.params_hash,
        params=params,
    )
