"""Time-dependent generators A(t) = -i H(t) and their bounded approximations."""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import LowerBoundViolated, NearSingularResolvent
from .fock import FockOperator, symmetrized

YOSIDA = "yosida"
SPECTRAL_CUTOFF = "spectral_cutoff"
EXACT = "exact"


class TimeDependentGenerator:
    """Hermitian family t -> H(t) with a read-through eigendecomposition cache.

    ``provider`` returns a dense hermitian matrix. ``t_support`` is the closed
    time interval outside which H vanishes identically (None: nowhere known to
    vanish). The cache is guarded by a lock; concurrent fills are idempotent.
    """

    def __init__(self, provider: Callable[[float], np.ndarray], dim: int, label: str = "H",
                 t_support: Optional[tuple] = None, vanishes_outside: bool = False,
                 cache_size: int = 64):
        self._provider = provider
        self.dim = dim
        self.label = label
        self.t_support = t_support
        self.vanishes_outside = vanishes_outside
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    def __call__(self, t: float) -> np.ndarray:
        if self.vanishes_outside and not self._inside(t):
            return np.zeros((self.dim, self.dim), dtype=complex)
        return np.asarray(self._provider(float(t)), dtype=complex)

    def _inside(self, t):
        return self.t_support is not None and self.t_support[0] <= t <= self.t_support[1]

    def is_zero(self, t: float) -> bool:
        if self.vanishes_outside and not self._inside(t):
            return True
        return not np.any(self(t))

    def operator(self, t: float) -> FockOperator:
        return symmetrized(self(t), f"{self.label}({t:g})")

    def skew(self, t: float) -> np.ndarray:
        return -1j * self(t)

    def eigh(self, t: float, H: Optional[np.ndarray] = None):
        """Eigendecomposition of H(t); pass ``H`` when it is already evaluated."""
        key = float(t)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        if H is None:
            H = self(t)
        decomposition = np.linalg.eigh(0.5 * (H + H.conj().T))
        if self._cache_size:
            with self._lock:
                self._cache[key] = decomposition
                while len(self._cache) > self._cache_size:
                    self._cache.popitem(last=False)
        return decomposition

    def spectral_radius(self, t: float) -> float:
        if self.is_zero(t):
            return 0.0
        return float(np.max(np.abs(self.eigh(t)[0])))

    @classmethod
    def constant(cls, H, label="H"):
        H = np.array(H, dtype=complex)
        return cls(lambda t: H, H.shape[0], label)

    @classmethod
    def from_interaction(cls, assembler, H0=None, label="H0+V"):
        """H(t) = H0 + V(t; g) (or V alone when ``H0`` is None)."""
        if H0 is None:
            return cls(assembler.hermitian_matrix, assembler.dim, "V",
                       assembler.support, vanishes_outside=True)
        H0 = np.asarray(H0, dtype=complex)
        return cls(lambda t: H0 + assembler.hermitian_matrix(t), assembler.dim, label)


@dataclass(frozen=True)
class ApproximationScheme:
    kind: str = SPECTRAL_CUTOFF
    level: float = np.inf

    def __post_init__(self):
        if self.kind not in (YOSIDA, SPECTRAL_CUTOFF, EXACT):
            raise ValueError(f"unknown approximation kind {self.kind!r}")
        if not self.level > 0:
            raise ValueError("approximation level must be positive")

    def generator_eigenvalues(self, h: np.ndarray) -> np.ndarray:
        """Eigenvalues of A_n(t) given the eigenvalues h of H(t)."""
        h = np.asarray(h, dtype=float)
        if self.kind == EXACT or np.isinf(self.level):
            return -1j * h
        n = self.level
        if self.kind == SPECTRAL_CUTOFF:
            return -1j * np.clip(h, -n, n)
        return n * (-1j * h) / (n + 1j * h)


@dataclass(frozen=True)
class StabilityReport:
    M: float
    omega: float
    lam: float
    norms: tuple
    bounds: tuple
    passed: bool
    offending_prefix: Optional[int] = None


def resolvent(A, lam: complex, residual_tol: float = 1e-10) -> np.ndarray:
    """R(lam, A) = (lam - A)^-1 by LU solve with an explicit residual check."""
    A = np.asarray(A, dtype=complex)
    dim = A.shape[0]
    eye = np.eye(dim, dtype=complex)
    shifted = lam * eye - A
    scale = max(float(np.linalg.norm(A, 2)), 1.0)
    smin = float(np.linalg.svd(shifted, compute_uv=False)[-1]) if dim else 1.0
    if smin < 1e-10 * scale:
        raise NearSingularResolvent(f"lambda={lam} within {smin:.3e} of the spectrum")
    R = np.linalg.solve(shifted, eye)
    residual = float(np.linalg.norm(shifted @ R - eye, 2))
    if residual > residual_tol:
        raise NearSingularResolvent(f"resolvent residual {residual:.3e} exceeds {residual_tol}")
    return R


def yosida_approx(A, n: float) -> FockOperator:
    """A_n = n A R(n, A)."""
    A = np.asarray(A, dtype=complex)
    return FockOperator(n * A @ resolvent(A, n), False, f"yosida[{n:g}]")


def spectral_cutoff_approx(H, n: float) -> FockOperator:
    """Clip the spectrum of hermitian H to [-n, n] in its own eigenbasis."""
    H = np.asarray(H, dtype=complex)
    h, Q = np.linalg.eigh(0.5 * (H + H.conj().T))
    if np.all(np.abs(h) <= n):
        return FockOperator(H.copy(), True, f"cutoff[{n:g}]")
    out = (Q * np.clip(h, -n, n)) @ Q.conj().T
    return symmetrized(out, f"cutoff[{n:g}]")


def kato_stability_check(gen: TimeDependentGenerator, times: Sequence[float], lam: float,
                         M: float, omega: float, slack: float = 1e-9) -> StabilityReport:
    """||R(lam, A(t_k)) ... R(lam, A(t_1))|| <= M (lam - omega)^-k for every prefix k."""
    if not lam > omega:
        raise ValueError("Kato stability needs lam > omega")
    if list(times) != sorted(times):
        raise ValueError("times must be ordered")
    prod = np.eye(gen.dim, dtype=complex)
    norms, bounds = [], []
    offending = None
    for k, t in enumerate(times, start=1):
        prod = resolvent(gen.skew(t), lam) @ prod
        norms.append(float(np.linalg.norm(prod, 2)))
        bounds.append(M * (lam - omega) ** (-k))
        if offending is None and norms[-1] > bounds[-1] + slack:
            offending = k
    return StabilityReport(M, omega, lam, tuple(norms), tuple(bounds), offending is None,
                           offending)


@dataclass(frozen=True)
class SohrReport:
    beta: float
    k: float
    times: tuple
    probe_min: float
    form_min: float
    worst_time: float
    derivative_error: float
    tol: float
    passed: bool
    per_time: tuple = field(default=(), repr=False)


def _probe_vectors(dim, n_random, seed):
    rng = np.random.default_rng(seed)
    rand = rng.normal(size=(dim, n_random)) + 1j * rng.normal(size=(dim, n_random))
    rand /= np.linalg.norm(rand, axis=0)
    return np.hstack([np.eye(dim, dtype=complex), rand])


def sohr_condition_check(gen: TimeDependentGenerator, beta: float, k: float, interval,
                         dt: Optional[float] = None, n_times: int = 41, n_random: int = 16,
                         seed: int = 0, tol: float = 1e-8) -> SohrReport:
    """Evaluate 1/2 d/dt (x, (beta + H(t))^-1 x) + k (x, (beta + H(t))^-1 x).

    The derivative is a central difference with one Richardson halving; the
    reported minimum is taken over probe vectors (basis + seeded random) and
    over the exact form minimum (lowest eigenvalue of k R + R'/2).
    """
    a, b = interval
    if dt is None:
        dt = 1e-4 * (b - a)
    times = np.linspace(a, b, n_times)
    probes = _probe_vectors(gen.dim, n_random, seed)
    eye = np.eye(gen.dim, dtype=complex)

    def inv(t):
        H = gen(t)
        H = 0.5 * (H + H.conj().T)
        low = float(np.linalg.eigvalsh(H)[0])
        if low < 1.0 - beta - 1e-12:
            raise LowerBoundViolated(
                f"beta + H({t:g}) has lowest eigenvalue {beta + low:.6g} < 1")
        return np.linalg.solve(beta * eye + H, eye)

    per_time = []
    probe_min = form_min = np.inf
    worst_time = float(times[0])
    deriv_err = 0.0
    for t in times:
        R = inv(t)
        d1 = (inv(t + dt) - inv(t - dt)) / (2 * dt)
        d2 = (inv(t + dt / 2) - inv(t - dt / 2)) / dt
        dR = (4 * d2 - d1) / 3
        dR = 0.5 * (dR + dR.conj().T)
        form = k * R + 0.5 * dR
        form = 0.5 * (form + form.conj().T)
        values = np.real(np.sum(probes.conj() * (form @ probes), axis=0))
        pmin = float(values.min())
        fmin = float(np.linalg.eigvalsh(form)[0])
        err = 0.5 * float(np.max(np.abs(dR - d2)))
        deriv_err = max(deriv_err, err)
        per_time.append((float(t), pmin, fmin))
        if min(pmin, fmin) < min(probe_min, form_min):
            worst_time = float(t)
        probe_min = min(probe_min, pmin)
        form_min = min(form_min, fmin)
    passed = min(probe_min, form_min) >= -tol
    return SohrReport(beta, k, tuple(float(t) for t in times), probe_min, form_min,
                      worst_time, deriv_err, tol, passed, tuple(per_time))


def dirac_picture(gen: TimeDependentGenerator, H0) -> TimeDependentGenerator:
    """t -> e^{i t H0} V(t) e^{-i t H0} for a time-independent hermitian H0."""
    H0 = np.asarray(H0, dtype=complex)
    if np.count_nonzero(H0 - np.diag(np.diag(H0))) == 0:
        energies = np.real(np.diag(H0))
        gaps = energies[:, None] - energies[None, :]

        def provider(t):
            V = gen(t)
            if not np.any(V):
                return V
            return np.exp(1j * t * gaps) * V
    else:
        e, Q = np.linalg.eigh(H0)
        gaps = e[:, None] - e[None, :]

        def provider(t):
            V = gen(t)
            if not np.any(V):
                return V
            return Q @ (np.exp(1j * t * gaps) * (Q.conj().T @ V @ Q)) @ Q.conj().T

    return TimeDependentGenerator(provider, gen.dim, f"{gen.label}^D", gen.t_support,
                                  gen.vanishes_outside)
