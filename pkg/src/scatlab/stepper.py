"""Propagators U(t, s) on a time grid.

Three constructions are provided: the Picard fixed point of the integral
equation, products of exponentials (left-point or midpoint), and products of
implicit resolvent steps. All act on a :class:`TimeDependentGenerator` and
return a :class:`PropagatorTable` holding U(t_i, t_0).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, linalg

from .errors import NoConvergence, NoSaturation, SupportOverlap
from .generators import (EXACT, SPECTRAL_CUTOFF, YOSIDA, ApproximationScheme,
                         TimeDependentGenerator)

LEFT = "left"
MIDPOINT = "midpoint"


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @classmethod
    def with_step(cls, t_start: float, dt: float, n_steps: int) -> "TimeGrid":
        return cls(t_start, t_start + n_steps * dt, n_steps)

    @classmethod
    def covering(cls, t_start: float, t_end: float, dt: float) -> "TimeGrid":
        """Grid from t_start with step close to ``dt`` whose end is >= t_end."""
        n = max(1, int(math.ceil((t_end - t_start) / dt - 1e-9)))
        return cls(t_start, t_start + n * dt, n)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def node(self, i: int) -> float:
        return self.t_start + i * self.dt

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_steps + 1) * self.dt

    def sample_time(self, i: int, rule: str) -> float:
        """Time at which step i (t_i -> t_{i+1}) samples the generator."""
        if rule == LEFT:
            return self.node(i)
        if rule == MIDPOINT:
            return self.t_start + (i + 0.5) * self.dt
        raise ValueError(f"unknown rule {rule!r}")

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)


def _stored_indices(n_steps: int, store_every: int) -> np.ndarray:
    idx = list(range(0, n_steps + 1, store_every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.array(idx)


@dataclass
class PropagatorTable:
    """U(t_i, t_0) at stored grid indices; U(t_i, t_j) by U_i U_j^-1."""

    scheme: str
    grid: TimeGrid
    indices: np.ndarray
    matrices: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._pos = {int(i): k for k, i in enumerate(self.indices)}

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]

    def at(self, i: int) -> np.ndarray:
        """U(t_i, t_0)."""
        return self.matrices[self._pos[int(i)]]

    def U(self, i: int, j: int = 0) -> np.ndarray:
        """U(t_i, t_j) for stored grid indices."""
        if i == j:
            return np.eye(self.dim, dtype=complex)
        Ui = self.at(i)
        if j == 0:
            return Ui.copy()
        Uj = self.at(j)
        if self.meta.get("unitary"):
            return Ui @ Uj.conj().T
        return np.linalg.solve(Uj.T, Ui.T).T

    def unitarity_deviation(self) -> np.ndarray:
        eye = np.eye(self.dim)
        return np.array([float(np.max(np.abs(U.conj().T @ U - eye))) for U in self.matrices])

    def max_norm(self) -> float:
        return max(float(np.linalg.norm(U, 2)) for U in self.matrices)

    def composition_defect(self, i: int, j: int, k: int) -> float:
        """||U(t_i,t_j) U(t_j,t_k) - U(t_i,t_k)||_max."""
        return float(np.max(np.abs(self.U(i, j) @ self.U(j, k) - self.U(i, k))))

    def weighted(self, log_weight: Callable[[np.ndarray], np.ndarray]) -> "PropagatorTable":
        """Table of e^{w(t) - w(t0)} U(t, t0): a scalar, time-dependent damping."""
        times = self.grid.nodes[self.indices]
        w = np.asarray(log_weight(times), dtype=float) - float(log_weight(self.grid.t_start))
        meta = dict(self.meta, unitary=False, weighted=True)
        return PropagatorTable(self.scheme, self.grid, self.indices.copy(),
                               self.matrices * np.exp(w)[:, None, None], meta)

    def scaled(self, omega: float) -> "PropagatorTable":
        """Table of e^{omega (t - t0)} U(t, t0) (no longer unitary)."""
        times = self.grid.nodes[self.indices] - self.grid.t_start
        mats = self.matrices * np.exp(omega * times)[:, None, None]
        meta = dict(self.meta, unitary=False, scaled=omega)
        return PropagatorTable(self.scheme, self.grid, self.indices.copy(), mats, meta)


def _exp_step(gen: TimeDependentGenerator, t: float, dt: float,
              scheme: Optional[ApproximationScheme] = None) -> np.ndarray:
    H = gen(t)
    if not np.any(H):
        return np.eye(gen.dim, dtype=complex)
    h, Q = gen.eigh(t, H)
    a = (scheme or ApproximationScheme(EXACT)).generator_eigenvalues(h)
    return (Q * np.exp(dt * a)) @ Q.conj().T


def _sweep(step: Callable[[int], np.ndarray], grid: TimeGrid, dim: int,
           store_every: int) -> tuple:
    indices = _stored_indices(grid.n_steps, store_every)
    wanted = set(int(i) for i in indices)
    U = np.eye(dim, dtype=complex)
    stored = [U.copy()]
    for i in range(grid.n_steps):
        U = step(i) @ U
        if i + 1 in wanted:
            stored.append(U.copy())
    return indices, np.array(stored)


def exp_product_propagator(gen: TimeDependentGenerator, grid: TimeGrid, rule: str = MIDPOINT,
                           scheme: Optional[ApproximationScheme] = None,
                           store_every: int = 1) -> PropagatorTable:
    """U = prod_j exp(dt A_n(t_j*)), exponentials by spectral decomposition."""
    dt = grid.dt
    indices, mats = _sweep(lambda i: _exp_step(gen, grid.sample_time(i, rule), dt, scheme),
                           grid, gen.dim, store_every)
    unitary = scheme is None or scheme.kind != YOSIDA
    return PropagatorTable(f"exp-{rule}", grid, indices, mats, {"unitary": unitary})


def implicit_resolvent_propagator(gen: TimeDependentGenerator, grid: TimeGrid,
                                  store_every: int = 1) -> PropagatorTable:
    """W = C_n ... C_1 with C_v = (1 - dt A(t_v))^-1 at the right node t_v."""
    dt = grid.dt
    eye = np.eye(gen.dim, dtype=complex)

    def step(i):
        H = gen(grid.node(i + 1))
        if not np.any(H):
            return eye
        return np.linalg.solve(eye + 1j * dt * H, eye)

    indices, mats = _sweep(step, grid, gen.dim, store_every)
    return PropagatorTable("implicit-resolvent", grid, indices, mats, {"unitary": False})


def picard_propagator(gen: TimeDependentGenerator, grid: TimeGrid, tol: float = 1e-12,
                      max_iter: int = 200) -> PropagatorTable:
    """Fixed point of u(t) = 1 + int_s^t A(r) u(r) dr with the trapezoid rule.

    Iterates on all columns at once; stops when the sup-norm change is <= tol.
    """
    dt = grid.dt
    nodes = grid.nodes
    A = np.array([gen.skew(t) for t in nodes])
    eye = np.eye(gen.dim, dtype=complex)
    u = np.broadcast_to(eye, A.shape).copy()
    norm_a = max(float(np.linalg.norm(a, 2)) for a in A)
    length = grid.t_end - grid.t_start
    for it in range(1, max_iter + 1):
        F = A @ u
        increments = 0.5 * dt * (F[:-1] + F[1:])
        new = np.empty_like(u)
        new[0] = eye
        new[1:] = eye + np.cumsum(increments, axis=0)
        change = float(np.max(np.abs(new - u)))
        u = new
        if change <= tol:
            certificate = (norm_a * length) ** it / math.factorial(it)
            return PropagatorTable("picard", grid, np.arange(grid.n_steps + 1), u,
                                   {"unitary": False, "iterations": it,
                                    "certificate": certificate, "last_change": change})
    raise NoConvergence(f"Picard iteration did not reach tol={tol} in {max_iter} iterations")


@dataclass
class ApproximationDiagnostics:
    kind: str
    levels: tuple
    to_top: tuple              # max_node ||U_l - U_top|| per level
    successive: np.ndarray     # (L-1, stored nodes) ||U_{l+1} - U_l||
    residuals: tuple           # discrete L2 norm of -u' + A_n u per level
    saturation_level: Optional[float]
    max_spectral_radius: float
    indices: np.ndarray

    def rows(self):
        """(level, node index, deviation) rows for the successive differences."""
        for l, level in enumerate(self.levels[1:]):
            for k, node in enumerate(self.indices):
                yield level, int(node), float(self.successive[l, k])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "node", "deviation"])
            for level, node, dev in self.rows():
                w.writerow([repr(float(level)), node, repr(float(dev))])


def approximative_solution(gen: TimeDependentGenerator, grid: TimeGrid,
                           kind: str = SPECTRAL_CUTOFF, levels: Sequence[float] = (),
                           rule: str = MIDPOINT, store_every: int = 1,
                           saturation_tol: float = 1e-12, yosida_tol: float = 1e-9,
                           require_saturation: bool = True):
    """Propagators of the bounded approximations A_n for each level n.

    All levels share one sweep (one eigendecomposition per sampled time). The
    returned table is the top level. The saturation level is the smallest level
    from which every higher level agrees with the top one: exactly (relative
    ``saturation_tol``) for the spectral cutoff, to ``yosida_tol`` for Yosida.
    With ``require_saturation=False`` an unsaturated ladder is reported (level
    None) instead of raising.
    """
    levels = tuple(float(n) for n in levels)
    if not levels:
        raise ValueError("at least one approximation level is required")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    schemes = [ApproximationScheme(kind, n) for n in levels]
    L = len(levels)
    dt = grid.dt
    dim = gen.dim
    indices = _stored_indices(grid.n_steps, store_every)
    wanted = set(int(i) for i in indices)
    eye = np.eye(dim, dtype=complex)
    U = [eye.copy() for _ in range(L)]
    stored = [[eye.copy()] for _ in range(L)]
    res_sq = np.zeros(L)
    rho = 0.0
    for i in range(grid.n_steps):
        t = grid.sample_time(i, rule)
        H = gen(t)
        zero = not np.any(H)
        if not zero:
            h, Q = gen.eigh(t, H)
            rho = max(rho, float(np.max(np.abs(h))))
        for l, sch in enumerate(schemes):
            old = U[l]
            if zero:
                new = old
                res = (new - old) / dt
            else:
                a = sch.generator_eigenvalues(h)
                new = ((Q * np.exp(dt * a)) @ Q.conj().T) @ old
                An = (Q * a) @ Q.conj().T
                res = -(new - old) / dt + An @ (0.5 * (new + old))
            res_sq[l] += dt * float(np.sum(np.abs(res) ** 2))
            U[l] = new
            if i + 1 in wanted:
                stored[l].append(new.copy())
    mats = [np.array(s) for s in stored]
    top = mats[-1]
    to_top = tuple(float(np.max(np.abs(m - top))) for m in mats)
    successive = np.array([np.max(np.abs(mats[l + 1] - mats[l]), axis=(1, 2))
                           for l in range(L - 1)]).reshape(L - 1, len(indices))
    scale = max(1.0, float(np.max(np.abs(top))))
    tol = saturation_tol * scale if kind == SPECTRAL_CUTOFF else yosida_tol
    saturation = None
    if kind == SPECTRAL_CUTOFF:
        for l in range(L):
            if all(d <= tol for d in to_top[l:]):
                saturation = levels[l]
                break
        if L > 1 and to_top[-2] > tol:
            saturation = None
    else:
        # Yosida never saturates exactly: require the last successive change below tol
        if L > 1 and float(np.max(successive[-1])) <= tol:
            for l in range(L - 1):
                if float(np.max(successive[l:])) <= tol:
                    saturation = levels[l]
                    break
    if saturation is None and require_saturation:
        raise NoSaturation(
            f"{kind} levels {levels} did not stabilize (max spectral radius {rho:.6g})")
    table = PropagatorTable(f"approx-{kind}-{rule}", grid, indices, top,
                            {"unitary": kind == SPECTRAL_CUTOFF, "level": levels[-1]})
    diag = ApproximationDiagnostics(kind, levels, to_top, successive,
                                    tuple(float(np.sqrt(r)) for r in res_sq),
                                    saturation, rho, indices)
    return table, diag


def max_spectral_radius(gen: TimeDependentGenerator, grid: TimeGrid,
                        rule: str = MIDPOINT) -> float:
    return max(gen.spectral_radius(grid.sample_time(i, rule)) for i in range(grid.n_steps))


# ---------------------------------------------------------------------------
# analytic oracles


@dataclass(frozen=True)
class Window:
    """Scalar weight function with a declared closed support [lo, hi]."""

    func: Callable[[float], float]
    lo: float
    hi: float

    def __call__(self, t):
        return self.func(t)

    def integral(self, a: float, b: float) -> float:
        lo, hi = max(a, self.lo), min(b, self.hi)
        if hi <= lo:
            return 0.0
        value, _ = integrate.quad(self.func, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        return value


def goldstein_generator(S, L, T, phi: Window, eta: Window, psi: Window) -> TimeDependentGenerator:
    """H(t) = phi(t) S + eta(t) L + psi(t) T."""
    S, L, T = (np.asarray(M, dtype=complex) for M in (S, L, T))

    def provider(t):
        return float(phi(t)) * S + float(eta(t)) * L + float(psi(t)) * T

    return TimeDependentGenerator(provider, S.shape[0], "goldstein")


def goldstein_oracle(S, L, T, phi: Window, eta: Window, psi: Window, t: float, y,
                     t0: float = 0.0) -> np.ndarray:
    """Piecewise exact solution of u' = -i H(t) u, u(t0) = y, for disjoint windows.

    Within each window the family commutes, so
    u(t) = e^{-i Psi(t) T} e^{-i Eta(t) L} e^{-i Phi(t) S} y
    with Phi, Eta, Psi the running integrals of the weights from t0.
    """
    windows = [phi, eta, psi]
    for w in windows:
        if w.hi < w.lo:
            raise SupportOverlap("window with empty support")
    for a, b in zip(windows, windows[1:]):
        if not a.hi <= b.lo:
            raise SupportOverlap(f"supports [{a.lo},{a.hi}] and [{b.lo},{b.hi}] overlap "
                                 "or are out of order")
    y = np.asarray(y, dtype=complex)
    out = y
    for w, M in zip(windows, (S, L, T)):
        theta = w.integral(t0, t)
        if theta != 0.0:
            out = linalg.expm(-1j * theta * np.asarray(M, dtype=complex)) @ out
    return out


def duhamel_difference(H_a, H_b, r: float, quad_steps: int = 200):
    """Both sides of e^{-r Ha} = e^{-r Hb} - int_0^r e^{-s Hb} (Ha - Hb) e^{-(r-s) Ha} ds.

    The integral uses composite Simpson with ``quad_steps`` (even) panels;
    semigroups come from hermitian spectral decompositions.
    """
    if quad_steps % 2:
        quad_steps += 1
    H_a = np.asarray(H_a, dtype=complex)
    H_b = np.asarray(H_b, dtype=complex)
    ea, Qa = np.linalg.eigh(0.5 * (H_a + H_a.conj().T))
    eb, Qb = np.linalg.eigh(0.5 * (H_b + H_b.conj().T))

    def sg(e, Q, s):
        return (Q * np.exp(-s * e)) @ Q.conj().T

    lhs = sg(ea, Qa, r)
    diff = H_a - H_b
    s = np.linspace(0.0, r, quad_steps + 1)
    weights = np.ones(quad_steps + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= (r / quad_steps) / 3.0
    integral = np.zeros_like(lhs)
    for si, wi in zip(s, weights):
        integral += wi * (sg(eb, Qb, si) @ diff @ sg(ea, Qa, r - si))
    rhs = sg(eb, Qb, r) - integral
    return lhs, rhs
