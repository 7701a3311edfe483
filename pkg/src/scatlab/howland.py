"""Evolution semigroups on discretized L^2(I, X).

Functions f on I = (a, b] are sampled at the grid nodes t_1..t_n of a
propagator table (t_0 = a is excluded) and stored as arrays of shape
(n, d). The inner product is dt * sum_i <f_i, g_i>.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ShiftNotGridAligned
from .generators import TimeDependentGenerator
from .stepper import PropagatorTable


@dataclass(frozen=True)
class FunctionSpaceGrid:
    t_start: float
    dt: float
    n_t: int
    dim: int

    @classmethod
    def from_table(cls, table: PropagatorTable) -> "FunctionSpaceGrid":
        if len(table.indices) != table.grid.n_steps + 1:
            raise ValueError("evolution semigroups need a table stored at every node")
        return cls(table.grid.t_start, table.grid.dt, table.grid.n_steps, table.dim)

    @property
    def times(self) -> np.ndarray:
        """Sample times t_1..t_n in (a, b]."""
        return self.t_start + np.arange(1, self.n_t + 1) * self.dt

    def inner(self, f, g) -> complex:
        return complex(self.dt * np.sum(np.conj(f) * g))

    def norm(self, f) -> float:
        return float(np.sqrt(self.dt * np.sum(np.abs(f) ** 2)))

    def shift_steps(self, sigma: float) -> int:
        k = sigma / self.dt
        ki = int(round(k))
        if sigma < 0 or abs(k - ki) > 1e-9:
            raise ShiftNotGridAligned(f"shift {sigma} is not a nonnegative multiple of {self.dt}")
        return ki

    def random_function(self, rng) -> np.ndarray:
        return rng.normal(size=(self.n_t, self.dim)) + 1j * rng.normal(size=(self.n_t, self.dim))


class EvolutionSemigroupOp:
    """(T(sigma) f)(t) = U(t, t - sigma) f(t - sigma), zero when t - sigma is not in I."""

    def __init__(self, table: PropagatorTable, grid: FunctionSpaceGrid, steps: int):
        self.table = table
        self.grid = grid
        self.steps = steps
        self._blocks = None

    @property
    def sigma(self) -> float:
        return self.steps * self.grid.dt

    def blocks(self) -> list:
        """U(t_i, t_{i-k}) for i = k+1..n (node indices in the table)."""
        if self._blocks is None:
            k = self.steps
            self._blocks = [self.table.U(i, i - k) for i in range(k + 1, self.grid.n_t + 1)]
        return self._blocks

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        out = np.zeros_like(f, dtype=complex)
        k = self.steps
        for m, block in enumerate(self.blocks()):
            # output row i = k+1+m (1-based) takes input row i-k = m+1
            out[k + m] = block @ f[m]
        return out

    __call__ = apply

    def matrix(self) -> np.ndarray:
        n, d = self.grid.n_t, self.grid.dim
        M = np.zeros((n * d, n * d), dtype=complex)
        k = self.steps
        for m, block in enumerate(self.blocks()):
            r, c = (k + m) * d, m * d
            M[r:r + d, c:c + d] = block
        return M


def lift(table: PropagatorTable, grid: FunctionSpaceGrid, sigma: float) -> EvolutionSemigroupOp:
    return EvolutionSemigroupOp(table, grid, grid.shift_steps(sigma))


def translation(grid: FunctionSpaceGrid, values: np.ndarray, steps: int) -> np.ndarray:
    """Right translation (tau_sigma phi)(t) = phi(t - sigma), zero-filled."""
    values = np.asarray(values)
    out = np.zeros_like(values)
    if steps < grid.n_t:
        out[steps:] = values[:grid.n_t - steps]
    return out


@dataclass(frozen=True)
class NormReport:
    operator_norm: float
    sup_norm: float
    relative_gap: float


def semigroup_norm_check(op: EvolutionSemigroupOp) -> NormReport:
    """Operator norm of T(sigma) on weighted L^2 against sup ||U(s, s - sigma)||."""
    blocks = op.blocks()
    if not blocks:
        return NormReport(0.0, 0.0, 0.0)
    sup = max(float(np.linalg.norm(b, 2)) for b in blocks)
    # equal weights on every node, so the weighted norm is the plain spectral norm
    opnorm = float(np.linalg.norm(op.matrix(), 2))
    return NormReport(opnorm, sup, abs(opnorm - sup) / max(sup, 1e-300))


@dataclass(frozen=True)
class CommutationReport:
    deviation: float
    passed: bool


def multiplication_commutation_check(op, grid: FunctionSpaceGrid, phi: np.ndarray,
                                     probes: int = 4, seed: int = 0,
                                     tol: float = 1e-12) -> CommutationReport:
    """max ||T(sigma)(phi f) - (tau_sigma phi) T(sigma) f|| over random probes.

    ``op`` is anything callable on arrays of shape (n_t, d) with a ``steps``
    attribute giving the shift.
    """
    rng = np.random.default_rng(seed)
    phi = np.asarray(phi)
    shifted = translation(grid, phi, op.steps)
    dev = 0.0
    for _ in range(probes):
        f = grid.random_function(rng)
        lhs = op(phi[:, None] * f)
        rhs = shifted[:, None] * op(f)
        dev = max(dev, grid.norm(lhs - rhs) / max(grid.norm(f), 1e-300))
    return CommutationReport(dev, dev <= tol)


class SemigroupResolvent:
    """(R f)(t) = sum_{s <= t} dt e^{-lam (t - s)} U(t, s) f(s).

    Evaluated by the recursion R_i = dt f_i + e^{-lam dt} U(t_i, t_{i-1}) R_{i-1}.
    """

    def __init__(self, table: PropagatorTable, grid: FunctionSpaceGrid, lam: complex):
        self.table = table
        self.grid = grid
        self.lam = lam
        self._steps = [table.U(i, i - 1) for i in range(2, grid.n_t + 1)]

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=complex)
        out = np.empty_like(f)
        decay = np.exp(-self.lam * self.grid.dt)
        acc = self.grid.dt * f[0]
        out[0] = acc
        for m, step in enumerate(self._steps, start=1):
            acc = self.grid.dt * f[m] + decay * (step @ acc)
            out[m] = acc
        return out

    __call__ = apply

    def matrix(self) -> np.ndarray:
        n, d = self.grid.n_t, self.grid.dim
        cols = []
        for c in range(n * d):
            e = np.zeros(n * d, dtype=complex)
            e[c] = 1.0
            cols.append(self.apply(e.reshape(n, d)).ravel())
        return np.array(cols).T


def semigroup_resolvent(table: PropagatorTable, grid: FunctionSpaceGrid,
                        lam: complex) -> SemigroupResolvent:
    return SemigroupResolvent(table, grid, lam)


def discrete_generator(grid: FunctionSpaceGrid, gen: Optional[TimeDependentGenerator]):
    """G_d u = -(u_i - u_{i-1})/dt + A(t_i) u_i with u_0 = 0 (upwind, zero inflow)."""
    times = grid.times
    A = None if gen is None else [gen.skew(t) for t in times]

    def apply(u):
        u = np.asarray(u, dtype=complex)
        prev = np.vstack([np.zeros((1, grid.dim), dtype=complex), u[:-1]])
        out = -(u - prev) / grid.dt
        if A is not None:
            out = out + np.einsum("nij,nj->ni", np.array(A), u)
        return out

    return apply


@dataclass(frozen=True)
class ResolventReport:
    lam: complex
    residual: float
    resolvent_norm: Optional[float]


def generator_consistency_check(table: PropagatorTable, gen: Optional[TimeDependentGenerator],
                                lam: complex, f: Optional[np.ndarray] = None, seed: int = 0,
                                with_norm: bool = False) -> ResolventReport:
    """Relative residual ||(lam - G_d) R f - f|| / ||f||; O(dt) for smooth f."""
    grid = FunctionSpaceGrid.from_table(table)
    R = SemigroupResolvent(table, grid, lam)
    if f is None:
        t = grid.times
        span = t[-1] - grid.t_start
        rng = np.random.default_rng(seed)
        coeff = rng.normal(size=(3, grid.dim)) + 1j * rng.normal(size=(3, grid.dim))
        f = (np.sin(np.pi * (t - grid.t_start) / span)[:, None] * coeff[0]
             + np.cos(2 * np.pi * (t - grid.t_start) / span)[:, None] * coeff[1]
             + ((t - grid.t_start) / span)[:, None] * coeff[2])
    G = discrete_generator(grid, gen)
    Rf = R(f)
    residual = grid.norm(lam * Rf - G(Rf) - f) / grid.norm(f)
    norm = float(np.linalg.norm(R.matrix(), 2)) if with_norm else None
    return ResolventReport(lam, residual, norm)


def orbit_residual(table: PropagatorTable, gen: TimeDependentGenerator, x) -> float:
    """Discrete L^2 norm of G_0 u = -u' + A u on u(t) = U(t, a) x (upwind difference)."""
    grid = FunctionSpaceGrid.from_table(table)
    x = np.asarray(x, dtype=complex)
    u = np.array([table.at(i) @ x for i in range(grid.n_t + 1)])
    r = -(u[1:] - u[:-1]) / grid.dt + np.array([gen.skew(t) @ ui
                                                  for t, ui in zip(grid.times, u[1:])])
    return grid.norm(r)


def weak_solution_defect(table: PropagatorTable, gen: TimeDependentGenerator, x,
                         test: Callable[[np.ndarray], np.ndarray],
                         test_dot: Callable[[np.ndarray], np.ndarray]) -> float:
    """|sum dt [(f', u) + (A* f, u)] + (f(a), x)| for a test function with f(b) = 0.

    ``test`` and ``test_dot`` map an array of times to arrays of shape (n, d).
    The sum is a trapezoid rule over all nodes t_0..t_n.
    """
    grid = table.grid
    t = grid.nodes
    x = np.asarray(x, dtype=complex)
    u = np.array([table.at(i) @ x for i in range(grid.n_steps + 1)])
    f = np.asarray(test(t), dtype=complex)
    fd = np.asarray(test_dot(t), dtype=complex)
    Astar_f = np.array([gen.skew(ti).conj().T @ fi for ti, fi in zip(t, f)])
    integrand = np.sum(np.conj(fd) * u, axis=1) + np.sum(np.conj(Astar_f) * u, axis=1)
    w = np.full(len(t), grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    total = np.sum(w * integrand) + np.vdot(f[0], x)
    return float(abs(total))
