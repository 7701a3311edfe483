"""Truncated bosonic Fock space on a periodic box.

Momenta are k_j = 2*pi*j/L for j = -K..K. The Fock space is cut off at a
total particle number ``n_max``; creation operators map the top layer to
zero, and annihilators are their exact adjoints.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (BoundViolated, DimensionCapExceeded, GridMismatch,
                     ModeOutOfRange, OffLatticePosition)

DEFAULT_DIMENSION_CAP = 20000
DIMENSION_CAP_ENV = "SCATLAB_DIM_CAP"


def dimension_cap() -> int:
    value = os.environ.get(DIMENSION_CAP_ENV)
    return int(value) if value else DEFAULT_DIMENSION_CAP


@dataclass(frozen=True)
class TruncationParams:
    mass: float = 1.0
    box_length: float = 2 * math.pi
    mode_cutoff: int = 1
    n_max: int = 4
    x_points: int = 16
    dimension_cap: Optional[int] = None

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if self.mode_cutoff < 0:
            raise ValueError("mode_cutoff must be nonnegative")
        if self.n_max < 0:
            raise ValueError("n_max must be nonnegative")
        if self.x_points < 1:
            raise ValueError("x_points must be positive")

    @property
    def n_modes(self) -> int:
        return 2 * self.mode_cutoff + 1

    @property
    def mode_labels(self) -> np.ndarray:
        return np.arange(-self.mode_cutoff, self.mode_cutoff + 1)

    @property
    def momenta(self) -> np.ndarray:
        return 2 * math.pi * self.mode_labels / self.box_length

    @property
    def dispersion(self) -> np.ndarray:
        """mu(k_j) = sqrt(k_j^2 + m^2)."""
        return np.sqrt(self.momenta ** 2 + self.mass ** 2)

    @property
    def dx(self) -> float:
        return self.box_length / self.x_points

    @property
    def lattice(self) -> np.ndarray:
        return np.arange(self.x_points) * self.dx

    @property
    def field_weights(self) -> np.ndarray:
        """(2 L mu_j)^(-1/2), the mode amplitudes of the box field."""
        return 1.0 / np.sqrt(2 * self.box_length * self.dispersion)

    @property
    def dimension(self) -> int:
        return math.comb(self.n_modes + self.n_max, self.n_max)

    @property
    def cap(self) -> int:
        return self.dimension_cap if self.dimension_cap is not None else dimension_cap()

    def c_trunc(self) -> float:
        """<Omega|phi(x)^2|Omega> = sum_j 1/(2 L mu_j)."""
        return float(np.sum(self.field_weights ** 2))

    def mode_index(self, j: int) -> int:
        if not -self.mode_cutoff <= j <= self.mode_cutoff:
            raise ModeOutOfRange(f"mode {j} outside -{self.mode_cutoff}..{self.mode_cutoff}")
        return j + self.mode_cutoff

    def lattice_index(self, x: float) -> int:
        m = x / self.dx
        mi = int(round(m))
        if abs(m - mi) > 1e-9:
            raise OffLatticePosition(f"x={x} is not a multiple of dx={self.dx}")
        return mi % self.x_points


def _compositions(total: int, parts: int):
    """Occupation vectors of length ``parts`` summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class OccupationBasis:
    """Graded-lexicographic basis of occupation vectors (n_{-K}, ..., n_K).

    States are ordered by total particle number, then lexicographically, so the
    vacuum is state 0 and every matrix is reproducible bit for bit.
    """

    def __init__(self, n_modes: int, n_max: int):
        self.n_modes = n_modes
        self.n_max = n_max
        states = [s for n in range(n_max + 1) for s in _compositions(n, n_modes)]
        self.states = np.array(states, dtype=np.int64).reshape(len(states), n_modes)
        self.index = {s: i for i, s in enumerate(states)}
        self.states.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.dim

    @cached_property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)

    @cached_property
    def creators(self) -> tuple:
        """Dense truncated a_j^dagger for every mode index (0..M-1)."""
        ops = []
        for mode in range(self.n_modes):
            op = np.zeros((self.dim, self.dim), dtype=complex)
            for i, state in enumerate(self.states):
                if self.totals[i] >= self.n_max:
                    continue
                target = list(state)
                target[mode] += 1
                op[self.index[tuple(target)], i] = math.sqrt(target[mode])
            op.setflags(write=False)
            ops.append(op)
        return tuple(ops)

    @cached_property
    def annihilators(self) -> tuple:
        ops = []
        for c in self.creators:
            a = c.conj().T.copy()
            a.setflags(write=False)
            ops.append(a)
        return tuple(ops)

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(np.int64(self.n_modes).tobytes())
        h.update(np.int64(self.n_max).tobytes())
        h.update(np.ascontiguousarray(self.states, dtype="<i8").tobytes())
        return h.hexdigest()

    def state_index(self, occupation: Sequence[int]) -> int:
        return self.index[tuple(int(n) for n in occupation)]

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v


def build_basis(params: TruncationParams) -> OccupationBasis:
    dim = params.dimension
    if dim > params.cap:
        raise DimensionCapExceeded(f"basis dimension {dim} exceeds cap {params.cap}")
    return OccupationBasis(params.n_modes, params.n_max)


@dataclass(frozen=True)
class FockOperator:
    matrix: np.ndarray
    hermitian: bool = False
    label: str = ""
    deviation: float = 0.0  # hermiticity defect before symmetrization

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def check_hermitian(self) -> bool:
        tol = 1e-12 * (1.0 + float(np.max(np.abs(self.matrix), initial=0.0)))
        return self.hermiticity_defect() <= tol


def symmetrized(matrix: np.ndarray, label: str) -> FockOperator:
    defect = float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0))
    herm = 0.5 * (matrix + matrix.conj().T)
    return FockOperator(herm, True, label, defect)


def creation_op(params: TruncationParams, basis: OccupationBasis, j: int) -> FockOperator:
    return FockOperator(basis.creators[params.mode_index(j)].copy(), False, f"a+[{j}]")


def annihilation_op(params: TruncationParams, basis: OccupationBasis, j: int) -> FockOperator:
    return FockOperator(basis.annihilators[params.mode_index(j)].copy(), False, f"a[{j}]")


def number_op(basis: OccupationBasis) -> FockOperator:
    return FockOperator(np.diag(basis.totals.astype(complex)), True, "N")


def free_hamiltonian(params: TruncationParams, basis: OccupationBasis) -> FockOperator:
    energies = basis.states @ params.dispersion
    return FockOperator(np.diag(energies.astype(complex)), True, "H0")


def free_energies(params: TruncationParams, basis: OccupationBasis) -> np.ndarray:
    """Diagonal of H0 as a real vector."""
    return basis.states @ params.dispersion


def total_momentum(params: TruncationParams, basis: OccupationBasis) -> np.ndarray:
    return basis.states @ params.momenta


def translation_unitary(params: TruncationParams, basis: OccupationBasis,
                        shift: float) -> np.ndarray:
    """exp(-i P a) with P = sum_j k_j n_j; conjugation shifts phi(x) to phi(x + a)."""
    return np.diag(np.exp(-1j * shift * total_momentum(params, basis)))


def _field_parts(params, basis, x, field_cutoff=None):
    """Creation part C(x) = sum_j c_j e^{-i k_j x} a_j^dagger of the field.

    ``field_cutoff`` drops modes with |j| above it (H0 keeps all modes).
    """
    phases = params.field_weights * np.exp(-1j * params.momenta * x)
    if field_cutoff is not None:
        phases = np.where(np.abs(params.mode_labels) <= field_cutoff, phases, 0.0)
    creation = np.zeros((basis.dim, basis.dim), dtype=complex)
    for c, op in zip(phases, basis.creators):
        creation += c * op
    return creation


def field_op(params: TruncationParams, basis: OccupationBasis, x: float) -> FockOperator:
    params.lattice_index(x)
    creation = _field_parts(params, basis, x)
    return symmetrized(creation + creation.conj().T, f"phi({x:g})")


def _normal_ordered_power(creation: np.ndarray, p: int) -> np.ndarray:
    """sum_r C(p, r) C^r (C^dagger)^(p-r): creators left, no contractions."""
    dim = creation.shape[0]
    powers = [np.eye(dim, dtype=complex)]
    for _ in range(p):
        powers.append(powers[-1] @ creation)
    out = np.zeros((dim, dim), dtype=complex)
    for r in range(p + 1):
        out += math.comb(p, r) * (powers[r] @ powers[p - r].conj().T)
    return out


def wick_power(params: TruncationParams, basis: OccupationBasis, p: int,
               x: float) -> FockOperator:
    if p < 0:
        raise ValueError("Wick power order must be nonnegative")
    params.lattice_index(x)
    creation = _field_parts(params, basis, x)
    return symmetrized(_normal_ordered_power(creation, p), f":phi^{p}({x:g}):")


def wick_subtraction_formula(params: TruncationParams, basis: OccupationBasis, p: int,
                             x: float) -> np.ndarray:
    """sum_j (-1)^j p!/((p-2j)! j! 2^j) c^j phi^(p-2j) with truncated field matrices.

    Agrees with the normal-ordered construction on columns with total particle
    number <= n_max - p; differs at the truncation boundary.
    """
    phi = field_op(params, basis, x).matrix
    c = params.c_trunc()
    out = np.zeros_like(phi)
    for j in range(p // 2 + 1):
        coeff = (-1) ** j * math.factorial(p) / (
            math.factorial(p - 2 * j) * math.factorial(j) * 2 ** j)
        out += coeff * c ** j * np.linalg.matrix_power(phi, p - 2 * j)
    return out


def as_polynomial(P) -> dict:
    """Normalize polynomial coefficients to {power: float}, dropping zeros.

    Accepts a mapping (keys may be strings, as in JSON) or a sequence indexed by
    power.
    """
    if isinstance(P, Mapping):
        items = ((int(k), float(v)) for k, v in P.items())
    else:
        items = enumerate(float(v) for v in P)
    return {p: a for p, a in sorted(items) if a != 0.0}


@lru_cache(maxsize=32)
def lattice_stack(params: TruncationParams, basis: OccupationBasis, coeffs: tuple,
                  field_cutoff: Optional[int] = None) -> np.ndarray:
    """:P(phi(x_m)): for every lattice point, shape (x_points, dim, dim)."""
    xs = params.lattice
    stack = np.zeros((len(xs), basis.dim, basis.dim), dtype=complex)
    for m, x in enumerate(xs):
        creation = _field_parts(params, basis, x, field_cutoff)
        for p, a in coeffs:
            stack[m] += a * _normal_ordered_power(creation, p)
    stack.setflags(write=False)
    return stack


def _hull(supports):
    sups = [s for s in supports if s is not None]
    if not sups:
        return None
    return (min(s[0] for s in sups), max(s[1] for s in sups))


class InteractionAssembler:
    """Precomputes :P(phi(x_m)): on the lattice so that

        V(t; g) = dx * sum_m g(t, x_m) :P(phi(x_m)):

    costs one tensor contraction per time. ``g`` is a single localization
    function or a mapping ``{power: function}`` for per-power couplings.
    """

    def __init__(self, params: TruncationParams, basis: OccupationBasis, g, P,
                 field_cutoff: Optional[int] = None):
        self.params = params
        self.basis = basis
        self.poly = as_polynomial(P)
        if isinstance(g, Mapping):
            couplings = {int(p): f for p, f in g.items()}
        else:
            couplings = {p: g for p in self.poly}
        for p in self.poly:
            if p not in couplings:
                raise GridMismatch(f"no coupling function for power {p}")
        self.couplings = couplings
        for f in couplings.values():
            if not math.isclose(f.box_length, params.box_length, rel_tol=1e-12):
                raise GridMismatch(
                    f"coupling box {f.box_length} differs from truncation box {params.box_length}")
        # group powers that share a coupling function
        groups = {}
        for p, a in self.poly.items():
            groups.setdefault(id(couplings[p]), [couplings[p], {}])[1][p] = a
        self.support = _hull(f.t_support for f in couplings.values())
        self._stacks = [(func, lattice_stack(params, basis, tuple(sorted(coeffs.items())),
                                             field_cutoff))
                        for func, coeffs in groups.values()]

    def stack_norms(self) -> list:
        """Spectral norm of :P(phi(x)): per coupling group (x-independent by translation)."""
        return [float(np.linalg.norm(stack[0], 2)) for _, stack in self._stacks]

    def spectral_bound(self, t) -> np.ndarray:
        """Upper bound sum_groups ||W|| dx sum_m |g(t, x_m)| on ||V(t)||."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        xs = self.params.lattice
        out = np.zeros(t.shape)
        for norm, (func, _) in zip(self.stack_norms(), self._stacks):
            vals = np.abs(func(t[:, None], xs[None, :]))
            out += norm * self.params.dx * vals.sum(axis=1)
        return out

    @property
    def dim(self) -> int:
        return self.basis.dim

    def weights(self, t: float):
        xs = self.params.lattice
        return [self.params.dx * np.asarray(func(t, xs), dtype=float)
                for func, _ in self._stacks]

    def raw(self, t: float) -> np.ndarray:
        out = np.zeros((self.basis.dim, self.basis.dim), dtype=complex)
        if self.support is None or not (self.support[0] <= t <= self.support[1]):
            return out
        for w, (_, stack) in zip(self.weights(t), self._stacks):
            if np.any(w != 0.0):
                out += np.tensordot(w, stack, axes=1)
        return out

    def __call__(self, t: float) -> FockOperator:
        return symmetrized(self.raw(t), f"V({t:g})")

    def hermitian_matrix(self, t: float) -> np.ndarray:
        v = self.raw(t)
        return 0.5 * (v + v.conj().T)


def interaction_op(params: TruncationParams, basis: OccupationBasis, g, P,
                   t: float) -> FockOperator:
    return InteractionAssembler(params, basis, g, P)(t)


@dataclass(frozen=True)
class WickKernel:
    """Kernel of sum w(j_1..j_m; l_1..l_n) a+_{j_1}..a+_{j_m} a_{l_1}..a_{l_n}.

    ``values`` has one axis per argument (creators first); mode indices run
    over 0..M-1.
    """

    values: np.ndarray
    n_create: int

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def n_annihilate(self) -> int:
        return self.order - self.n_create

    def symmetry_defect(self) -> float:
        """Largest deviation from symmetry within the creator and annihilator groups."""
        w = self.values
        dev = 0.0
        groups = [tuple(range(self.n_create)), tuple(range(self.n_create, self.order))]
        for group in groups:
            for perm in itertools.permutations(group):
                axes = list(range(self.order))
                for src, dst in zip(group, perm):
                    axes[src] = dst
                dev = max(dev, float(np.max(np.abs(w - np.transpose(w, axes)), initial=0.0)))
        return dev

    @property
    def symmetric(self) -> bool:
        return self.symmetry_defect() <= 1e-12

    def symmetrized(self) -> "WickKernel":
        w = self.values
        groups = [tuple(range(self.n_create)), tuple(range(self.n_create, self.order))]
        for group in groups:
            perms = list(itertools.permutations(group))
            acc = np.zeros_like(w)
            for perm in perms:
                axes = list(range(self.order))
                for src, dst in zip(group, perm):
                    axes[src] = dst
                acc += np.transpose(w, axes)
            w = acc / len(perms)
        return WickKernel(w, self.n_create)


def kernel_l2_norm(kernel: WickKernel) -> float:
    return float(np.sqrt(np.sum(np.abs(kernel.values) ** 2)))


def wick_monomial(basis: OccupationBasis, kernel: WickKernel) -> np.ndarray:
    """Dense truncated matrix of the Wick monomial with the given kernel."""
    m, n = kernel.n_create, kernel.n_annihilate
    dim = basis.dim
    modes = range(basis.n_modes)

    def products(ops, count):
        out = []
        for idx in itertools.product(modes, repeat=count):
            acc = np.eye(dim, dtype=complex)
            for i in idx:
                acc = acc @ ops[i]
            out.append(acc)
        return np.array(out).reshape(-1, dim, dim)

    cre = products(basis.creators, m)
    ann = products(basis.annihilators, n)
    w = kernel.values.reshape(cre.shape[0], ann.shape[0])
    right = np.tensordot(w, ann, axes=1)
    return np.einsum("jab,jbc->ac", cre, right)


def interaction_kernels(params: TruncationParams, g_samples: np.ndarray, p: int) -> list:
    """Wick kernels of dx * sum_m g(x_m) :phi(x_m)^p:, one per split r + s = p.

    The kernel with r creators is C(p, r) prod c_j prod c_l ghat(sum k_j - sum k_l),
    ghat(q) = dx * sum_m g(x_m) exp(-i q x_m).
    """
    g_samples = np.asarray(g_samples, dtype=float)
    if g_samples.shape != (params.x_points,):
        raise GridMismatch("g samples must match the spatial lattice")
    labels = params.mode_labels
    weights = params.field_weights
    xs = params.lattice
    kernels = []
    for r in range(p + 1):
        shape = (params.n_modes,) * p
        values = np.zeros(shape, dtype=complex)
        for idx in itertools.product(range(params.n_modes), repeat=p):
            q_label = sum(labels[i] for i in idx[:r]) - sum(labels[i] for i in idx[r:])
            q = 2 * math.pi * q_label / params.box_length
            ghat = params.dx * np.sum(g_samples * np.exp(-1j * q * xs))
            values[idx] = math.comb(p, r) * np.prod(weights[list(idx)]) * ghat
        kernels.append(WickKernel(values, r))
    return kernels


@dataclass(frozen=True)
class NBoundReport:
    measured: float
    bound: float
    weights: tuple
    passed: bool


def number_weighted_norm(basis: OccupationBasis, W: np.ndarray, left: float,
                         right: float) -> float:
    """Spectral norm of (N+1)^(-left/2) W (N+1)^(-right/2)."""
    n1 = basis.totals + 1.0
    scaled = (n1 ** (-left / 2))[:, None] * W * (n1 ** (-right / 2))[None, :]
    return float(np.linalg.norm(scaled, 2))


def verify_n_bound(basis: OccupationBasis, W, kernel: WickKernel,
                   m: Optional[float] = None, n: Optional[float] = None,
                   rel_slack: float = 1e-10) -> NBoundReport:
    """Check ||(N+1)^(-m/2) W (N+1)^(-n/2)|| <= ||w||_2.

    Defaults to m = creators, n = annihilators of the kernel. Larger weights
    only tighten the left-hand side.
    """
    matrix = W.matrix if isinstance(W, FockOperator) else np.asarray(W)
    m = kernel.n_create if m is None else m
    n = kernel.n_annihilate if n is None else n
    measured = number_weighted_norm(basis, matrix, m, n)
    bound = kernel_l2_norm(kernel)
    passed = measured <= bound * (1 + rel_slack) + 1e-14
    if not passed:
        raise BoundViolated(f"N-bound violated: {measured!r} > {bound!r}")
    return NBoundReport(measured, bound, (m, n), passed)


@dataclass(frozen=True)
class SemiboundednessRow:
    mode_cutoff: int
    dimension: int
    c_trunc: float
    lowest: float


@dataclass(frozen=True)
class SemiboundednessReport:
    lowest: float
    rows: tuple

    @property
    def monotone(self) -> bool:
        lows = [r.lowest for r in self.rows]
        return all(b <= a + 1e-12 for a, b in zip(lows, lows[1:]))


def lowest_eigenvalue(params, basis, g, P, t: float) -> float:
    H = free_hamiltonian(params, basis).matrix
    if as_polynomial(P):
        H = H + InteractionAssembler(params, basis, g, P).hermitian_matrix(t)
    return float(np.linalg.eigvalsh(H)[0])


def semiboundedness_report(params: TruncationParams, g, P, t: float,
                           cutoffs: Sequence[int] = ()) -> SemiboundednessReport:
    """Lowest eigenvalue of H0 + V(t; g) at ``params`` and across a sweep of K.

    Diagnostic only: the growth of the lower bound with K is reported, not
    asserted.
    """
    rows = []
    for K in sorted(set(cutoffs) | {params.mode_cutoff}):
        p = replace(params, mode_cutoff=K)
        basis = build_basis(p)
        rows.append(SemiboundednessRow(K, basis.dim, p.c_trunc(),
                                       lowest_eigenvalue(p, basis, g, P, t)))
    base = next(r for r in rows if r.mode_cutoff == params.mode_cutoff)
    return SemiboundednessReport(base.lowest, tuple(rows))
