"""Registry of numerical checks runnable from a config.

A check is a function ``check(ctx, **params)`` returning a list of
``Outcome`` tuples; the runner turns them into report records. Parameters in
the config override the defaults in the function signature. Every check is
deterministic given the config seed.
"""
from __future__ import annotations

import inspect
import math
import zlib
from dataclasses import replace
from typing import Callable, NamedTuple

import numpy as np

from ..errors import ConfigInvalid
from ..fock import (InteractionAssembler, WickKernel, build_basis, free_hamiltonian,
                    interaction_kernels, kernel_l2_norm, number_weighted_norm,
                    semiboundedness_report, wick_monomial, wick_power,
                    wick_subtraction_formula)
from ..generators import (SPECTRAL_CUTOFF, YOSIDA, TimeDependentGenerator,
                          kato_stability_check, sohr_condition_check,
                          spectral_cutoff_approx, yosida_approx)
from ..howland import (FunctionSpaceGrid, generator_consistency_check, lift,
                       multiplication_commutation_check, semigroup_norm_check)
from ..scattering import (ScatteringModel, StepperConfig, _anchored_bracket,
                          causal_factorization_check, covariance_check, dyson_series,
                          local_s_operator, locality_commutators, quadratic_comparison)
from ..stepper import (MIDPOINT, TimeGrid, Window, approximative_solution,
                       duhamel_difference, exp_product_propagator, goldstein_generator,
                       goldstein_oracle, implicit_resolvent_propagator,
                       picard_propagator)
from ..testfunctions import bump, mollifier
from .report import GE, INFO, LE, RANGE


class Outcome(NamedTuple):
    name: str
    value: float
    tolerance: object
    comparison: str
    details: dict = {}


REGISTRY: dict = {}


def register(name: str):
    def wrap(func: Callable):
        REGISTRY[name] = func
        return func
    return wrap


def defaults(name: str) -> dict:
    sig = inspect.signature(REGISTRY[name])
    return {k: p.default for k, p in list(sig.parameters.items())[1:]}


def fitted_slope(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(xs) < 2 or np.any(xs <= 0) or np.any(ys <= 0):
        return float("nan")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def tol_cf(dt: float, dim: int) -> float:
    """Default factorization tolerance: 1e-8 at dt = 1e-3 and dim <= 64.

    Shrinks like dt^2 (the scheme error it guards against) and grows like
    sqrt(dim) with the roundoff of dense products; floored at 1e-11.
    """
    return max(1e-8 * min(1.0, (dt / 1e-3) ** 2) * max(1.0, math.sqrt(dim / 64)), 1e-11)


def _random_hermitian(rng, dim, scale=1.0):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = 0.5 * (A + A.conj().T)
    return scale * H / np.linalg.norm(H, 2)


class RunContext:
    """Lazy model and S(g) caches shared by the checks of one run."""

    def __init__(self, config):
        self.config = config
        self.params = config.truncation
        self._model = None
        self._s_cache = {}

    @property
    def model(self) -> ScatteringModel:
        if self._model is None:
            self._model = ScatteringModel(self.params, self.config.polynomial)
        return self._model

    def rng(self, name: str, salt: int = 0):
        return np.random.default_rng([self.config.seed, zlib.crc32(name.encode()), salt])

    def function(self, name: str):
        return self.config.function(name)

    def stepper(self, dt=None, **kw) -> StepperConfig:
        cfg = self.config.stepper
        if dt is not None:
            cfg = replace(cfg, dt=float(dt))
        return replace(cfg, **kw) if kw else cfg

    def s_operator(self, name: str):
        if name not in self._s_cache:
            self._s_cache[name] = local_s_operator(self.model, self.function(name),
                                                   self.stepper())
        return self._s_cache[name]

    def centre_time(self, g) -> float:
        sup = g.t_support
        return 0.0 if sup is None else 0.5 * (sup[0] + sup[1])


def _peak_amplitude(ctx, fname):
    amps = [abs(b["amplitude"]) for b in ctx.config.functions[fname]]
    return max(amps) if amps else 0.0


# ---------------------------------------------------------------------------
# fock


@register("fock_ccr")
def check_fock_ccr(ctx, tol=1e-12):
    """[a_i, a+_j] = delta_ij on states below the particle cap."""
    basis = build_basis(ctx.params)
    low = basis.totals <= ctx.params.n_max - 1
    eye = np.eye(basis.dim)
    dev = 0.0
    for i, a in enumerate(basis.annihilators):
        for j, c in enumerate(basis.creators):
            comm = a @ c - c @ a - (i == j) * eye
            dev = max(dev, float(np.max(np.abs(comm[:, low]))))
    return [Outcome("fock_ccr", dev, tol, LE, {"dim": basis.dim})]


@register("fock_hermiticity")
def check_fock_hermiticity(ctx, g="g", tol=1e-12, samples=5):
    """Wick powers and V(t; g) are hermitian before symmetrization."""
    model = ctx.model
    x0 = float(ctx.params.lattice[0])
    dev = 0.0
    for p in sorted(set(model.P) | {1, 2}):
        dev = max(dev, wick_power(ctx.params, model.basis, p, x0).deviation)
    func = ctx.function(g)
    sup = func.t_support
    if sup is not None:
        asm = model.assembler(func)
        for t in np.linspace(sup[0], sup[1], samples + 2)[1:-1]:
            V = asm.raw(float(t))
            scale = max(1.0, float(np.max(np.abs(V))))
            dev = max(dev, float(np.max(np.abs(V - V.conj().T))) / scale)
    return [Outcome("fock_hermiticity", dev, tol, LE)]


@register("wick_consistency")
def check_wick_consistency(ctx, tol=1e-11):
    """Normal-ordered construction equals the Hermite subtraction formula below the cap."""
    model = ctx.model
    x0 = float(ctx.params.lattice[0])
    dev = 0.0
    for p in sorted(model.P):
        if p > ctx.params.n_max:
            continue
        cols = model.basis.totals <= ctx.params.n_max - p
        a = wick_power(ctx.params, model.basis, p, x0).matrix
        b = wick_subtraction_formula(ctx.params, model.basis, p, x0)
        dev = max(dev, float(np.max(np.abs((a - b)[:, cols]), initial=0.0)))
    return [Outcome("wick_consistency", dev, tol, LE)]


@register("translation_covariance_V")
def check_translation_covariance_v(ctx, g="g", shift_steps=3, tol=1e-12):
    """V(t; g shifted by a lattice vector) = T(a) V(t; g) T(a)^dagger."""
    model = ctx.model
    func = ctx.function(g)
    t = ctx.centre_time(func)
    a = shift_steps * ctx.params.dx
    V = model.assembler(func).hermitian_matrix(t)
    Vs = model.assembler(func.shifted(0.0, a)).hermitian_matrix(t)
    T = model.spatial_translation(a)
    dev = float(np.linalg.norm(Vs - T @ V @ T.conj().T, 2))
    return [Outcome("translation_covariance_V", dev, tol, LE, {"shift": a})]


@register("n_bound")
def check_n_bound(ctx, powers=(2, 4), samples=10, rel_slack=1e-10):
    """max ||(N+1)^-m/2 W (N+1)^-n/2|| / ||w||_2 over seeded kernels and all splits.

    Both the split weights (m, n) and the symmetric weights (p/2, p/2) are
    measured; kernels are random complex tensors and lattice interaction kernels.
    """
    params = ctx.params
    basis = build_basis(params)
    M = params.n_modes
    worst = 0.0
    count = 0
    for p in powers:
        rng = ctx.rng("n_bound", p)
        for s in range(samples):
            g_samples = rng.normal(size=params.x_points)
            lattice = interaction_kernels(params, g_samples, p)
            for r in range(p + 1):
                values = rng.normal(size=(M,) * p) + 1j * rng.normal(size=(M,) * p)
                for kernel in (WickKernel(values, r), lattice[r]):
                    W = wick_monomial(basis, kernel)
                    bound = kernel_l2_norm(kernel)
                    for left, right in ((r, p - r), (p / 2, p / 2)):
                        ratio = number_weighted_norm(basis, W, left, right) / bound
                        worst = max(worst, ratio)
                        count += 1
    return [Outcome("n_bound", worst, 1.0 + rel_slack, LE, {"evaluations": count})]


@register("semiboundedness")
def check_semiboundedness(ctx, g="g", cutoffs=(1, 2)):
    """Lowest eigenvalue of H0 + V(t; g) across mode cutoffs (diagnostic)."""
    func = ctx.function(g)
    t = ctx.centre_time(func)
    rep = semiboundedness_report(ctx.params, func, ctx.model.P, t, cutoffs)
    rows = {f"K={r.mode_cutoff}": r.lowest for r in rep.rows}
    return [Outcome("semiboundedness", rep.lowest, None, INFO,
                    dict(rows, monotone=rep.monotone))]


# ---------------------------------------------------------------------------
# generators


@register("kato_stability")
def check_kato_stability(ctx, g="g", lam=1.0, samples=20, slack=1e-9):
    """Resolvent products of -i(H0 + V(t)) obey the (M, omega) = (1, 0) bound."""
    func = ctx.function(g)
    gen = ctx.model.schroedinger_generator(func)
    sup = func.t_support or (0.0, 1.0)
    times = list(np.linspace(sup[0], sup[1], samples))
    rep = kato_stability_check(gen, times, lam, 1.0, 0.0, slack)
    ratio = max(n / b for n, b in zip(rep.norms, rep.bounds))
    return [Outcome("kato_stability", ratio, 1.0 + slack, LE,
                    {"offending_prefix": rep.offending_prefix})]


def _sohr_beta(gen, times):
    low = min(float(np.linalg.eigvalsh(gen(t))[0]) for t in times)
    return 1.0 - min(low, 0.0)


@register("sohr_condition")
def check_sohr_condition(ctx, g="g", k=0.0, tol=1e-8):
    """Time-independent H = H0 + V(t_c): the condition holds with k = 0."""
    func = ctx.function(g)
    t_c = ctx.centre_time(func)
    H = ctx.model.schroedinger_generator(func)(t_c)
    gen = TimeDependentGenerator.constant(H, "H(t_c)")
    beta = _sohr_beta(gen, [0.0])
    rep = sohr_condition_check(gen, beta, k, (0.0, 1.0), n_times=11, seed=ctx.config.seed,
                               tol=tol)
    return [Outcome("sohr_condition", min(rep.probe_min, rep.form_min), -tol, GE,
                    {"beta": beta, "k": k})]


@register("sohr_negative_control")
def check_sohr_negative_control(ctx, amplitude=1.0, radius_t=0.3, k=0.5, tol=1e-8):
    """A compactly supported bump switched on quickly violates the condition.

    Passes when the checker reports a violation (minimum below -tol).
    """
    params = ctx.params
    func = bump((1.0, 0.5 * params.box_length), (radius_t, 0.25 * params.box_length),
                amplitude, params.box_length)
    gen = ctx.model.schroedinger_generator(func)
    interval = (1.0 - radius_t - 0.05, 1.0 + radius_t + 0.05)
    beta = _sohr_beta(gen, np.linspace(*interval, 41))
    rep = sohr_condition_check(gen, beta, k, interval, seed=ctx.config.seed, tol=tol)
    value = min(rep.probe_min, rep.form_min)
    return [Outcome("sohr_negative_control", value, -tol, LE,
                    {"worst_time": rep.worst_time, "beta": beta, "k": k})]


@register("approximation_convergence")
def check_approximation_convergence(ctx, g="g", levels=(1e2, 1e3, 1e4, 1e5), tol=1e-12):
    """||A_n - A|| for Yosida decays like 1/n; the spectral cutoff is exact once n >= rho."""
    func = ctx.function(g)
    H = ctx.model.schroedinger_generator(func)(ctx.centre_time(func))
    A = -1j * H
    errs = [float(np.linalg.norm(yosida_approx(A, n).matrix - A, 2)) for n in levels]
    slope = fitted_slope(levels, errs)
    rho = float(np.max(np.abs(np.linalg.eigvalsh(H))))
    cut = spectral_cutoff_approx(H, math.ceil(rho)).matrix
    exact = float(np.linalg.norm(cut - H, 2))
    return [Outcome("approximation_convergence_yosida", slope, [-1.2, -0.8], RANGE,
                    {"errors": errs}),
            Outcome("approximation_convergence_cutoff", exact, tol, LE, {"rho": rho})]


# ---------------------------------------------------------------------------
# stepper


@register("picard")
def check_picard(ctx, dim=4, dt=1e-4, t_end=1.0, tol=1e-8):
    """Picard iteration for H(t) = cos(t) H1 against expm(-i sin(t) H1)."""
    from scipy.linalg import expm

    H1 = _random_hermitian(ctx.rng("picard"), dim)
    gen = TimeDependentGenerator(lambda t: math.cos(t) * H1, dim, "cos(t) H1")
    grid = TimeGrid(0.0, t_end, int(round(t_end / dt)))
    table = picard_propagator(gen, grid)
    dev = float(np.linalg.norm(table.final - expm(-1j * math.sin(t_end) * H1), 2))
    return [Outcome("picard", dev, tol, LE, {"iterations": table.meta["iterations"]})]


def goldstein_windows():
    """Smooth weights supported inside [0, 1), (1, 2) and (2, 3)."""
    out = []
    for lo in (0.0, 1.0, 2.0):
        a, b = lo + 0.05, lo + 0.95
        c, r = 0.5 * (a + b), 0.5 * (b - a)
        out.append(Window(lambda t, c=c, r=r: float(mollifier((t - c) / r)), a, b))
    return out


def goldstein_deviation(rng, dim=4, dt=1e-3):
    S, L, T = (_random_hermitian(rng, dim, 2.0) for _ in range(3))
    phi, eta, psi = goldstein_windows()
    gen = goldstein_generator(S, L, T, phi, eta, psi)
    grid = TimeGrid(0.0, 3.0, int(round(3.0 / dt)))
    U = exp_product_propagator(gen, grid, MIDPOINT, store_every=grid.n_steps).final
    oracle = goldstein_oracle(S, L, T, phi, eta, psi, 3.0, np.eye(dim))
    return float(np.linalg.norm(U - oracle, 2))


@register("goldstein")
def check_goldstein(ctx, samples=3, dim=4, dt=1e-3, tol=1e-8):
    """Midpoint stepper against the piecewise-exponential solution for disjoint windows."""
    rng = ctx.rng("goldstein")
    devs = [goldstein_deviation(rng, dim, dt) for _ in range(samples)]
    return [Outcome("goldstein", max(devs), tol, LE, {"samples": samples})]


def scheme_errors(model, func, dts, refine=16):
    """Errors of the midpoint and implicit schemes against midpoint at min(dt)/refine."""
    gen = model.dirac_generator(func)
    dt_max = max(dts)
    sigma, tau = _anchored_bracket(func.t_support, dt_max, 0.25)

    def final(kind, dt):
        grid = TimeGrid(sigma, tau, int(round((tau - sigma) / dt)))
        if kind == "implicit":
            return implicit_resolvent_propagator(gen, grid, store_every=grid.n_steps).final
        return exp_product_propagator(gen, grid, MIDPOINT, store_every=grid.n_steps).final

    ref = final("midpoint", min(dts) / refine)
    mid = [float(np.linalg.norm(final("midpoint", dt) - ref, 2)) for dt in dts]
    imp = [float(np.linalg.norm(final("implicit", dt) - ref, 2)) for dt in dts]
    return mid, imp


@register("scheme_convergence")
def check_scheme_convergence(ctx, g="g", dts=(0.02, 0.01, 0.005), refine=16):
    """Fitted orders: midpoint product 2, implicit resolvent 1."""
    mid, imp = scheme_errors(ctx.model, ctx.function(g), dts, refine)
    return [Outcome("scheme_order_midpoint", fitted_slope(dts, mid), [1.8, 2.2], RANGE,
                    {"errors": mid}),
            Outcome("scheme_order_implicit", fitted_slope(dts, imp), [0.8, 1.2], RANGE,
                    {"errors": imp})]


def uniqueness_study(model, func, dt=2e-3, yosida_levels=None, margin=0.25):
    """Saturated cutoff and Yosida propagators of the Schroedinger-picture problem.

    Returns (deviation, saturation level, max spectral radius, diagnostics).
    """
    gen = model.schroedinger_generator(func)
    sigma, tau = _anchored_bracket(func.t_support, dt, margin)
    grid = TimeGrid(sigma, tau, int(round((tau - sigma) / dt)))
    asm = model.assembler(func)
    times = np.array([grid.sample_time(i, MIDPOINT) for i in range(grid.n_steps)])
    bound = float(np.max(model.energies)) + float(np.max(asm.spectral_bound(times)))
    cut_levels = tuple(float(n) for n in range(1, math.ceil(bound) + 3))
    if yosida_levels is None:
        yosida_levels = tuple(10.0 ** k for k in range(2, 14))
    cut, cdiag = approximative_solution(gen, grid, SPECTRAL_CUTOFF, cut_levels, MIDPOINT,
                                        store_every=grid.n_steps)
    yos, ydiag = approximative_solution(gen, grid, YOSIDA, yosida_levels, MIDPOINT,
                                        store_every=grid.n_steps)
    dev = float(np.linalg.norm(cut.final - yos.final, 2))
    return dev, cdiag.saturation_level, cdiag.max_spectral_radius, (cdiag, ydiag)


@register("approximative_uniqueness")
def check_approximative_uniqueness(ctx, g="g", dt=2e-3, tol=1e-8):
    """Yosida and spectral-cutoff approximations saturate to the same propagator."""
    dev, n_star, rho, (cdiag, ydiag) = uniqueness_study(ctx.model, ctx.function(g), dt)
    expected = math.ceil(rho)
    return [Outcome("approximative_uniqueness", dev, tol, LE,
                    {"yosida_saturation": ydiag.saturation_level}),
            Outcome("saturation_level", n_star, [expected - 1, expected + 1], RANGE,
                    {"rho": rho})]


@register("duhamel")
def check_duhamel(ctx, g="g", r=0.5, quad_steps=200, tol=1e-10):
    """Duhamel formula linking the K+1 Hamiltonian to the one with the field cut at K."""
    params = replace(ctx.params, mode_cutoff=ctx.params.mode_cutoff + 1)
    basis = build_basis(params)
    func = ctx.function(g)
    t = ctx.centre_time(func)
    H0 = free_hamiltonian(params, basis).matrix
    P = ctx.model.P
    Ha = H0 + InteractionAssembler(params, basis, func, P).hermitian_matrix(t)
    Hb = H0 + InteractionAssembler(params, basis, func, P,
                                   field_cutoff=ctx.params.mode_cutoff).hermitian_matrix(t)
    lhs, rhs = duhamel_difference(Ha, Hb, r, quad_steps)
    dev = float(np.linalg.norm(lhs - rhs, 2))
    return [Outcome("duhamel", dev, tol, LE,
                    {"difference_norm": float(np.linalg.norm(Ha - Hb, 2))})]


# ---------------------------------------------------------------------------
# howland


def _howland_table(ctx, g, dt):
    func = ctx.function(g)
    gen = ctx.model.dirac_generator(func)
    sigma, tau = _anchored_bracket(func.t_support, dt, 0.25)
    grid = TimeGrid(sigma, tau, int(round((tau - sigma) / dt)))
    return exp_product_propagator(gen, grid, MIDPOINT), gen


@register("howland_semigroup")
def check_howland_semigroup(ctx, g="g", dt=0.02, steps=(5, 10), probes=4, tol=1e-12):
    """T(s1) T(s2) = T(s1 + s2) for grid-aligned shifts."""
    table, _ = _howland_table(ctx, g, dt)
    fg = FunctionSpaceGrid.from_table(table)
    s1, s2 = steps
    T1, T2, T12 = (lift(table, fg, k * fg.dt) for k in (s1, s2, s1 + s2))
    rng = ctx.rng("howland_semigroup")
    dev = 0.0
    for _ in range(probes):
        f = fg.random_function(rng)
        dev = max(dev, fg.norm(T1(T2(f)) - T12(f)) / fg.norm(f))
    return [Outcome("howland_semigroup", dev, tol, LE)]


@register("howland_multiplication")
def check_howland_multiplication(ctx, g="g", dt=0.02, steps=7, tol=1e-12):
    """T(s) (phi f) = (phi shifted by s) T(s) f for scalar phi."""
    table, _ = _howland_table(ctx, g, dt)
    fg = FunctionSpaceGrid.from_table(table)
    op = lift(table, fg, steps * fg.dt)
    phi = np.sin(3.0 * fg.times) + 0.5 * np.cos(fg.times)
    rep = multiplication_commutation_check(op, fg, phi, seed=ctx.config.seed, tol=tol)
    return [Outcome("howland_multiplication", rep.deviation, tol, LE)]


@register("howland_resolvent")
def check_howland_resolvent(ctx, g="g", dt=0.02, lam=1.0):
    """Resolvent-generator residual is first order: it halves when dt halves."""
    res = []
    for h in (dt, dt / 2):
        table, gen = _howland_table(ctx, g, h)
        res.append(generator_consistency_check(table, gen, lam, seed=ctx.config.seed).residual)
    ratio = res[0] / res[1]
    return [Outcome("howland_resolvent", ratio, [1.6, 2.4], RANGE, {"residuals": res})]


@register("howland_norm")
def check_howland_norm(ctx, g="g", dt=0.05, steps=5, tol=1e-10):
    """||T(s)|| = sup_t ||U(t, t - s)|| for a damped, non-unitary family.

    The damping e^{-(t + 0.3 sin 3t)} makes the block norms time dependent. The
    discrete identity is exact; the continuum supremum is matched within O(dt).
    """
    table, _ = _howland_table(ctx, g, dt)

    def w(t):
        return -(t + 0.3 * np.sin(3.0 * t))

    damped = table.weighted(w)
    fg = FunctionSpaceGrid.from_table(damped)
    op = lift(damped, fg, steps * fg.dt)
    rep = semigroup_norm_check(op)
    s = steps * fg.dt
    t = np.linspace(fg.t_start + s, fg.times[-1], 20001)
    sup = float(np.max(np.exp(w(t) - w(t - s))))
    cont = abs(rep.operator_norm - sup)
    return [Outcome("howland_norm", rep.relative_gap, tol, LE,
                    {"operator_norm": rep.operator_norm}),
            Outcome("howland_norm_continuum", cont, dt, LE, {"continuum_sup": sup})]


# ---------------------------------------------------------------------------
# scattering


@register("unitarity")
def check_unitarity(ctx, g="g", tol=1e-10):
    S = ctx.s_operator(g)
    return [Outcome("unitarity", S.unitarity_deviation, tol, LE,
                    {"saturation_level": S.diagnostics.saturation_level
                     if S.diagnostics else None})]


@register("adjoint")
def check_adjoint(ctx, g="g", tol=1e-10):
    return [Outcome("adjoint", ctx.s_operator(g).adjoint_deviation, tol, LE)]


@register("free_identity")
def check_free_identity(ctx, g="g", tol=1e-14):
    """S(g) = 1 when g vanishes (or the polynomial is zero)."""
    model = ctx.model
    if not model.P:
        dev = 0.0
    else:
        S = ctx.s_operator(g).matrix
        dev = float(np.linalg.norm(S - np.eye(model.dim), 2))
    return [Outcome("free_identity", dev, tol, LE)]


@register("bracket_independence")
def check_bracket_independence(ctx, g="g", extra_steps=None, tol=1e-12):
    """S(g) does not depend on the bracket around supp_t g (default: widened by 1 each side)."""
    S = ctx.s_operator(g)
    func = ctx.function(g)
    cfg = ctx.stepper()
    if extra_steps is None:
        extra_steps = int(round(1.0 / cfg.dt))
    if func.t_support is None:
        return [Outcome("bracket_independence", 0.0, tol, LE)]
    pad = extra_steps * cfg.dt
    wide = local_s_operator(ctx.model, func, cfg, (S.bracket[0] - pad, S.bracket[1] + pad))
    dev = float(np.linalg.norm(wide.matrix - S.matrix, 2))
    return [Outcome("bracket_independence", dev, tol, LE)]


@register("causal_factorization")
def check_causal_factorization(ctx, f="f", h="h", g="g_early", dt=None, tol=None):
    """S(f+h+g) = S(f+h) S(h)^-1 S(h+g) for supp_t f later than supp_t g."""
    cfg = ctx.stepper(dt)
    tol = tol if tol is not None else tol_cf(cfg.dt, ctx.model.dim)
    res = causal_factorization_check(ctx.model, ctx.function(f), ctx.function(h),
                                     ctx.function(g), cfg, tol)
    return [Outcome("causal_factorization", res.value, tol, LE)]


@register("covariance_space")
def check_covariance_space(ctx, g="g", steps=3, tol=1e-10):
    a_x = steps * ctx.params.dx
    res = covariance_check(ctx.model, ctx.function(g), 0.0, a_x, ctx.stepper(), tol)
    return [Outcome("covariance_space", res.value, tol, LE, {"a_x": a_x})]


@register("covariance_time")
def check_covariance_time(ctx, g="g", steps=250, tol=None):
    cfg = ctx.stepper()
    tol = tol if tol is not None else tol_cf(cfg.dt, ctx.model.dim)
    a_t = steps * cfg.dt
    res = covariance_check(ctx.model, ctx.function(g), a_t, 0.0, cfg, tol)
    return [Outcome("covariance_time", res.value, tol, LE, {"a_t": a_t})]


@register("group_composition")
def check_group_composition(ctx, g="g", gap_steps=200, tol=None):
    """S(g1 + g2) = S(g2) S(g1) when a zero slice of the coupling separates g1 from g2."""
    cfg = ctx.stepper()
    tol = tol if tol is not None else tol_cf(cfg.dt, ctx.model.dim)
    g1 = ctx.function(g)
    sup = g1.t_support
    if sup is None:
        return [Outcome("group_composition", 0.0, tol, LE)]
    shift = math.ceil((sup[1] - sup[0]) / cfg.dt) * cfg.dt + gap_steps * cfg.dt
    g2 = g1.shifted(shift, 0.0)
    S = lambda u: local_s_operator(ctx.model, u, cfg).matrix  # noqa: E731
    dev = float(np.linalg.norm(S(g1 + g2) - S(g2) @ S(g1), 2))
    return [Outcome("group_composition", dev, tol, LE, {"shift": shift})]


def dyson_remainders(model, func, amplitudes, cfg, orders=(1, 2)):
    """||S(lam g) - S_k(lam g)|| for g normalized to unit peak amplitude."""
    out = {k: [] for k in orders}
    for lam in amplitudes:
        scaled = func.scaled(lam)
        S = local_s_operator(model, scaled, cfg)
        for k in orders:
            Sk = dyson_series(model, scaled, k, cfg, S.bracket)
            out[k].append(float(np.linalg.norm(S.matrix - Sk, 2)))
    return out


@register("dyson")
def check_dyson(ctx, g="g", amplitudes=(0.02, 0.04, 0.08)):
    """Dyson remainder slopes: >= 1.7 at order 1 and >= 2.7 at order 2."""
    peak = _peak_amplitude(ctx, g)
    if peak == 0.0:
        raise ConfigInvalid(f"$.functions.{g}", "dyson check needs a nonzero coupling")
    unit = ctx.function(g).scaled(1.0 / peak)
    rem = dyson_remainders(ctx.model, unit, amplitudes, ctx.stepper())
    return [Outcome("dyson_order1", fitted_slope(amplitudes, rem[1]), 1.7, GE,
                    {"remainders": rem[1]}),
            Outcome("dyson", fitted_slope(amplitudes, rem[2]), 2.7, GE,
                    {"remainders": rem[2]})]


def quadratic_errors(params, lam, n_max_values, center=1.0, radius=1.0, dt=4e-3,
                     levels=(10.0,)):
    """One-particle oracle deviations for P = phi^2 (coefficient lam / 2), v a time bump."""
    v = bump((center, 0.0), (radius, None), 1.0, params.box_length)
    out = []
    for n in n_max_values:
        p = replace(params, n_max=int(n))
        model = ScatteringModel(p, {2: 0.5 * lam})
        S = local_s_operator(model, v, StepperConfig(dt=dt, levels=tuple(levels)))
        cmp = quadratic_comparison(model, S, lambda t: float(v(t, 0.0)), lam)
        out.append(cmp)
    return out


@register("quadratic_oracle")
def check_quadratic_oracle(ctx, lam=0.1, n_max=(4, 8), dt=4e-3, tol=1e-6, min_ratio=4.0):
    """Fock-space S against the Bogoliubov mode equations; error shrinks with n_max."""
    res = quadratic_errors(ctx.params, lam, n_max, dt=dt)
    eps = [r["one_particle"] for r in res]
    ratio = eps[0] / eps[-1] if eps[-1] > 0 else float("inf")
    return [Outcome("quadratic_oracle", eps[-1], tol, LE,
                    {"eps": eps, "pair": [r["pair"] for r in res]}),
            Outcome("quadratic_oracle_ratio", ratio, min_ratio, GE)]


@register("locality")
def check_locality(ctx, g="g", separations=(0.5, 1.5, 2.5), amplitude=0.05, dt=1e-2):
    """||[S_g(f_d), S_g(h)]|| against spatial separation d (diagnostic only)."""
    params = ctx.params
    background = ctx.function(g)
    t_c = ctx.centre_time(background)
    x0 = 0.25 * params.box_length
    rx = 0.1 * params.box_length
    h = bump((t_c, x0), (0.3, rx), amplitude, params.box_length, label="h")

    def f_at(d):
        return bump((t_c, x0 + d), (0.3, rx), amplitude, params.box_length, label="f")

    rows = locality_commutators(ctx.model, background, f_at, h, separations, ctx.stepper(dt))
    return [Outcome("locality", rows[-1][1], None, INFO,
                    {f"d={d:g}": c for d, c in rows})]
