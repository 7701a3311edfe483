import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatlab.errors import (BoundViolated, DimensionCapExceeded, GridMismatch,
                            ModeOutOfRange, OffLatticePosition)
from scatlab.fock import (FockOperator, InteractionAssembler, OccupationBasis,
                          TruncationParams, WickKernel, annihilation_op, as_polynomial,
                          build_basis, creation_op, field_op, free_hamiltonian,
                          interaction_kernels, interaction_op, kernel_l2_norm,
                          number_op, number_weighted_norm, semiboundedness_report,
                          translation_unitary, verify_n_bound, wick_monomial, wick_power,
                          wick_subtraction_formula)
from scatlab.testfunctions import bump, from_callable, zero_function

TWO_PI = 2 * math.pi


def brute_force_states(M, n_max):
    return sorted((s for s in product(range(n_max + 1), repeat=M) if sum(s) <= n_max),
                  key=lambda s: (sum(s), s))


# -- basis -------------------------------------------------------------------


@pytest.mark.parametrize("M, n_max, dim", [(3, 2, 10), (1, 0, 1), (3, 4, 35)])
def test_basis_dimension_examples(M, n_max, dim):
    basis = OccupationBasis(M, n_max)
    assert basis.dim == dim
    assert [tuple(s) for s in basis.states] == brute_force_states(M, n_max)


@settings(max_examples=30, deadline=None)
@given(M=st.integers(1, 4), n_max=st.integers(0, 4))
def test_basis_dimension_is_binomial(M, n_max):
    basis = OccupationBasis(M, n_max)
    assert basis.dim == math.comb(M + n_max, n_max)
    assert not basis.states[0].any()
    totals = basis.totals
    assert np.all(np.diff(totals) >= 0)


def test_vacuum_only_space():
    basis = build_basis(TruncationParams(1.0, TWO_PI, 0, 0, 4))
    assert basis.dim == 1
    assert basis.state_index([0]) == 0


def test_dimension_cap_enforced(monkeypatch):
    with pytest.raises(DimensionCapExceeded):
        build_basis(TruncationParams(1.0, TWO_PI, 3, 6, 8, dimension_cap=100))
    monkeypatch.setenv("SCATLAB_DIM_CAP", "30")
    with pytest.raises(DimensionCapExceeded):
        build_basis(TruncationParams(1.0, TWO_PI, 1, 4, 8))


def test_basis_ordering_is_reproducible(params):
    a, b = build_basis(params), build_basis(params)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != OccupationBasis(3, 3).fingerprint()


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        TruncationParams(mass=0.0)
    with pytest.raises(ValueError):
        TruncationParams(n_max=-1)


# -- ladder operators ----------------------------------------------------------


def test_annihilators_kill_vacuum(params, basis):
    for j in range(-1, 2):
        a = annihilation_op(params, basis, j).matrix
        assert np.all(a @ basis.vacuum() == 0)


def test_ladder_matrix_element(params, basis):
    j = 1
    idx = params.mode_index(j)
    one = [0, 0, 0]
    one[idx] = 1
    two = [0, 0, 0]
    two[idx] = 2
    c = creation_op(params, basis, j).matrix
    assert c[basis.state_index(two), basis.state_index(one)] == pytest.approx(math.sqrt(2))


def test_annihilator_is_exact_adjoint(params, basis):
    for j in range(-1, 2):
        c = creation_op(params, basis, j).matrix
        a = annihilation_op(params, basis, j).matrix
        assert np.array_equal(a, c.conj().T)


def test_creation_kills_top_layer(params, basis):
    c = creation_op(params, basis, 0).matrix
    top = basis.totals == params.n_max
    assert np.all(c[:, top] == 0)


def test_ccr_on_interior_block(params, basis):
    low = basis.totals < params.n_max
    eye = np.eye(basis.dim)
    for i, j in product(range(3), repeat=2):
        a, c = basis.annihilators[i], basis.creators[j]
        comm = a @ c - c @ a - (i == j) * eye
        assert np.max(np.abs(comm[:, low])) <= 1e-14
        # creators commute among themselves everywhere
        ci = basis.creators[i]
        assert np.max(np.abs(ci @ c - c @ ci)) <= 1e-14


def test_mode_out_of_range(params, basis):
    with pytest.raises(ModeOutOfRange):
        creation_op(params, basis, 2)
    with pytest.raises(ModeOutOfRange):
        annihilation_op(params, basis, -5)


# -- number operator and free Hamiltonian --------------------------------------


def test_free_hamiltonian_examples(params, basis):
    H0 = free_hamiltonian(params, basis).matrix
    assert np.all(H0 @ basis.vacuum() == 0)
    e0 = [0, 1, 0]
    e1 = [0, 0, 1]
    assert H0[basis.state_index(e0), basis.state_index(e0)].real == pytest.approx(1.0)
    assert H0[basis.state_index(e1), basis.state_index(e1)].real == pytest.approx(math.sqrt(2))
    assert np.all(np.diag(H0).real >= 0)
    assert free_hamiltonian(params, basis).check_hermitian()


def test_number_operator_counts(basis):
    N = number_op(basis).matrix
    assert np.array_equal(np.diag(N).real, basis.totals)
    assert np.count_nonzero(N - np.diag(np.diag(N))) == 0


# -- field and Wick powers -----------------------------------------------------


def test_field_vacuum_moments(params, basis):
    vac = basis.vacuum()
    for m in range(params.x_points):
        x = m * params.dx
        phi = field_op(params, basis, x).matrix
        assert abs(vac @ phi @ vac) == 0
        assert (vac @ phi @ phi @ vac).real == pytest.approx(params.c_trunc(), rel=1e-14)
    # m = 1, L = 2 pi, K = 1: 1/(4 pi) (1 + 2/sqrt 2)
    assert params.c_trunc() == pytest.approx((1 + math.sqrt(2)) / (4 * math.pi), rel=1e-14)


def test_field_translation(params, basis):
    x = 3 * params.dx
    T = translation_unitary(params, basis, params.dx)
    lhs = field_op(params, basis, x + params.dx).matrix
    rhs = T @ field_op(params, basis, x).matrix @ T.conj().T
    assert np.max(np.abs(lhs - rhs)) <= 1e-14


def test_field_off_lattice(params, basis):
    with pytest.raises(OffLatticePosition):
        field_op(params, basis, 0.1234)


def test_wick_first_power_is_field(params, basis):
    x = 2 * params.dx
    assert np.allclose(wick_power(params, basis, 1, x).matrix,
                       field_op(params, basis, x).matrix, atol=1e-15)


def test_wick_square_subtracts_c_trunc(params, basis):
    x = 5 * params.dx
    phi = field_op(params, basis, x).matrix
    w2 = wick_power(params, basis, 2, x).matrix
    diff = w2 - (phi @ phi - params.c_trunc() * np.eye(basis.dim))
    interior = basis.totals <= params.n_max - 2
    assert np.max(np.abs(diff[:, interior])) <= 1e-14
    # the two constructions differ at the truncation boundary
    assert np.max(np.abs(diff)) > 1e-3


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_wick_vacuum_expectation_and_hermiticity(params, basis, p):
    op = wick_power(params, basis, p, 0.0)
    assert abs(op.matrix[0, 0]) == 0
    assert op.check_hermitian()
    assert op.deviation <= 1e-12


@pytest.mark.parametrize("p", [2, 3, 4])
def test_wick_subtraction_formula_agrees_below_cap(params, basis, p):
    x = params.dx
    a = wick_power(params, basis, p, x).matrix
    b = wick_subtraction_formula(params, basis, p, x)
    cols = basis.totals <= params.n_max - p
    assert np.max(np.abs((a - b)[:, cols])) <= 1e-13


# -- interaction ---------------------------------------------------------------


def test_zero_coupling_gives_zero(params, basis):
    V = interaction_op(params, basis, zero_function(TWO_PI), {4: 1.0}, 0.3)
    assert not np.any(V.matrix)


def test_interaction_vanishes_outside_support(params, basis, smoke_g):
    asm = InteractionAssembler(params, basis, smoke_g, {4: 1.0})
    assert not np.any(asm.raw(0.1))
    assert not np.any(asm.raw(1.85))
    assert np.any(asm.raw(1.0))


def test_interaction_hermitian_and_translation_covariant(params, basis, smoke_g):
    asm = InteractionAssembler(params, basis, smoke_g, {4: 1.0, 2: 0.3})
    V = asm(1.1)
    assert V.deviation <= 1e-10
    assert V.check_hermitian()
    a = 2 * params.dx
    shifted = InteractionAssembler(params, basis, smoke_g.shifted(0.0, a), {4: 1.0, 2: 0.3})
    T = translation_unitary(params, basis, a)
    dev = np.linalg.norm(shifted.hermitian_matrix(1.1) - T @ V.matrix @ T.conj().T, 2)
    assert dev <= 1e-10


def test_full_box_quadratic_couples_only_opposite_modes(params, basis):
    g = from_callable(lambda t, x: np.ones_like(np.asarray(x, dtype=float)) + 0 * t,
                      None, TWO_PI)
    V = interaction_op(params, basis, g, {2: 1.0}, 0.0).matrix
    mom = basis.states @ params.mode_labels
    rows, cols = np.nonzero(np.abs(V) > 1e-12)
    assert np.all(mom[rows] == mom[cols])
    # only a+_j a+_-j, a_j a_-j and number terms: particle number changes by 0 or 2
    dn = basis.totals[rows] - basis.totals[cols]
    assert set(np.unique(dn)) <= {-2, 0, 2}
    one_j = basis.state_index([0, 0, 1])
    one_mj = basis.state_index([1, 0, 0])
    assert abs(V[one_j, one_mj]) <= 1e-14


def test_per_power_couplings(params, basis, smoke_g):
    g2 = bump((1.0, 1.0), (0.5, 1.0), 0.2, TWO_PI)
    asm = InteractionAssembler(params, basis, {4: smoke_g, 2: g2}, {4: 1.0, 2: 1.0})
    sep = (InteractionAssembler(params, basis, smoke_g, {4: 1.0}).raw(1.0)
           + InteractionAssembler(params, basis, g2, {2: 1.0}).raw(1.0))
    assert np.allclose(asm.raw(1.0), sep, atol=1e-15)
    with pytest.raises(GridMismatch):
        InteractionAssembler(params, basis, {4: smoke_g}, {4: 1.0, 2: 1.0})


def test_coupling_box_mismatch(params, basis):
    with pytest.raises(GridMismatch):
        InteractionAssembler(params, basis, bump((0, 0), (1, 1), 1, 10.0), {4: 1.0})


def test_polynomial_normalization():
    assert as_polynomial({"4": 1, "2": 0.0}) == {4: 1.0}
    assert as_polynomial([0, 0, 0.5]) == {2: 0.5}


# -- kernels and the N-bound ---------------------------------------------------


@pytest.mark.parametrize("p", [2, 4])
def test_interaction_kernels_reassemble_operator(params, basis, smoke_g, p):
    t = 0.9
    samples = smoke_g(t, params.lattice)
    kernels = interaction_kernels(params, samples, p)
    total = sum(wick_monomial(basis, k) for k in kernels)
    V = InteractionAssembler(params, basis, smoke_g, {p: 1.0}).raw(t)
    assert np.max(np.abs(total - V)) <= 1e-14


def test_interaction_kernels_symmetric(params):
    samples = np.random.default_rng(1).normal(size=params.x_points)
    for k in interaction_kernels(params, samples, 4):
        assert k.symmetric
    with pytest.raises(GridMismatch):
        interaction_kernels(params, samples[:-1], 2)


def test_kernel_symmetrization():
    rng = np.random.default_rng(3)
    k = WickKernel(rng.normal(size=(3, 3, 3)), 2)
    assert not k.symmetric
    s = k.symmetrized()
    assert s.symmetric
    assert kernel_l2_norm(s) <= kernel_l2_norm(k) + 1e-14


def test_n_bound_number_operator(params, basis):
    idx = params.mode_index(0)
    w = np.zeros((3, 3))
    w[idx, idx] = 1.0
    k = WickKernel(w, 1)
    W = wick_monomial(basis, k)
    assert np.allclose(W, basis.creators[idx] @ basis.annihilators[idx])
    rep = verify_n_bound(basis, W, k)
    assert rep.measured <= 1.0 and rep.passed


def test_n_bound_zero_kernel(basis):
    k = WickKernel(np.zeros((3, 3)), 1)
    rep = verify_n_bound(basis, np.zeros((basis.dim, basis.dim)), k)
    assert rep.measured == 0.0 and rep.bound == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_n_bound_random_quartic(basis, seed):
    rng = np.random.default_rng(seed)
    for r in range(5):
        w = rng.normal(size=(3,) * 4) + 1j * rng.normal(size=(3,) * 4)
        k = WickKernel(w, r)
        W = wick_monomial(basis, k)
        rep = verify_n_bound(basis, W, k)
        assert rep.measured <= rep.bound * (1 + 1e-10)
        assert number_weighted_norm(basis, W, 2, 2) <= rep.bound * (1 + 1e-10)


def test_n_bound_violation_detected(basis):
    k = WickKernel(np.full((3, 3), 1e-3), 1)
    forged = np.eye(basis.dim) * 10.0
    with pytest.raises(BoundViolated):
        verify_n_bound(basis, forged, k)


def test_fock_operator_is_immutable(basis):
    op = FockOperator(np.eye(basis.dim, dtype=complex), True, "I")
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 2.0


# -- semiboundedness -----------------------------------------------------------


def test_semiboundedness_zero_coupling(params):
    rep = semiboundedness_report(params, zero_function(TWO_PI), {4: 1.0}, 0.0)
    assert rep.lowest == pytest.approx(0.0, abs=1e-14)


def test_semiboundedness_quadratic_bound(params):
    g = bump((0.0, math.pi), (1.0, 2.0), 0.5, TWO_PI)
    a2 = 0.7
    rep = semiboundedness_report(params, g, {2: a2}, 0.0)
    g1 = params.dx * np.sum(np.abs(g(0.0, params.lattice)))
    assert rep.lowest >= -params.c_trunc() * g1 * a2 - 1e-12


def test_semiboundedness_quartic_sweep_monotone(params):
    g = bump((0.0, math.pi), (1.0, 2.0), 1.0, TWO_PI)
    rep = semiboundedness_report(params, g, {4: 1.0}, 0.0, cutoffs=(1, 2, 3))
    assert [r.mode_cutoff for r in rep.rows] == [1, 2, 3]
    assert rep.monotone
    cs = [r.c_trunc for r in rep.rows]
    assert cs == sorted(cs)
