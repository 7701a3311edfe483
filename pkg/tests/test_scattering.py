import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from scatlab.errors import (BracketTooTight, InstabilityDetected, ShiftNotGridAligned,
                            SupportsNotTimeSeparated)
from scatlab.harness.checks import fitted_slope, quadratic_errors
from scatlab.scattering import (ScatteringModel, StepperConfig, causal_factorization_check,
                                covariance_check, default_levels, dyson_series,
                                local_s_operator, locality_commutators, quadratic_oracle,
                                relative_s_operator)
from scatlab.testfunctions import bump, zero_function

TWO_PI = 2 * math.pi
FAST = StepperConfig(dt=5e-3)


@pytest.fixture(scope="module")
def g():
    return bump((1.0, math.pi), (0.5, 1.5), 0.05, TWO_PI)


@pytest.fixture(scope="module")
def S_g(quartic, g):
    return local_s_operator(quartic, g, FAST)


def test_zero_coupling_gives_identity(quartic):
    S = local_s_operator(quartic, zero_function())
    assert np.array_equal(S.matrix, np.eye(quartic.dim))
    assert S.scheme == "identity"


def test_unitary_and_adjoint(S_g):
    assert S_g.unitarity_deviation <= 1e-10
    assert S_g.adjoint_deviation <= 1e-10
    assert S_g.diagnostics.saturation_level is not None


def test_bracket_is_anchored(S_g):
    sigma, tau = S_g.bracket
    assert sigma == pytest.approx(round(sigma / FAST.dt) * FAST.dt, abs=1e-12)
    assert sigma < 0.5 and tau > 1.5


def test_widened_bracket(quartic, g, S_g):
    sigma, tau = S_g.bracket
    wide = local_s_operator(quartic, g, FAST, bracket=(sigma - 1.0, tau + 1.0))
    assert np.linalg.norm(wide.matrix - S_g.matrix, 2) <= 1e-12


def test_bracket_validation(quartic, g):
    with pytest.raises(BracketTooTight):
        local_s_operator(quartic, g, FAST, bracket=(0.6, 2.0))
    with pytest.raises(BracketTooTight):
        local_s_operator(quartic, g, FAST, bracket=(0.0, 2.0012))


def test_default_levels_cover_radius():
    assert default_levels(8.0) == (2.0, 4.0, 8.0, 16.0)


def test_yosida_and_cutoff_agree(quartic, g, S_g):
    yos = local_s_operator(quartic, g, replace(FAST, kind="yosida"))
    assert np.linalg.norm(yos.matrix - S_g.matrix, 2) <= 1e-8


def test_relative_operator_examples(quartic, g, S_g):
    f = bump((1.0, 1.0), (0.3, 0.8), 0.04, TWO_PI)
    assert np.allclose(relative_s_operator(quartic, zero_function(), f, FAST),
                       local_s_operator(quartic, f, FAST).matrix, atol=1e-14)
    assert np.allclose(relative_s_operator(quartic, g, zero_function(), FAST),
                       np.eye(quartic.dim), atol=1e-12)


def test_causal_factorization_two_bumps(quartic):
    f = bump((2.0, 1.0), (0.3, 0.8), 0.04, TWO_PI)
    g = bump((1.0, 4.0), (0.3, 0.8), 0.04, TWO_PI)
    res = causal_factorization_check(quartic, f, zero_function(), g, FAST)
    assert res.passed and res.value <= 1e-10


def test_causal_factorization_trivial(quartic):
    z = zero_function()
    assert causal_factorization_check(quartic, z, z, z, FAST).value == 0.0


def test_causal_factorization_overlapping_h(quartic):
    f = bump((2.0, 4.0), (0.3, 1.0), 0.04, TWO_PI)
    g = bump((0.6, 1.0), (0.3, 1.0), 0.04, TWO_PI)
    h = bump((1.3, 2.5), (1.0, 1.5), 0.04, TWO_PI)
    res = causal_factorization_check(quartic, f, h, g, FAST)
    assert res.value <= 1e-8


def test_causal_requires_time_order(quartic):
    f = bump((1.0, 1.0), (0.3, 0.8), 0.04, TWO_PI)
    g = bump((1.2, 4.0), (0.3, 0.8), 0.04, TWO_PI)
    with pytest.raises(SupportsNotTimeSeparated):
        causal_factorization_check(quartic, f, zero_function(), g, FAST)


def test_covariance(quartic, g, params):
    assert covariance_check(quartic, g, 0.0, 0.0, FAST).value == 0.0
    space = covariance_check(quartic, g, 0.0, params.dx, FAST)
    assert space.value <= 1e-10
    time = covariance_check(quartic, g, FAST.dt, 0.0, FAST)
    assert time.value <= 1e-8
    with pytest.raises(ShiftNotGridAligned):
        covariance_check(quartic, g, 0.0, 0.5 * params.dx, FAST)
    with pytest.raises(ShiftNotGridAligned):
        covariance_check(quartic, g, 0.3 * FAST.dt, 0.0, FAST)


def test_dyson_order_zero_and_validation(quartic, g):
    assert np.array_equal(dyson_series(quartic, g, 0, FAST), np.eye(quartic.dim))
    with pytest.raises(ValueError):
        dyson_series(quartic, g, 3, FAST)


def test_dyson_commuting_family(params):
    # P = 1 makes V(t) = dx sum_x g(t, x) a multiple of the identity, so all V^D(t) commute
    model = ScatteringModel(params, {0: 1.0})
    g = bump((1.0, math.pi), (0.5, None), 0.3, TWO_PI)
    S2 = dyson_series(model, g, 2, FAST)
    times = [1.0 - 0.75 + (i + 0.5) * FAST.dt for i in range(int(round(1.5 / FAST.dt)))]
    theta = FAST.dt * sum(float(g(t, 0.0)) for t in times) * TWO_PI
    A = -1j * theta * np.eye(model.dim)
    assert np.allclose(S2, np.eye(model.dim) + A + A @ A / 2, atol=1e-13)


def test_dyson_first_order_quadratic(params):
    model = ScatteringModel(params, {2: 0.5})
    unit = bump((1.0, math.pi), (0.5, 1.5), 1.0, TWO_PI)
    amps = (0.01, 0.02, 0.04)
    rem = []
    for a in amps:
        S = local_s_operator(model, unit.scaled(a), FAST)
        rem.append(np.linalg.norm(S.matrix - dyson_series(model, unit.scaled(a), 1, FAST,
                                                           S.bracket), 2))
    assert fitted_slope(amps, rem) == pytest.approx(2.0, abs=0.15)


def test_quadratic_oracle_free_evolution(params):
    pred = quadratic_oracle(params, lambda t: 0.0, 0.1, (0.0, 1.0))
    assert pred.vacuum == pytest.approx(1.0)
    # interaction picture: free phases cancel, so S restricted to one particle is 1
    assert np.allclose(pred.one_particle, np.eye(params.n_modes), atol=1e-12)
    for j, b in pred.blocks.items():
        assert abs(b["w"]) <= 1e-14
        assert b["u"] == pytest.approx(np.exp(-1j * b["mu"]), abs=1e-10)


def test_quadratic_oracle_degenerate_mode(params):
    lam = -params.mass ** 2
    pred = quadratic_oracle(params, lambda t: 1.0, lam, (0.0, 0.5))
    assert pred.degenerate == (0,)


def test_quadratic_oracle_instability(params):
    with pytest.raises(InstabilityDetected):
        quadratic_oracle(params, lambda t: 1.0, -2.0, (0.0, 0.5))


def test_quadratic_oracle_matches_fock(params):
    res = quadratic_errors(params, 0.1, (4, 6))
    eps = [r["one_particle"] for r in res]
    assert eps[1] <= 1e-6
    assert eps[0] / eps[1] >= 4


def test_locality_rows(quartic, g):
    h = bump((1.0, 1.0), (0.2, 0.5), 0.04, TWO_PI)
    rows = locality_commutators(quartic, g, lambda d: bump((1.0, 1.0 + d), (0.2, 0.5),
                                                           0.04, TWO_PI),
                                h, (1.5, 3.0), StepperConfig(dt=1e-2))
    assert [r[0] for r in rows] == [1.5, 3.0]
    assert all(r[1] >= 0 for r in rows)
