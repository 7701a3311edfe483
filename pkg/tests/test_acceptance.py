"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

Run with ``pytest tests/test_acceptance.py`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from scatlab.harness import load_config, run
from scatlab.harness.checks import (REGISTRY, RunContext, dyson_remainders, fitted_slope,
                                    goldstein_deviation, quadratic_errors, scheme_errors,
                                    uniqueness_study)
from scatlab.harness.cli import shipped_configs
from scatlab.scattering import ScatteringModel, StepperConfig, causal_factorization_check
from scatlab.testfunctions import bump

RESULTS = []


def record(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return passed


def smoke_config():
    return load_config(shipped_configs()["quartic_smoke"])


@pytest.fixture(scope="module")
def smoke():
    return smoke_config()


@pytest.fixture(scope="module")
def smoke_ctx(smoke):
    return RunContext(smoke)


@pytest.fixture(scope="module")
def smoke_run(smoke, tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke_a")
    start = time.perf_counter()
    report = run(smoke, out)
    return report, out, time.perf_counter() - start


def _value(report, name):
    return report.record(name).value


def test_01_unitarity_and_adjoint(smoke_run):
    report, _, seconds = smoke_run
    u, a = _value(report, "unitarity"), _value(report, "adjoint")
    ok = u <= 1e-10 and a <= 1e-10 and seconds <= 60.0
    assert record(1, "unitarity & adjoint", ok,
                  f"||S*S-1||={u:.3e} ||S*-S^-1||={a:.3e} (tol 1e-10), full run {seconds:.1f} s "
                  "(limit 60 s)")


def random_geometry(rng, box):
    """f later than g in time, h overlapping both."""
    def b(tc, rt, label, amp=None):
        rx = rng.uniform(0.6, 1.5)
        return bump((tc, rng.uniform(0, box)), (rt, rx), amp or rng.uniform(0.03, 0.06),
                    box, label=label)

    g = b(rng.uniform(0.5, 0.8), rng.uniform(0.2, 0.35), "g")
    f = b(rng.uniform(1.8, 2.1), rng.uniform(0.2, 0.35), "f")
    h = b(rng.uniform(1.2, 1.4), rng.uniform(0.7, 0.9), "h")
    return f, h, g


def test_02_causal_factorization(smoke):
    model = ScatteringModel(smoke.truncation, smoke.polynomial)
    cfg = replace(smoke.stepper, dt=2e-3)
    devs = []
    for seed in range(5):
        f, h, g = random_geometry(np.random.default_rng(seed), smoke.truncation.box_length)
        assert f.t_support[0] > g.t_support[1]
        assert h.t_support[0] < g.t_support[1] and h.t_support[1] > f.t_support[0]
        devs.append(causal_factorization_check(model, f, h, g, cfg, 1e-8).value)
    ok = max(devs) <= 1e-8
    assert record(2, "causal factorization", ok,
                  f"max deviation {max(devs):.3e} over 5 seeded geometries at dt=2e-3 "
                  "(tol 1e-8)")


def test_03_covariance(smoke_run):
    report = smoke_run[0]
    s, t = _value(report, "covariance_space"), _value(report, "covariance_time")
    ok = s <= 1e-10 and t <= 1e-8
    assert record(3, "covariance", ok,
                  f"space {s:.3e} (tol 1e-10), time {t:.3e} (tol 1e-8)")


def test_04_dyson(smoke_ctx):
    amps = (0.02, 0.04, 0.08)
    unit = smoke_ctx.function("g").scaled(1.0 / 0.05)
    rem = dyson_remainders(smoke_ctx.model, unit, amps, smoke_ctx.stepper(), orders=(2,))[2]
    slope = fitted_slope(amps, rem)
    assert record(4, "Dyson agreement", slope >= 2.7,
                  f"log-log slope of ||S - S_2|| = {slope:.4f} (need >= 2.7)")


def test_05_approximative_uniqueness(smoke_ctx):
    dev, n_star, rho, _ = uniqueness_study(smoke_ctx.model, smoke_ctx.function("g"), 2e-3)
    expected = math.ceil(rho)
    ok = dev <= 1e-8 and n_star is not None and abs(n_star - expected) <= 1
    assert record(5, "approximative uniqueness", ok,
                  f"||U_yosida - U_cutoff|| = {dev:.3e} (tol 1e-8), saturation n*={n_star} "
                  f"vs ceil(rho)={expected} (rho={rho:.4f})")


def test_06_scheme_convergence(smoke_ctx):
    dts = (0.02, 0.01, 0.005)
    mid, imp = scheme_errors(smoke_ctx.model, smoke_ctx.function("g"), dts)
    p_mid, p_imp = fitted_slope(dts, mid), fitted_slope(dts, imp)
    ok = abs(p_mid - 2.0) <= 0.2 and abs(p_imp - 1.0) <= 0.2
    assert record(6, "scheme convergence", ok,
                  f"midpoint order {p_mid:.4f} (2 +- 0.2), implicit order {p_imp:.4f} (1 +- 0.2)")


def test_07_goldstein():
    devs = [goldstein_deviation(np.random.default_rng(seed), 4, 1e-3) for seed in range(10)]
    ok = max(devs) <= 1e-8
    assert record(7, "Goldstein oracle", ok,
                  f"max deviation {max(devs):.3e} over 10 seeded 4x4 triples at dt=1e-3 "
                  "(tol 1e-8)")


def test_08_n_bound(smoke_ctx):
    assert smoke_ctx.params.n_modes == 3 and smoke_ctx.params.n_max == 4
    out = REGISTRY["n_bound"](smoke_ctx, powers=(2, 4), samples=10)[0]
    ok = out.value <= 1.0 + 1e-10
    assert record(8, "N-bound", ok,
                  f"max measured/||w||_2 = {out.value:.6f} over {out.details['evaluations']} "
                  "weighted norms (need <= 1 + 1e-10)")


def test_09_quadratic_oracle(smoke):
    res = quadratic_errors(smoke.truncation, 0.1, (4, 8))
    eps = [r["one_particle"] for r in res]
    ratio = eps[0] / eps[1]
    assert record(9, "quadratic oracle", ratio >= 4.0,
                  f"eps(n_max=4)={eps[0]:.3e}, eps(n_max=8)={eps[1]:.3e}, ratio {ratio:.1f} "
                  "(need >= 4)")


def test_10_howland(smoke_ctx):
    sg = REGISTRY["howland_semigroup"](smoke_ctx)[0].value
    mc = REGISTRY["howland_multiplication"](smoke_ctx)[0].value
    res = REGISTRY["howland_resolvent"](smoke_ctx)[0].value
    norm, cont = (o.value for o in REGISTRY["howland_norm"](smoke_ctx, dt=0.05))
    ok = sg <= 1e-12 and mc <= 1e-12 and 1.6 <= res <= 2.4 and norm <= 1e-10 and cont <= 0.05
    assert record(10, "Howland layer", ok,
                  f"semigroup {sg:.2e}, commutation {mc:.2e} (tol 1e-12), residual ratio "
                  f"{res:.3f} (halving), norm gap {norm:.1e} discrete / {cont:.2e} continuum "
                  "(<= dt=0.05)")


def test_11_sohr(smoke_ctx):
    pos = REGISTRY["sohr_condition"](smoke_ctx, k=0.0)[0].value
    neg = REGISTRY["sohr_negative_control"](smoke_ctx)[0].value
    ok = pos >= -1e-8 and neg < -1e-8
    assert record(11, "Sohr condition checker", ok,
                  f"constant H, k=0: min {pos:.3e} (>= -1e-8); bump, k=0.5: min {neg:.3e} "
                  "(violation reported)")


def test_12_determinism(smoke, smoke_run, tmp_path):
    _, out_a, _ = smoke_run
    run(smoke, tmp_path)
    a = (out_a / "report.json").read_bytes()
    b = (tmp_path / "report.json").read_bytes()
    assert record(12, "determinism", a == b,
                  f"report.json byte-identical across two runs ({len(a)} bytes)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
