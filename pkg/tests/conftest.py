import math

import numpy as np
import pytest

from scatlab.fock import TruncationParams, build_basis
from scatlab.scattering import ScatteringModel
from scatlab.testfunctions import bump

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def params():
    return TruncationParams(1.0, TWO_PI, 1, 4, 16)


@pytest.fixture(scope="session")
def basis(params):
    return build_basis(params)


@pytest.fixture(scope="session")
def quartic(params):
    return ScatteringModel(params, {4: 1.0})


@pytest.fixture(scope="session")
def smoke_g():
    return bump((1.0, math.pi), (0.8, 1.5), 0.05, TWO_PI)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, dim, scale=1.0):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = 0.5 * (A + A.conj().T)
    return scale * H / np.linalg.norm(H, 2)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
