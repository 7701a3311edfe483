import math

import numpy as np
import pytest

from scatlab.errors import SupportOutsideGrid
from scatlab.testfunctions import (bump, from_callable, mollifier, periodic_offset,
                                   zero_function)

TWO_PI = 2 * math.pi


def test_mollifier_shape():
    assert mollifier(0.0) == pytest.approx(1.0)
    assert mollifier(np.array([-1.0, 1.0, 1.5])).tolist() == [0.0, 0.0, 0.0]
    u = np.linspace(-0.99, 0.99, 101)
    assert np.all(mollifier(u) > 0)
    assert np.allclose(mollifier(u), mollifier(-u))


def test_periodic_offset_wraps():
    assert periodic_offset(0.1, TWO_PI - 0.1, TWO_PI) == pytest.approx(0.2)
    assert periodic_offset(3.0, 1.0, TWO_PI) == pytest.approx(2.0)


def test_zero_amplitude_bump_is_zero():
    g = bump((1.0, 1.0), (0.5, 1.0), 0.0)
    assert g.is_zero
    assert not np.any(g.sample([0.5, 1.0, 1.5], np.linspace(0, TWO_PI, 9)))
    assert zero_function().is_zero


def test_bump_support_and_peak():
    g = bump((1.0, math.pi), (0.5, 1.0), 0.3)
    assert g.t_support == (0.5, 1.5)
    assert g(1.0, math.pi) == pytest.approx(0.3)
    assert g(1.5, math.pi) == 0.0
    assert g(1.0, math.pi + 1.0) == 0.0


def test_bump_wraps_around_box():
    g = bump((0.0, 0.0), (1.0, 1.0), 1.0)
    assert g(0.0, TWO_PI - 0.5) == pytest.approx(g(0.0, 0.5))


def test_support_validation():
    with pytest.raises(SupportOutsideGrid):
        bump((0.0, 0.0), (1.0, 4.0), 1.0)
    with pytest.raises(SupportOutsideGrid):
        bump((0.5, 0.0), (1.0, 1.0), 1.0, t_range=(0.0, 2.0))
    with pytest.raises(SupportOutsideGrid):
        bump((0.5, 0.0), (0.0, 1.0), 1.0)


def test_sum_scale_shift():
    f = bump((1.0, 1.0), (0.5, 0.5), 1.0)
    g = bump((3.0, 2.0), (0.5, 0.5), 2.0)
    s = f + g
    assert s.t_support == (0.5, 3.5)
    assert s(3.0, 2.0) == pytest.approx(2.0)
    assert s.scaled(0.5)(3.0, 2.0) == pytest.approx(1.0)
    sh = s.shifted(1.0, 0.5)
    assert sh(4.0, 2.5) == pytest.approx(2.0)
    assert sh.t_support == (1.5, 4.5)
    with pytest.raises(ValueError):
        f + bump((0, 0), (1, 1), 1.0, box_length=10.0)


def test_callable_term():
    g = from_callable(lambda t, x: np.cos(x) * t, (0.0, 1.0))
    assert g(0.5, 0.0) == pytest.approx(0.5)
    assert g.shifted(1.0, 0.0)(1.5, 0.0) == pytest.approx(0.5)
    assert g.scaled(0.0).is_zero


def test_second_difference_shrinks_with_resolution():
    g = bump((1.0, math.pi), (0.5, 1.0), 1.0)
    coarse = g.max_second_difference(np.linspace(0, 2, 41), [math.pi])
    fine = g.max_second_difference(np.linspace(0, 2, 81), [math.pi])
    assert fine < coarse / 3
