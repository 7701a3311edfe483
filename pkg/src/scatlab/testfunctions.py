"""Localization functions g(t, x): smooth, compactly supported couplings.

A :class:`LocalizationFunction` is a finite sum of terms, each a callable of
``(t, x)`` with a declared time support. Sums, scalar multiples and
space-time shifts stay analytic, so the function can be evaluated at
midpoints and shifted nodes without interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SupportOutsideGrid


def mollifier(u):
    """b(u) = exp(1 - 1/(1 - u^2)) on |u| < 1, zero elsewhere; b(0) = 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def periodic_offset(x, x0, period):
    """Signed distance x - x0 wrapped into [-period/2, period/2)."""
    d = np.asarray(x, dtype=float) - x0
    return (d + 0.5 * period) % period - 0.5 * period


@dataclass(frozen=True)
class Bump:
    """A * b((t - t0)/rt) * b((x - x0)/rx) on a periodic box.

    ``radius_x=None`` gives a coupling that is constant in space (v(t) on the
    whole box).
    """

    center_t: float
    center_x: float
    radius_t: float
    radius_x: Optional[float]
    amplitude: float
    box_length: float

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        bt = mollifier((np.asarray(t, dtype=float) - self.center_t) / self.radius_t)
        if self.radius_x is None:
            bx = np.ones_like(x)
        else:
            bx = mollifier(periodic_offset(x, self.center_x, self.box_length) / self.radius_x)
        return self.amplitude * bt * bx

    @property
    def t_support(self):
        if self.amplitude == 0.0:
            return None
        return (self.center_t - self.radius_t, self.center_t + self.radius_t)

    def shifted(self, a_t, a_x):
        cx = (self.center_x + a_x) % self.box_length
        return Bump(self.center_t + a_t, cx, self.radius_t, self.radius_x,
                    self.amplitude, self.box_length)

    def scaled(self, c):
        return Bump(self.center_t, self.center_x, self.radius_t, self.radius_x,
                    self.amplitude * c, self.box_length)


@dataclass(frozen=True)
class CallableTerm:
    """Arbitrary g(t, x) with a declared time support (None = unbounded)."""

    func: Callable
    t_support: Optional[tuple]
    scale: float = 1.0
    shift_t: float = 0.0
    shift_x: float = 0.0

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float) - self.shift_t
        x = np.asarray(x, dtype=float) - self.shift_x
        return self.scale * np.asarray(self.func(t, x), dtype=float)

    def shifted(self, a_t, a_x):
        sup = None if self.t_support is None else (self.t_support[0] + a_t,
                                                   self.t_support[1] + a_t)
        return CallableTerm(self.func, sup, self.scale, self.shift_t + a_t,
                            self.shift_x + a_x)

    def scaled(self, c):
        return CallableTerm(self.func, self.t_support, self.scale * c,
                            self.shift_t, self.shift_x)


@dataclass(frozen=True)
class LocalizationFunction:
    """Real coupling g(t, x) on the periodic box [0, box_length)."""

    terms: tuple = ()
    box_length: float = 2 * math.pi
    label: str = "g"

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast(np.asarray(t, dtype=float), x).shape)
        for term in self.terms:
            out = out + term(t, x)
        return out

    def __add__(self, other: "LocalizationFunction") -> "LocalizationFunction":
        if not math.isclose(self.box_length, other.box_length):
            raise ValueError("cannot add localization functions on different boxes")
        return LocalizationFunction(self.terms + other.terms, self.box_length,
                                    f"{self.label}+{other.label}")

    def scaled(self, c: float) -> "LocalizationFunction":
        return LocalizationFunction(tuple(t.scaled(c) for t in self.terms),
                                    self.box_length, f"{c:g}*{self.label}")

    def shifted(self, a_t: float = 0.0, a_x: float = 0.0) -> "LocalizationFunction":
        return LocalizationFunction(tuple(t.shifted(a_t, a_x) for t in self.terms),
                                    self.box_length, self.label)

    @property
    def is_zero(self):
        return self.t_support is None

    @property
    def t_support(self):
        """Closed hull of the time supports, or None for the zero function."""
        sups = []
        for term in self.terms:
            if isinstance(term, Bump):
                s = term.t_support
                if s is None:
                    continue
            else:
                if term.scale == 0.0:
                    continue
                s = term.t_support or (-math.inf, math.inf)
            sups.append(s)
        if not sups:
            return None
        return (min(s[0] for s in sups), max(s[1] for s in sups))

    def sample(self, times: Sequence[float], xs: Sequence[float]) -> np.ndarray:
        """Samples g(t_i, x_m) on a space-time grid, shape (len(times), len(xs))."""
        t = np.asarray(times, dtype=float)[:, None]
        return self(t, np.asarray(xs, dtype=float)[None, :])

    def max_second_difference(self, times, xs) -> float:
        s = self.sample(times, xs)
        d = 0.0
        if s.shape[0] > 2:
            d = max(d, float(np.max(np.abs(np.diff(s, n=2, axis=0)))))
        if s.shape[1] > 2:
            d = max(d, float(np.max(np.abs(np.diff(s, n=2, axis=1)))))
        return d


def zero_function(box_length: float = 2 * math.pi) -> LocalizationFunction:
    return LocalizationFunction((), box_length, "0")


def bump(center, radii, amplitude, box_length=2 * math.pi, t_range=None,
         label="g") -> LocalizationFunction:
    """Standard mollifier bump centred at ``center = (t0, x0)``.

    ``radii = (rt, rx)``; ``rx=None`` makes the bump constant in space. When
    ``t_range`` is given the time support must lie strictly inside it, and the
    spatial support must fit strictly inside the box.
    """
    t0, x0 = center
    rt, rx = radii
    if rt <= 0 or (rx is not None and rx <= 0):
        raise SupportOutsideGrid("bump radii must be positive")
    if rx is not None and 2 * rx >= box_length:
        raise SupportOutsideGrid(
            f"spatial diameter {2 * rx} does not fit in box of length {box_length}")
    if t_range is not None:
        lo, hi = t_range
        if not (lo < t0 - rt and t0 + rt < hi):
            raise SupportOutsideGrid(
                f"time support [{t0 - rt}, {t0 + rt}] not strictly inside ({lo}, {hi})")
    term = Bump(float(t0), float(x0) % box_length, float(rt),
                None if rx is None else float(rx), float(amplitude), float(box_length))
    return LocalizationFunction((term,), float(box_length), label)


def from_callable(func, t_support=None, box_length=2 * math.pi, label="g"):
    return LocalizationFunction((CallableTerm(func, t_support),), float(box_length), label)
