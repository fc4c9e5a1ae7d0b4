"""Smooth 1-periodic functions with two derivatives, and admissibility checks for potentials."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import DegenerateCritical

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SmoothFunction:
    eval: Callable
    deriv1: Callable
    deriv2: Callable
    name: str = "function"
    period: float = 1.0

    def __call__(self, x):
        return self.eval(x)

    def scaled(self, c, name=None):
        return SmoothFunction(lambda x: c * self.eval(x), lambda x: c * self.deriv1(x),
                              lambda x: c * self.deriv2(x), name or f"{c}*{self.name}")


@dataclass
class AdmissibilityReport:
    critical_points: list = field(default_factory=list)  # (x, value, second derivative)
    admissible: bool = False
    range: tuple = (0.0, 0.0)

    def to_dict(self):
        return {
            "critical_points": [{"x": x, "value": v, "second_derivative": d2}
                                for x, v, d2 in self.critical_points],
            "admissible": self.admissible,
            "range": list(self.range),
        }


def cosine(amplitude=1.0, harmonic=1, phase=0.0):
    """amplitude * cos(2 pi (harmonic x + phase))."""
    w = TWO_PI * harmonic

    def f(x):
        return amplitude * np.cos(w * np.asarray(x) + TWO_PI * phase)

    def d1(x):
        return -amplitude * w * np.sin(w * np.asarray(x) + TWO_PI * phase)

    def d2(x):
        return -amplitude * w * w * np.cos(w * np.asarray(x) + TWO_PI * phase)

    name = "cos" if (amplitude, harmonic, phase) == (1.0, 1, 0.0) else \
        f"{amplitude}*cos(2pi*({harmonic}x+{phase}))"
    return SmoothFunction(f, d1, d2, name)


def perturbed_cosine(eps):
    """cos(2 pi x) + eps * sin(4 pi x); admissible for small eps."""
    def f(x):
        x = np.asarray(x)
        return np.cos(TWO_PI * x) + eps * np.sin(2 * TWO_PI * x)

    def d1(x):
        x = np.asarray(x)
        return -TWO_PI * np.sin(TWO_PI * x) + 2 * TWO_PI * eps * np.cos(2 * TWO_PI * x)

    def d2(x):
        x = np.asarray(x)
        return -TWO_PI**2 * np.cos(TWO_PI * x) - 4 * TWO_PI**2 * eps * np.sin(2 * TWO_PI * x)

    return SmoothFunction(f, d1, d2, f"cos+{eps}*sin")


def constant(c=0.0):
    def f(x):
        return np.full(np.shape(x), float(c))

    def zero(x):
        return np.zeros(np.shape(x))

    return SmoothFunction(f, zero, zero, f"const({c})")


def tabulated(xs, ys):
    """Periodic cubic spline through samples on [0, 1); C^2 only approximately represents the data."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    xs_closed = np.concatenate([xs, [xs[0] + 1.0]])
    ys_closed = np.concatenate([ys, [ys[0]]])
    spline = CubicSpline(xs_closed, ys_closed, bc_type="periodic")
    base = xs[0]

    def wrap(x):
        return np.mod(np.asarray(x, dtype=float) - base, 1.0) + base

    return SmoothFunction(lambda x: spline(wrap(x)), lambda x: spline(wrap(x), 1),
                          lambda x: spline(wrap(x), 2), "tabulated")


def load_tabulated(path):
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: expected two columns x,v")
    return tabulated(data[:, 0], data[:, 1])


def by_name(name, eps=0.0, value=0.0, path=None):
    if name == "cos":
        return cosine()
    if name in ("cos+eps*sin", "perturbed"):
        return perturbed_cosine(eps)
    if name == "const":
        return constant(value)
    if name == "cos4":
        return cosine(harmonic=2)
    if name == "tabulated":
        if path is None:
            raise ValueError("tabulated potential needs a CSV path")
        return load_tabulated(path)
    raise ValueError(f"unknown potential {name!r}")


def difference_with_shift(theta, alpha):
    """x -> theta(x) - theta(x - alpha)."""
    return SmoothFunction(lambda x: theta.eval(x) - theta.eval(np.asarray(x) - alpha),
                          lambda x: theta.deriv1(x) - theta.deriv1(np.asarray(x) - alpha),
                          lambda x: theta.deriv2(x) - theta.deriv2(np.asarray(x) - alpha),
                          f"{theta.name}(x)-{theta.name}(x-a)")


szego_angle = difference_with_shift


def _sign_change_brackets(d):
    """Indices i where the periodic sample sequence d crosses zero on [i, i+1] or touches it at i."""
    n = len(d)
    s = np.sign(d)
    nxt = np.roll(s, -1)
    prv = np.roll(s, 1)
    strict = np.nonzero(s * nxt < 0)[0]
    touch = np.nonzero((s == 0) & (prv * nxt < 0))[0]
    return strict, touch, n


def validate_admissible(f, grid_size=4096, tol=1e-6, xtol=1e-14):
    """Locate critical points by sign changes of the first derivative and check nondegeneracy."""
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    xs = np.arange(grid_size) / grid_size
    d = np.asarray(f.deriv1(xs), dtype=float)
    strict, touch, n = _sign_change_brackets(d)
    crit = [float(xs[i]) for i in touch]
    for i in strict:
        a, b = xs[i], xs[i] + 1.0 / n
        da, db = float(f.deriv1(a)), float(f.deriv1(b))
        if da * db < 0:
            crit.append(float(brentq(lambda y: float(f.deriv1(y)), a, b, xtol=xtol)) % 1.0)
        else:
            # scalar and vectorised evaluation disagree at a rounding-level endpoint value
            crit.append(float(a if abs(da) <= abs(db) else b) % 1.0)
    crit.sort()
    points = []
    for x in crit:
        d2 = float(f.deriv2(x))
        if abs(d2) < tol:
            raise DegenerateCritical(f"|f''({x:.6g})| = {abs(d2):.3g} below {tol}")
        points.append((x, float(f.eval(x)), d2))
    vals = np.asarray(f.eval(xs), dtype=float)
    lo = min([vals.min()] + [v for _, v, _ in points])
    hi = max([vals.max()] + [v for _, v, _ in points])
    kinds = sorted(np.sign(d2) for _, _, d2 in points)
    admissible = len(points) == 2 and kinds == [-1.0, 1.0]
    return AdmissibilityReport(points, bool(admissible), (float(lo), float(hi)))


def angle_range(f, grid_size=4096):
    """sup f - inf f on a grid; the rotation family asks for less than pi."""
    vals = np.asarray(f.eval(np.arange(grid_size) / grid_size), dtype=float)
    return float(vals.max() - vals.min())
