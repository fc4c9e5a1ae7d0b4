"""Classification of sampled critical functions into types I+/I-/II/III, and the
arctan-composed (type III) profile with its zero bifurcation in the offset d."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .directions import wrap_half
from .errors import NotType3

TOL_TANGENT = 1e-8


@dataclass(frozen=True)
class TypeParams:
    r: float
    l0: float = 1e5
    beta: float = 0.1
    c_small: float = 1e-3
    C_big: float = 1e3

    def large_parameter_ok(self):
        return self.l0 * self.r > 1e3


@dataclass
class TypeClassification:
    kind: str  # "I+", "I-", "II", "III", "unclassified"
    zeros: list = field(default_factory=list)
    deriv_zero: float | None = None
    diagnostics: dict = field(default_factory=dict)
    tangential: list = field(default_factory=list)

    def to_dict(self):
        return {"kind": self.kind, "zeros": [float(z) for z in self.zeros],
                "tangential": [float(z) for z in self.tangential],
                "deriv_zero": None if self.deriv_zero is None else float(self.deriv_zero),
                "diagnostics": {k: bool(v) for k, v in self.diagnostics.items()}}


# ---------------------------------------------------------------- sampled analysis

def rp1_abs(f):
    """|f| as an element of RP^1: distance from f to the nearest multiple of pi."""
    return np.abs(wrap_half(f))


def sign_change_zeros(xs, f):
    """Zeros of f mod pi located by sign changes of the centred representative, linearly interpolated."""
    w = wrap_half(f)
    a, b = w[:-1], w[1:]
    idx = np.nonzero(((a == 0) | (a * b < 0)) & (np.abs(a) + np.abs(b) < np.pi / 2))[0]
    out = []
    for i in idx:
        if a[i] == 0:
            out.append(float(xs[i]))
        else:
            out.append(float(xs[i] + (xs[i + 1] - xs[i]) * a[i] / (a[i] - b[i])))
    if w[-1] == 0:
        out.append(float(xs[-1]))
    return out


def tangential_zeros(xs, f, tol=TOL_TANGENT):
    """Local minima of |f| mod pi below tol that are not sign changes."""
    w = wrap_half(f)
    m = np.abs(w)
    out = []
    for i in range(1, len(xs) - 1):
        if m[i] <= m[i - 1] and m[i] <= m[i + 1] and m[i] < tol and w[i - 1] * w[i + 1] > 0:
            out.append(float(xs[i]))
    return out


def derivative_zeros(xs, d):
    idx = np.nonzero(d[:-1] * d[1:] < 0)[0]
    out = [float(xs[i] + (xs[i + 1] - xs[i]) * d[i] / (d[i] - d[i + 1])) for i in idx]
    # a sample landing exactly on the zero
    exact = np.nonzero((d[1:-1] == 0) & (d[:-2] * d[2:] < 0))[0] + 1
    return sorted(out + [float(xs[i]) for i in exact])


def classify(xs, f, params, decomposition=None, resonant=False):
    """Evaluate the definitional predicates of types I and II on samples of a lifted function.

    Type III cannot be read off raw samples; it is returned when a valid decomposition is
    supplied, or when ``resonant`` provenance is given and the sampled profile shows the
    near-pi excursion of the composed arctan.
    """
    xs = np.asarray(xs, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(xs) < 256:
        raise ValueError("classify needs at least 256 samples")
    center = 0.5 * (xs[0] + xs[-1])
    r = params.r
    c, C = params.c_small, params.C_big
    d1 = np.gradient(f, xs)
    d2 = np.gradient(d1, xs)
    absf = rp1_abs(f)
    c2_ok = bool(max(np.abs(wrap_half(f)).max(), np.abs(d1).max(), np.abs(d2).max()) < C)
    zeros = sign_change_zeros(xs, f)
    tang = tangential_zeros(xs, f)
    dz = derivative_zeros(xs, d1)
    span = 0.5 * (xs[-1] - xs[0])
    diag = {"c2_bounded": c2_ok}
    # near-pi excursion: the lifted branch wanders at least pi/2 away from its endpoints' level
    excursion = bool(np.ptp(f) > np.pi / 2)
    diag["near_pi_profile"] = excursion

    if decomposition is not None:
        try:
            decomposition.check()
            diag["decomposition_valid"] = True
            return TypeClassification("III", zeros, dz[0] if dz else None, diag, tang)
        except NotType3:
            diag["decomposition_valid"] = False

    # type I
    one_zero = len(zeros) == 1 and not tang
    diag["I_one_zero"] = one_zero
    if one_zero:
        x0 = zeros[0]
        diag["I_zero_inner_third"] = bool(abs(x0 - center) < span / 3)
        diag["I_at_most_one_deriv_zero"] = len(dz) <= 1
        near = np.abs(xs - x0) < r / 2
        diag["I_slope_floor"] = bool(np.all(np.abs(d1[near]) > r * r))
        s0 = np.interp(x0, xs, d1)
        J = d1 * s0 <= 0
        diag["I_value_floor_on_J"] = bool(np.all(absf[J] > c * r**3)) if J.any() else True
        keys = ["c2_bounded", "I_zero_inner_third", "I_at_most_one_deriv_zero", "I_slope_floor",
                "I_value_floor_on_J"]
        if all(diag[k] for k in keys):
            return TypeClassification("I+" if s0 > 0 else "I-", zeros, dz[0] if dz else None, diag, tang)

    # type II
    all_zeros = sorted(zeros + tang)
    diag["II_at_most_two_zeros_in_half"] = len(all_zeros) <= 2 and all(abs(z - center) < span / 2
                                                                         for z in all_zeros)
    diag["II_one_deriv_zero_in_half"] = len(dz) == 1 and abs(dz[0] - center) < span / 2
    if len(all_zeros) == 1 and dz:
        h = xs[1] - xs[0]
        diag["II_single_zero_is_tangent"] = bool(abs(all_zeros[0] - dz[0]) < 2 * h)
    else:
        diag["II_single_zero_is_tangent"] = len(all_zeros) != 1
    flat = np.abs(d1) < r * r
    diag["II_curvature_where_flat"] = bool(np.all(np.abs(d2[flat]) > c)) if flat.any() else True
    keys = ["c2_bounded", "II_at_most_two_zeros_in_half", "II_one_deriv_zero_in_half",
            "II_single_zero_is_tangent", "II_curvature_where_flat"]
    if all(diag[k] for k in keys):
        return TypeClassification("II", all_zeros, dz[0], diag, tang)

    if resonant and excursion:
        diag["III_resonance_provenance"] = True
        return TypeClassification("III", all_zeros, dz[0] if dz else None, diag, tang)
    return TypeClassification("unclassified", all_zeros, dz[0] if dz else None, diag, tang)


# ---------------------------------------------------------------- type III

def compose_type3(f1, f2, l, d, xs):
    """Lifted samples of arctan(l^2 tan f1(x)) - pi/2 + f2(x - d)."""
    xs = np.asarray(xs, dtype=float)
    raw = np.arctan(l * l * np.tan(f1(xs))) - np.pi / 2 + f2(xs - d)
    return np.unwrap(raw, period=np.pi)


def _composed_scalar(f1, f2, l, d):
    def f(x):
        return np.arctan(l * l * np.tan(f1(x))) - np.pi / 2 + f2(x - d)
    return f


@dataclass
class Type3Decomposition:
    """f = arctan(l^2 tan f1) - pi/2 + f2(. - d) on B(0, r); f1(0) = 0 and f2(0) = 0."""
    f1: Callable
    f2: Callable
    l: float
    d: float
    r: float
    l0: float = 1.0
    d0: float | None = None

    def check(self, samples=2049):
        xs = np.linspace(-self.r, self.r, samples)
        s1 = np.sign(np.gradient(self.f1(xs), xs))
        s2 = np.sign(np.gradient(self.f2(xs), xs))
        if self.l < self.l0:
            raise NotType3("l below the large-parameter floor")
        if not (np.all(s1 == s1[0]) and np.all(s2 == s2[0]) and s1[0] * s2[0] < 0):
            raise NotType3("f1 and f2 must be monotone with opposite slope signs")
        if abs(self.f1(0.0)) > 1e-12 or abs(self.f2(0.0)) > 1e-12:
            raise NotType3("f1 and f2 must vanish at 0")
        if not 0.0 <= self.d <= 2.0 * self.r / 3.0:
            raise NotType3("offset d outside [0, 2r/3]")
        return True

    def grid(self, n_uniform=20001, n_log=400):
        """Uniform grid on B(0, r) refined logarithmically near 0 and near d."""
        l2 = self.l * self.l
        lo = 1e-3 / l2
        logs = np.geomspace(lo, self.r, n_log)
        pts = [np.linspace(-self.r, self.r, n_uniform), logs, -logs, [0.0]]
        if self.d > 0:
            near_d = np.geomspace(lo, max(self.d, 2 * lo), n_log)
            pts += [self.d - near_d, self.d + near_d]
        xs = np.unique(np.concatenate([np.atleast_1d(p) for p in pts]))
        xs = xs[(xs >= -self.r) & (xs <= self.r)]
        # merged grids produce near-duplicates that wreck finite differences
        keep = np.concatenate([[True], np.diff(xs) > 1e-6 * np.maximum(np.abs(xs[1:]), lo)])
        return xs[keep]

    def evaluate(self, xs):
        return compose_type3(self.f1, self.f2, self.l, self.d, xs)


def _refine_min(fun, a, b):
    res = minimize_scalar(fun, bounds=(a, b), method="bounded", options={"xatol": 1e-15})
    return float(res.x), float(res.fun)


def bifurcation_analysis(dec, C=10.0, tol_tangent=TOL_TANGENT):
    """Zeros, critical points and the nonzero minimum of a type III composition."""
    dec.check()
    xs = dec.grid()
    f = dec.evaluate(xs)
    fs = _composed_scalar(dec.f1, dec.f2, dec.l, dec.d)
    w = wrap_half(f)
    absf = np.abs(w)

    # sign-change zeros refined by Brent on the centred representative
    zeros = []
    for i in np.nonzero((w[:-1] * w[1:] < 0) & (absf[:-1] + absf[1:] < np.pi / 2))[0]:
        zeros.append(brentq(lambda y: float(wrap_half(fs(y))), xs[i], xs[i + 1], xtol=1e-16))
    i_min = int(np.argmin(absf))
    a, b = xs[max(i_min - 1, 0)], xs[min(i_min + 1, len(xs) - 1)]
    x_min, min_abs = _refine_min(lambda y: float(np.abs(wrap_half(fs(y)))), a, b)
    min_abs = min(min_abs, float(absf[i_min]))

    tangential = False
    if zeros:
        zero_count = len(zeros)
        X = [zeros[0], zeros[-1]]
        min_abs = 0.0
    elif min_abs < tol_tangent:
        zero_count = 1
        tangential = True
        X = [x_min, x_min]
    else:
        zero_count = 0
        X = [x_min, x_min]

    # derivative zeros: x3 the local minimum near -pi, x4 the local maximum near x1
    d1 = np.gradient(f, xs)
    x3 = x4 = None
    for i in np.nonzero(d1[:-1] * d1[1:] < 0)[0]:
        lo_, hi_ = xs[max(i - 1, 0)], xs[min(i + 2, len(xs) - 1)]
        if d1[i] < 0 < d1[i + 1]:
            xc, _ = _refine_min(lambda y: float(fs(y)), lo_, hi_)
            if x3 is None or abs(xc - X[0]) < abs(x3 - X[0]):
                x3 = xc
        else:
            xc, _ = _refine_min(lambda y: -float(fs(y)), lo_, hi_)
            if x4 is None or abs(xc - X[0]) < abs(x4 - X[0]):
                x4 = xc
    f_x3 = None if x3 is None else float(fs(x3))
    bound = C * dec.l ** -0.75
    checks = {
        "x1_close_to_0": bool(abs(X[0]) < bound),
        "x2_close_to_d": bool(abs(X[1] - dec.d) < bound),
        "x3_min_above_minus_pi": bool(f_x3 is not None and f_x3 > -np.pi),
        "zero_order": bool(zero_count < 2 or 0 < X[0] <= X[1] < dec.d),
    }
    return {"x1": float(X[0]), "x2": float(X[1]), "x3": x3, "x4": x4, "f_x3": f_x3,
            "zero_count": zero_count, "tangential": tangential, "min_abs_value": float(min_abs),
            "checks": checks}


def _has_two_crossings(dec):
    w = wrap_half(dec.evaluate(dec.grid()))
    cross = (w[:-1] * w[1:] < 0) & (np.abs(w[:-1]) + np.abs(w[1:]) < np.pi / 2)
    return int(cross.sum()) >= 2


def bifurcation_threshold(f1, f2, l, r, d_hi=None, iterations=80):
    """Bisect the offset d at which the two zeros of the composition merge; returns (below, above)."""
    d_hi = 2 * r / 3 if d_hi is None else d_hi
    lo, hi = 0.0, d_hi

    def two(d):
        return _has_two_crossings(Type3Decomposition(f1, f2, l, d, r))

    if two(lo) or not two(hi):
        raise NotType3("no zero bifurcation inside the offset range")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if two(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi
