"""Most-contraction directions on RP^1 = R/pi Z and the fields s_n, u_n, g_n = s_n - u_n."""
from __future__ import annotations

from dataclasses import dataclass
import csv

import numpy as np

from . import cocycle as cc
from .errors import BranchAmbiguity, NearConformal
from .frequency import Arc

TOL_ISO = 1e-8
PI = np.pi


def rp1(angle):
    """Representative of an angle mod pi in [0, pi)."""
    a = np.mod(np.asarray(angle, dtype=float), PI)
    return np.where(a >= PI, 0.0, a) + 0.0


def rp1_dist(a, b):
    d = np.abs(rp1(a) - rp1(b))
    return np.minimum(d, PI - d)


def wrap_half(angle):
    """Representative of an angle mod pi in [-pi/2, pi/2)."""
    a = np.asarray(angle, dtype=float)
    return a - PI * np.floor(a / PI + 0.5)


def conformal_gap(A):
    """1 - sigma_min / sigma_max."""
    smax = cc.opnorm(A)
    return 1.0 - np.abs(cc.det(A)) / (smax * smax)


def contraction_angle(A):
    """Right singular direction of the smaller singular value, elementwise, without checks."""
    G00 = A[..., 0, 0] ** 2 + A[..., 1, 0] ** 2
    G11 = A[..., 0, 1] ** 2 + A[..., 1, 1] ** 2
    G01 = A[..., 0, 0] * A[..., 0, 1] + A[..., 1, 0] * A[..., 1, 1]
    top = 0.5 * np.arctan2(2.0 * G01, G00 - G11)
    return rp1(top + 0.5 * PI)


def expansion_angle(A):
    """Left singular direction of the larger singular value; equals the contraction angle of A^{-1}."""
    H00 = A[..., 0, 0] ** 2 + A[..., 0, 1] ** 2
    H11 = A[..., 1, 0] ** 2 + A[..., 1, 1] ** 2
    H01 = A[..., 0, 0] * A[..., 1, 0] + A[..., 0, 1] * A[..., 1, 1]
    return rp1(0.5 * np.arctan2(2.0 * H01, H00 - H11))


def most_contraction(A, tol_iso=TOL_ISO):
    A = np.asarray(A, dtype=float)
    if np.any(conformal_gap(A) < tol_iso):
        raise NearConformal("singular values within tolerance; contraction direction undefined")
    out = contraction_angle(A)
    return float(out) if out.ndim == 0 else out


def unit_vector(angle):
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def sn_un(spec, alpha, x, t, n_plus, n_minus, tol_iso=TOL_ISO):
    """s from A_{n_plus}(x, t) and u from A_{-n_minus}(x, t), using the unit factors."""
    amap = cc.make_map(spec.with_param(t))
    fwd = cc.iterate(amap, alpha, x, n_plus).unit
    bwd = cc.iterate(amap, alpha, x, -n_minus).unit
    return most_contraction(fwd, tol_iso), most_contraction(bwd, tol_iso)


def products_at(amap, alpha, x, n, sign):
    """Unit factors and log norms of A_{sign*n}(x) where n may vary elementwise."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(n)

    def step(j):
        return amap(x + j * alpha) if sign > 0 else cc.inv(amap(x - (j + 1) * alpha))

    first = step(0)
    shape = np.broadcast(first[..., 0, 0], n).shape
    n = np.broadcast_to(n, shape)
    unit = cc.identity(shape)
    log_norm = np.zeros(shape)
    P = cc.identity(shape)
    acc = np.zeros(shape)
    nmax = int(n.max()) if n.size else 0
    for j in range(nmax):
        A = first if j == 0 else step(j)
        P = cc.mul(np.broadcast_to(A, shape + (2, 2)), P)
        nr = cc.opnorm(P)
        P = P / nr[..., None, None]
        acc = acc + np.log(nr)
        hit = n == j + 1
        if hit.any():
            unit[hit] = P[hit]
            log_norm[hit] = acc[hit]
    return log_norm, unit


def g_values(spec, alpha, x, t, n_plus, n_minus):
    """Raw s, u (in [0, pi)) and log norms on broadcast arrays of phases and parameters."""
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    amap = cc.make_map(spec.with_param(t))
    lp, Up = products_at(amap, alpha, x, n_plus, 1)
    lm, Um = products_at(amap, alpha, x, n_minus, -1)
    s = contraction_angle(Up)
    u = contraction_angle(Um)
    conf = (conformal_gap(Up) < TOL_ISO) | (conformal_gap(Um) < TOL_ISO)
    return s, u, lp, lm, conf


def lift_rows(g, max_jump=PI / 2):
    """Continuous real branch of g mod pi along the last axis, starting in [-pi/2, pi/2)."""
    g = wrap_half(g)
    steps = wrap_half(np.diff(g, axis=-1))
    if np.any(np.abs(steps) >= max_jump - 1e-12):
        raise BranchAmbiguity("adjacent samples differ by about pi/2; refine the grid")
    return np.concatenate([g[..., :1], g[..., :1] + np.cumsum(steps, axis=-1)], axis=-1)


@dataclass
class DirectionField:
    xs: np.ndarray  # (nt, nx) phases per row
    ts: np.ndarray  # (nt,)
    s_values: np.ndarray
    u_values: np.ndarray
    g_values: np.ndarray  # lifted per row
    n_plus: object
    n_minus: object
    interval: object = None
    param_window: tuple | None = None

    @property
    def dx(self):
        return self.xs[:, 1] - self.xs[:, 0]

    def dg_dx(self):
        return np.stack([np.gradient(row, xr) for row, xr in zip(self.g_values, self.xs)])

    def dg_dt(self):
        """Centered differences across rows; valid when every row uses the same phases."""
        if len(self.ts) < 2:
            raise ValueError("need at least two parameter rows")
        return np.gradient(self.g_values, self.ts, axis=0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "t", "s", "u", "g"])
            for i, t in enumerate(self.ts):
                for j in range(self.xs.shape[1]):
                    w.writerow([repr(float(self.xs[i, j])), repr(float(t)), repr(float(self.s_values[i, j])),
                                repr(float(self.u_values[i, j])), repr(float(self.g_values[i, j]))])


def field_on_rows(spec, alpha, xs, ts, n_plus, n_minus, max_jump=PI / 2):
    """Direction field on per-row phase grids xs (nt, nx) at parameters ts (nt,)."""
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    npl = np.asarray(n_plus).reshape(-1, 1) if np.ndim(n_plus) else n_plus
    nmi = np.asarray(n_minus).reshape(-1, 1) if np.ndim(n_minus) else n_minus
    s, u, _, _, conf = g_values(spec, alpha, xs, ts[:, None], npl, nmi)
    if conf.any():
        raise NearConformal("field contains near-conformal products")
    return DirectionField(xs, ts, s, u, lift_rows(s - u, max_jump), n_plus, n_minus)


def build_field(spec, alpha, interval, param_window, grid_dims, n_plus, n_minus, max_jump=PI / 2):
    """g = s_{n_plus} - u_{n_minus} on a regular (x, t) lattice over an arc and a parameter window."""
    nx, nt = grid_dims
    if nx < 64 or nt < 8:
        raise ValueError("grid_dims must be at least (64, 8)")
    if interval is None or interval.length >= 1.0:
        interval = Arc(0.0, 1.0)
        x_row = np.arange(nx) / nx
    else:
        x_row = interval.start + interval.length * np.arange(nx) / (nx - 1)
    ts = np.linspace(param_window[0], param_window[1], nt)
    xs = np.broadcast_to(x_row, (nt, nx)).copy()
    fld = field_on_rows(spec, alpha, xs, ts, n_plus, n_minus, max_jump)
    fld.interval = interval
    fld.param_window = tuple(param_window)
    return fld
