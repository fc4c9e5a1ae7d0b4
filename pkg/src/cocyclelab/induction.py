"""Multi-scale induction on critical points of g_i = s_{r+} - u_{r-}, run at desk scale.

Level L of an InductionState holds g_{L+1} sampled on the critical intervals I_{L,j}(t)
(the whole circle when L = 0), the critical points c_{L+1,j}(t), the return times used to
build g_{L+1}, the resonance translate k detected at that step and the classification of
g_{L+1} on each interval.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import cocycle as cc
from .classifier import TypeParams, classify, sign_change_zeros, tangential_zeros
from .directions import contraction_angle, expansion_angle, g_values, products_at, wrap_half
from .errors import NotAdmissible
from .frequency import circle_dist, expand, first_overlap_time
from .potential import validate_admissible


@dataclass(frozen=True)
class InductionConfig:
    lam: float = 30.0
    tau: float = 2.1
    epsilon: float = 0.5
    max_level: int = 2
    N: int | None = None  # default: smallest index with q_N >= q_min
    q_min: int = 5
    samples: int = 256  # per critical interval
    classify_radius: float = 0.1  # window for g_1, which lives on the whole circle
    init_grid: int = 4096
    cf_depth: int = 30

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("lambda must exceed 1")
        if not 0 < self.epsilon < 0.5 + 1e-12:
            raise ValueError("epsilon must lie in (0, 1/2]")


@dataclass
class Level:
    index: int
    radius: float  # radius of I_L; 1.0 stands for the whole circle
    centers: np.ndarray  # (nt, 2) centres of the windows the samples live on
    n_plus: np.ndarray  # (nt,)
    n_minus: np.ndarray
    xs: np.ndarray  # (nt, 2, nx)
    g: np.ndarray  # (nt, 2, nx) lifted g_{L+1}
    crit: np.ndarray  # (nt, 2) c_{L+1,j}
    classifications: list
    resonance: list
    ambiguous: np.ndarray
    merged: np.ndarray  # no zero of g_{L+1} near the critical point: the two points have merged
    active: np.ndarray

    def kinds(self):
        return [[c.kind if c is not None else "halted" for c in row] for row in self.classifications]

    def to_dict(self, ts):
        rows = []
        for i, t in enumerate(ts):
            rows.append({
                "t": float(t),
                "critical_points": [float(c) for c in self.crit[i]],
                "return_times": [int(self.n_plus[i]), int(self.n_minus[i])],
                "resonance_k": self.resonance[i],
                "classification": [c.to_dict() if c is not None else {"kind": "halted"}
                                   for c in self.classifications[i]],
                "ambiguous_choice": bool(self.ambiguous[i]),
                "merged": bool(self.merged[i]),
                "active": bool(self.active[i]),
            })
        return {"level": self.index, "interval_radius": float(self.radius), "points": rows}


@dataclass
class InductionState:
    spec: object
    alpha: float
    config: InductionConfig
    cf: object
    N: int
    ts: np.ndarray
    levels: list = field(default_factory=list)

    @property
    def level(self):
        return len(self.levels) - 1

    @property
    def current(self):
        return self.levels[-1]

    def q(self, k):
        return 1 if k < 0 else self.cf.q(k)

    def radius(self, i):
        """Radius of I_i: 1 / (2^i q_{N+i-1}^{2 tau}); the circle for i = 0."""
        if i == 0:
            return 1.0
        return 1.0 / (2**i * self.cf.q(self.N + i - 1) ** (2 * self.config.tau))

    def to_trace(self):
        return {"N": self.N, "q_N": self.cf.q(self.N), "tau": self.config.tau,
                "lambda": self.config.lam, "levels": [lv.to_dict(self.ts) for lv in self.levels]}


def choose_N(cf, q_min=5):
    for k, (_, q) in enumerate(cf.convergents):
        if q >= q_min:
            return k
    raise ValueError("continued fraction too short for the requested q_min")


# ---------------------------------------------------------------- helpers

def _lift_windows(s, u):
    return np.unwrap(wrap_half(s - u), period=np.pi, axis=-1)


def _g_field(spec, alpha, xs, ts, n_plus, n_minus):
    """Lifted g on windows xs (nt, 2, nx) with per-t step counts."""
    nt, nj, nx = xs.shape
    s, u, lp, lm, _ = g_values(spec, alpha, xs.reshape(nt, nj * nx), ts[:, None],
                               np.asarray(n_plus)[:, None], np.asarray(n_minus)[:, None])
    return _lift_windows(s.reshape(nt, nj, nx), u.reshape(nt, nj, nx))


def _g1_scalar(spec, alpha, t):
    amap = cc.make_map(spec.with_param(t))

    def g(x):
        A = amap(np.asarray(x, dtype=float))
        s = contraction_angle(A)
        u = expansion_angle(amap(np.asarray(x, dtype=float) - alpha))
        return float(wrap_half(s - u))
    return g


def _critical_points_g1(spec, alpha, t, grid):
    """Zeros of g_1(., t) on the circle ordered (increasing branch, decreasing branch)."""
    xs = np.arange(grid) / grid
    s, u, _, _, _ = g_values(spec, alpha, xs, t, 1, 1)
    g = wrap_half(s - u)
    gn = np.roll(g, -1)
    idx = np.nonzero(((g * gn < 0) | (g == 0)) & (np.abs(g) + np.abs(gn) < np.pi / 2))[0]
    fun = _g1_scalar(spec, alpha, t)
    up, down = [], []
    for i in idx:
        a, b = xs[i], xs[i] + 1.0 / grid
        z = a if g[i] == 0 else brentq(fun, a, b, xtol=1e-15)
        (up if gn[i] > g[i] else down).append(z % 1.0)
    if len(up) + len(down) > 2:
        raise NotAdmissible("g_1 has more than two zeros")
    if up and down:
        return up[0], down[0], False
    i = int(np.argmin(np.abs(g)))
    res = minimize_scalar(lambda y: abs(fun(y)), bounds=(xs[i] - 1.0 / grid, xs[i] + 1.0 / grid),
                          method="bounded", options={"xatol": 1e-14})
    c = float(res.x) % 1.0
    return c, c, True


def _pick_critical(xs, g, previous, tol):
    """Minimizer of |g| mod pi nearest to the previous critical point (the x2 convention)."""
    cands = sign_change_zeros(xs, g) + tangential_zeros(xs, g)
    if cands:
        d = [abs(c - previous) for c in cands]
        order = np.argsort(d)
        best = cands[order[0]]
        ambiguous = len(cands) > 1 and abs(d[order[1]] - d[order[0]]) < tol
        return best, False, ambiguous
    w = np.abs(wrap_half(g))
    i = int(np.argmin(w))
    if 0 < i < len(xs) - 1:
        # parabolic refinement of the minimum of |g|
        y0, y1, y2 = w[i - 1], w[i], w[i + 1]
        den = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den > 0 else 0.0
        return float(xs[i] + shift * (xs[1] - xs[0])), True, False
    return float(xs[i]), True, False


def _windows(centers, radius, nx):
    return centers[:, :, None] + radius * np.linspace(-1.0, 1.0, nx)[None, None, :]


# ---------------------------------------------------------------- init / step

def init(spec, alpha, config, param_window, nt=8, ts=None):
    if spec.family in ("polar", "schrodinger"):
        rep = validate_admissible(spec.function)
        if not rep.admissible:
            raise NotAdmissible(f"potential {spec.function.name} is not admissible")
    cf = expand(alpha, config.cf_depth)
    N = config.N if config.N is not None else choose_N(cf, config.q_min)
    ts = np.linspace(param_window[0], param_window[1], nt) if ts is None else np.asarray(ts, float)
    state = InductionState(spec, alpha, config, cf, N, ts)
    crit = np.zeros((len(ts), 2))
    merged = np.zeros(len(ts), bool)
    for i, t in enumerate(ts):
        c1, c2, m = _critical_points_g1(spec, alpha, t, config.init_grid)
        crit[i] = c1, c2
        merged[i] = m
    w = config.classify_radius
    centers = crit.copy()
    close = circle_dist(crit[:, 0] - crit[:, 1]) < w
    # nearby critical points share one window centred between them
    mid = crit[:, 0] + 0.5 * wrap_half(np.pi * (crit[:, 1] - crit[:, 0])) / np.pi
    centers[close] = mid[close, None]
    ones = np.ones(len(ts), dtype=int)
    xs = _windows(centers, w, config.samples)
    g = _g_field(spec, alpha, xs, ts, ones, ones)
    params = TypeParams(r=w)
    cls = [[classify(xs[i, j], g[i, j], params) for j in range(2)] for i in range(len(ts))]
    lv = Level(0, 1.0, centers, ones, ones.copy(), xs, g, crit, cls, [None] * len(ts),
               np.zeros(len(ts), bool), merged, np.array([c[0].kind != "unclassified" for c in cls]))
    state.levels.append(lv)
    return state


def resonant_translates(c1, c2, radius, alpha, q):
    """All k with 1 <= |k| < q such that B(c2, radius) meets B(c1, radius) + k alpha."""
    ks = [k for k in range(-(q - 1), q) if k != 0 and circle_dist(c2 - c1 - k * alpha) < 2 * radius]
    return ks


def step(state):
    cur = state.current
    L = cur.index
    if L >= state.config.max_level:
        raise ValueError("maximum level reached")
    cfg = state.config
    R = state.radius(L + 1)
    q = state.cf.q(state.N + L)
    nt = len(state.ts)
    centers = cur.crit.copy()
    n_plus = np.zeros(nt, dtype=int)
    n_minus = np.zeros(nt, dtype=int)
    for i in range(nt):
        n_plus[i] = first_overlap_time(state.alpha, centers[i], R, q, "forward")
        n_minus[i] = first_overlap_time(state.alpha, centers[i], R, q, "backward")
    xs = _windows(centers, R, cfg.samples)
    g = _g_field(state.spec, state.alpha, xs, state.ts, n_plus, n_minus)
    params = TypeParams(r=R)
    crit = centers.copy()
    cls, res = [], []
    amb = np.zeros(nt, bool)
    merged = np.zeros(nt, bool)
    active = cur.active.copy()
    for i in range(nt):
        ks = resonant_translates(centers[i, 0], centers[i, 1], R, state.alpha, q)
        res.append(ks[0] if ks else None)
        if not active[i]:
            cls.append([None, None])
            continue
        row = []
        for j in range(2):
            c = classify(xs[i, j], g[i, j], params, resonant=bool(ks))
            row.append(c)
            x_new, no_zero, ambiguous = _pick_critical(xs[i, j], g[i, j], centers[i, j], 1e-3 * R)
            crit[i, j] = x_new
            merged[i] |= no_zero
            amb[i] |= ambiguous
        cls.append(row)
        if any(c.kind == "unclassified" for c in row):
            active[i] = False
    lv = Level(L + 1, R, centers, n_plus, n_minus, xs, g, crit, cls, res, amb, merged, active)
    state.levels.append(lv)
    return state


def run(spec, alpha, config, param_window, nt=8, ts=None):
    state = init(spec, alpha, config, param_window, nt, ts)
    while state.level < config.max_level:
        step(state)
    return state


def resonant_parameter(spec, alpha, k, window, grid=256, init_grid=1024):
    """A parameter t in window where c_{1,2}(t) - c_{1,1}(t) = k alpha mod 1 (level-1 resonance)."""
    def offset(t):
        c1, c2, _ = _critical_points_g1(spec, alpha, t, init_grid)
        return float(wrap_half(np.pi * (c2 - c1 - k * alpha)) / np.pi)

    ts = np.linspace(window[0], window[1], grid)
    vals = np.array([offset(t) for t in ts])
    for i in np.nonzero(vals[:-1] * vals[1:] < 0)[0]:
        if abs(vals[i]) + abs(vals[i + 1]) < 0.25:
            return brentq(offset, ts[i], ts[i + 1], xtol=1e-14)
    return None


# ---------------------------------------------------------------- log-scale direction shifts

def _rotation_svd(unit):
    """Rotations U, V with unit = U diag(1, sigma) V^T."""
    phi_u = expansion_angle(unit)
    phi_v = contraction_angle(unit) - np.pi / 2
    U = cc.rotation(phi_u)
    V = cc.rotation(phi_v)
    # align signs so that unit . V e1 = +U e1
    col = cc.mul(unit, V)[..., :, 0]
    flip = (col * U[..., :, 0]).sum(-1) < 0
    V = np.where(flip[..., None, None], -V, V)
    return U, V


def log_direction_shift(head_log_norm, head_unit, tail_unit):
    """log|delta| and sign(delta) for delta = s(T H) - s(H), robust when ||H|| is astronomically large.

    With H = U diag(a, 1/a) V^T and G = (T U)^T (T U), the shift is
    (1/2) atan2(2 G12, a^2 G11 - a^-2 G22).
    """
    U, _ = _rotation_svd(head_unit)
    C = cc.mul(tail_unit, U)
    G11 = C[..., 0, 0] ** 2 + C[..., 1, 0] ** 2
    G22 = C[..., 0, 1] ** 2 + C[..., 1, 1] ** 2
    G12 = C[..., 0, 0] * C[..., 0, 1] + C[..., 1, 0] * C[..., 1, 1]
    two_la = 2.0 * np.asarray(head_log_norm, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        small = two_la + np.log(G11) < 600.0
        p = np.where(small, np.exp(np.minimum(two_la, 600.0)) * G11, 1.0)
        rr = np.where(small, np.exp(-np.minimum(two_la, 600.0)) * G22, 0.0)
        theta = 0.5 * np.arctan2(2 * G12, p - rr)
        log_direct = np.log(np.abs(theta))
        log_asym = np.log(np.abs(G12)) - np.log(G11) - two_la
    log_abs = np.where(small, log_direct, log_asym)
    sign = np.where(small, np.sign(theta), np.sign(G12))
    return log_abs, sign


def _signed_log_sub(la, sa, lb, sb):
    """log|x - y| for x = sa e^la, y = sb e^lb."""
    la, lb = np.asarray(la, float), np.asarray(lb, float)
    same = sa * sb > 0
    hi, lo = np.maximum(la, lb), np.minimum(la, lb)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = hi + np.log1p(-np.exp(lo - hi))
        summ = hi + np.log1p(np.exp(lo - hi))
    out = np.where(same, diff, summ)
    out = np.where(sa == 0, lb, out)
    return np.where(sb == 0, la, out)


def _shift_for(spec, alpha, x, t, n1, n2, sign):
    """log|d|, sign(d) for d = s(A_{sign*n2}(x)) - s(A_{sign*n1}(x)), n2 >= n1, elementwise n."""
    amap = cc.make_map(spec.with_param(t))
    l1, U1 = products_at(amap, alpha, x, n1, sign)
    shift = np.broadcast_to(n1, np.shape(l1)) * alpha * sign
    _, T = products_at(amap, alpha, np.asarray(x) + shift, np.asarray(n2) - np.asarray(n1), sign)
    return log_direction_shift(l1, U1, T)


def log_g_difference(spec, alpha, x, t, old_n, new_n):
    """log|g_new(x) - g_old(x)| with g = s_{n+} - u_{n-}, computed without cancellation."""
    (op, om), (np_, nm) = old_n, new_n
    ls, ss = _shift_for(spec, alpha, x, t, op, np_, 1)
    lu, su = _shift_for(spec, alpha, x, t, om, nm, -1)
    return _signed_log_sub(ls, ss, lu, su)


# ---------------------------------------------------------------- estimates

def first_entry_times(alpha, xs, centers, radius, min_time, sign, cap=10**7, chunk=4096):
    """Per point, smallest n >= min_time with x + sign n alpha in the union of B(c_j, radius)."""
    xs = np.asarray(xs, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == xs.ndim:
        # one row of centres per leading index: repeat it for every point of the row
        centers = np.broadcast_to(centers[..., None, :], xs.shape + centers.shape[-1:])
    else:
        centers = np.broadcast_to(centers, xs.shape + centers.shape[-1:])
    out = np.full(xs.shape, -1, dtype=np.int64)
    n0 = int(min_time)
    todo = out < 0
    while todo.any() and n0 <= cap:
        ns = np.arange(n0, n0 + chunk, dtype=float)
        shift = sign * np.mod(ns * alpha, 1.0)
        pos = xs[todo][:, None] + shift[None, :]
        cen = centers[todo]
        hit = np.zeros(pos.shape, bool)
        for j in range(cen.shape[-1]):
            hit |= circle_dist(pos - cen[:, j:j + 1]) < radius
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        vals = out[todo]
        vals[any_hit] = n0 + first[any_hit]
        out[todo] = vals
        todo = out < 0
        n0 += chunk
    return out


def _log_lambda(spec, config):
    if isinstance(spec.coupling, (int, float)):
        return math.log(float(spec.coupling))
    return math.log(config.lam)


def _dg_dt(state, lv, h=1e-7):
    nt = len(state.ts)
    gp = _g_field(state.spec, state.alpha, lv.xs, state.ts + h, lv.n_plus, lv.n_minus)
    gm = _g_field(state.spec, state.alpha, lv.xs, state.ts - h, lv.n_plus, lv.n_minus)
    return wrap_half(gp - gm) / (2 * h) if nt else gp


def verify_estimates(state, samples=64, fd_step=1e-7):
    """Check the per-level estimates on sample grids and report findings per level."""
    cfg = state.config
    log_lam = _log_lambda(state.spec, cfg)
    reports = []
    for L, lv in enumerate(state.levels):
        rep = {"level": L}
        active = lv.active
        # sign of the x-slopes at the two critical points, with slopes below r^2 counted as flat
        r_floor = (lv.radius if L > 0 else cfg.classify_radius) ** 2
        prods = []
        for i in range(len(state.ts)):
            if not active[i] or lv.merged[i]:
                continue
            slopes = []
            for j in range(2):
                d1 = np.gradient(lv.g[i, j], lv.xs[i, j])
                s = float(np.interp(lv.crit[i, j], lv.xs[i, j], d1))
                slopes.append(0.0 if abs(s) < r_floor else s)
            prods.append(slopes[0] * slopes[1])
        rep["slope_product_max"] = max(prods) if prods else None
        rep["slope_product_ok"] = all(p <= 0 for p in prods)

        dgt = _dg_dt(state, lv, fd_step)
        mask = np.broadcast_to(active[:, None, None], dgt.shape)
        rep["dg_dt_min"] = float(dgt[mask].min()) if mask.any() else None
        rep["dg_dt_ok"] = bool(mask.any() and dgt[mask].min() > 0)

        if L >= 1:
            prev = state.levels[L - 1]
            # closeness of consecutive critical functions on the common domain (non-resonant t)
            nonres = np.array([k is None for k in lv.resonance]) & active
            if nonres.any():
                idx = np.nonzero(nonres)[0]
                xs = lv.xs[idx].reshape(len(idx), -1)
                ts = state.ts[idx][:, None]
                old = (prev.n_plus[idx][:, None], prev.n_minus[idx][:, None])
                new = (lv.n_plus[idx][:, None], lv.n_minus[idx][:, None])
                logdiff = log_g_difference(state.spec, state.alpha, xs, ts, old, new)
                worst = logdiff.max(axis=1)
                r_prev = np.minimum(prev.n_plus[idx], prev.n_minus[idx])
                margin = -r_prev * log_lam - worst
                rep["closeness_log_sup"] = [float(v) for v in worst]
                rep["closeness_log_bound"] = [float(-r * log_lam) for r in r_prev]
                rep["closeness_ok"] = bool(np.all(margin >= 0))
            else:
                rep["closeness_ok"] = None
            # norm growth at per-phase return times
            sel = np.linspace(0, cfg.samples - 1, samples).astype(int)
            xs = lv.xs[:, :, sel].reshape(len(state.ts), -1)
            q_prev = state.q(state.N + L - 1)
            ok = True
            worst_ratio = np.inf
            for sign in (1, -1):
                n = first_entry_times(state.alpha, xs, lv.centers, lv.radius, q_prev, sign)
                amap = cc.make_map(state.spec.with_param(state.ts[:, None]))
                ln, _ = products_at(amap, state.alpha, xs, n, sign)
                ratio = ln / (n * log_lam)
                worst_ratio = min(worst_ratio, float(ratio[active].min()) if active.any() else np.inf)
                ok &= bool(np.all(ln[active] > (1 - cfg.epsilon) * n[active] * log_lam))
            rep["norm_growth_ok"] = ok
            rep["norm_growth_min_exponent"] = worst_ratio
            # critical point drift against C lambda^(-3/4 r)
            drift = np.abs(wrap_half(np.pi * (lv.crit - prev.crit)) / np.pi)[active]
            rep["drift_max"] = float(drift.max()) if drift.size else None
        reports.append(rep)
    return reports
