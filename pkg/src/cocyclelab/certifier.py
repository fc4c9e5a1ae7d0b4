"""Numerical uniform-hyperbolicity certificates: block chaining and direct growth testing."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from . import cocycle as cc
from .directions import contraction_angle, expansion_angle, wrap_half
from .errors import HypothesisFailed, SeparationTooSmall
from .frequency import Arc, expand, hitting_time_bound

BLOCK_TOL = 1e-9
MARGIN_TOL = 1e-9  # relative shortfall below which a failed growth check is inconclusive


@dataclass
class ChainWitness:
    beta: float  # smallest block norm
    gamma: float  # smallest |tan(s(B_k) - u(B_{k-1}))|
    boundaries: list  # cumulative step counts when blocks came from an orbit, else block indices
    rho_bound: float
    log_rho_bound: float
    cone_slope: float  # invariant cone half-width (tangent) around the expanding directions
    min_prefix_ratio: float  # smallest measured ||prefix_n||^(1/n)
    prefix_checked: int
    validated: bool
    beta_gamma_factor: float  # rho_bound / (beta * gamma)

    def to_dict(self):
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in asdict(self).items()}


@dataclass
class UHCertificate:
    spec_summary: dict
    param: float
    method: str  # "ueg" or "chain"
    n_used: int
    c_wit: float
    rho_wit: float
    grid_density: int
    status: str  # certified | refuted-at-budget | inconclusive
    details: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.status == "certified"

    def to_dict(self):
        return asdict(self)


def spec_summary(spec):
    coupling = spec.coupling if isinstance(spec.coupling, (int, float)) else getattr(spec.coupling, "name", "function")
    return {"family": spec.family, "function": spec.function.name, "coupling": coupling, "k": spec.k}


# ---------------------------------------------------------------- chaining of large blocks

def _as_scaled(blocks):
    """(log_norms, units) from an array of matrices or a sequence of ScaledProducts/(log, unit) pairs."""
    if isinstance(blocks, np.ndarray) and blocks.ndim == 3:
        nr = cc.opnorm(blocks)
        return np.log(nr), blocks / nr[:, None, None]
    logs, units = [], []
    for b in blocks:
        if isinstance(b, cc.ScaledProduct):
            logs.append(float(b.log_norm))
            units.append(np.asarray(b.unit, float))
        elif isinstance(b, tuple):
            logs.append(float(b[0]))
            units.append(np.asarray(b[1], float))
        else:
            a = np.asarray(b, float)
            nr = float(cc.opnorm(a))
            logs.append(math.log(nr))
            units.append(a / nr)
    return np.array(logs), np.array(units).reshape(-1, 2, 2)


def cone_slope(log_beta, gamma):
    """Smallest T with (1 + gamma T) / (gamma - T) <= beta^2 T, or None if there is none."""
    if math.isinf(gamma):
        return 0.0
    ib2 = math.exp(-2.0 * log_beta)
    b = gamma * (1.0 - ib2)
    disc = b * b - 4.0 * ib2
    if disc < 0 or b <= 0:
        return None
    return 2.0 * ib2 / (b + math.sqrt(disc))


def block_growth(blocks, tol=BLOCK_TOL, prefix_check=20, boundaries=None):
    """Lower growth rate for products of blocks whose contraction and expansion directions stay apart.

    Every image of the top input direction of the first block stays in a cone of slope T around
    the expanding direction of the last block, so each later block stretches it by at least
    beta_k / sqrt(1 + (beta^2 T)^2).
    """
    logs, units = _as_scaled(blocks)
    n = len(logs)
    if n == 0:
        raise ValueError("need at least one block")
    if np.any(logs <= math.log1p(tol)):
        raise HypothesisFailed("a block does not expand: no contraction direction")
    log_beta = float(logs.min())
    beta = math.exp(min(log_beta, 700.0))
    s = contraction_angle(units)
    u = expansion_angle(units)
    if n > 1:
        sep = np.abs(wrap_half(s[1:] - u[:-1]))
        with np.errstate(divide="ignore"):
            gamma = float(np.min(np.where(sep >= np.pi / 2 - 1e-15, np.inf, np.abs(np.tan(sep)))))
    else:
        gamma = math.inf
    threshold = 2.0 / (beta - 1.0 / beta)
    if not gamma > threshold:
        raise HypothesisFailed(f"gamma = {gamma:.4g} does not exceed 2/(beta - 1/beta) = {threshold:.4g}")
    T = cone_slope(log_beta, gamma)
    if T is None:
        raise HypothesisFailed("no invariant cone for the measured beta and gamma")
    # log K with K = beta^2 T computed without overflow
    log_K = 2.0 * log_beta + math.log(T) if T > 0 else -math.inf
    loss = 0.5 * np.logaddexp(0.0, 2.0 * log_K) if math.isfinite(log_K) else 0.0
    per_block = logs.copy()
    per_block[1:] -= loss
    partial = np.cumsum(per_block) / np.arange(1, n + 1)
    log_rho = float(partial.min())
    # brute-force check of every prefix up to prefix_check blocks
    m = min(n, prefix_check) if prefix_check else n
    P = cc.identity()
    acc = 0.0
    ratios = []
    for k in range(m):
        P = cc.mul(units[k], P)
        nr = float(cc.opnorm(P))
        P = P / nr
        acc += logs[k] + math.log(nr)
        ratios.append(acc / (k + 1))
    min_ratio = float(min(ratios))
    validated = all(r > log_rho - 1e-12 * max(1.0, abs(log_rho)) for r in ratios)
    rho = math.exp(min(log_rho, 700.0))
    factor = math.exp(log_rho - log_beta - math.log(gamma)) if math.isfinite(gamma) else 0.0
    return ChainWitness(beta, gamma, list(boundaries) if boundaries is not None else list(range(n)),
                        rho, log_rho, T, math.exp(min(min_ratio, 700.0)), m, bool(validated), factor)


# ---------------------------------------------------------------- direct growth test

def default_n_list(max_power=12):
    ns = [2**j for j in range(max_power + 1)]
    return ns + [-n for n in ns]


def _critical_phases(spec, alpha, params, xs, m, s_fwd, u_bwd, per_row=16, iterations=44):
    """Zeros of g_m = s_m - u_m per row by vectorised bisection, shifted back by m steps."""
    g = wrap_half(s_fwd - u_bwd)
    gn = np.roll(g, -1, axis=-1)
    cross = (g * gn <= 0) & (np.abs(g) + np.abs(gn) < np.pi / 2)
    rows, cols = [], []
    for i in range(g.shape[0]):
        idx = np.nonzero(cross[i])[0]
        if len(idx) > per_row:
            idx = idx[np.argsort(np.abs(g[i, idx]))[:per_row]]
        rows.extend([i] * len(idx))
        cols.extend(idx.tolist())
    if not rows:
        return None
    rows = np.array(rows)
    cols = np.array(cols)
    h = xs[rows, (cols + 1) % xs.shape[1]] - xs[rows, cols]
    h = np.mod(h, 1.0)
    lo = xs[rows, cols].copy()
    hi = lo + h
    sign_lo = np.sign(g[rows, cols])
    amap = cc.make_map(spec.with_param(params[rows]))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        f = cc.products(amap, alpha, mid, [m], 1)[m].unit
        b = cc.products(amap, alpha, mid, [m], -1)[m].unit
        gm = wrap_half(contraction_angle(f) - contraction_angle(b))
        left = np.sign(gm) == sign_lo
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    return rows, np.mod(0.5 * (lo + hi) - m * alpha, 1.0)


def ueg_batch(spec, alpha, params, x_grid_size=2048, n_list=None, c=1.0, rho=1.05, augment=True,
              per_row=16, augment_max=64):
    """Growth test for a batch of parameter values sharing the phase grid; returns per-row results.

    Besides the grid, every zero x* of g_m = s_m - u_m is tested through the phase x* - m alpha,
    where ||A_{2m}|| collapses when the expanding image meets the contracting input. The collapse
    is visible in double precision only while ||A_m||^2 stays below about 1e10 * c rho^(2m), so
    augmentation runs at m = n/2 for the n in n_list up to augment_max.
    """
    params = np.atleast_1d(np.asarray(params, dtype=float))
    n_list = default_n_list() if n_list is None else list(n_list)
    if not rho > 1:
        raise ValueError("rho must exceed 1")
    pos = sorted({n for n in n_list if n > 0})
    neg = sorted({-n for n in n_list if n < 0})
    if not pos or not neg:
        raise ValueError("n_list must contain both signs")
    nrow = len(params)
    base = np.arange(x_grid_size) / x_grid_size
    grid = np.broadcast_to(base, (nrow, x_grid_size)).copy()
    amap = cc.make_map(spec.with_param(params[:, None]))
    n_max = max(pos[-1], neg[-1])
    extra_rows, extra_x = [], []
    if augment:
        ms = sorted({n // 2 for n in pos + neg if 2 <= n <= augment_max})
        if ms:
            fwd = cc.products(amap, alpha, grid, ms, 1)
            bwd = cc.products(amap, alpha, grid, ms, -1)
            for m in ms:
                found = _critical_phases(spec, alpha, params, grid, m, contraction_angle(fwd[m].unit),
                                         contraction_angle(bwd[m].unit), per_row)
                if found is not None:
                    extra_rows.append(found[0])
                    extra_x.append(found[1])
    xs = grid
    n_aug = 0
    if extra_rows:
        rows = np.concatenate(extra_rows)
        extra = np.concatenate(extra_x)
        counts = np.bincount(rows, minlength=nrow)
        n_aug = int(counts.max())
        pad = np.repeat(base[:1], nrow * n_aug).reshape(nrow, n_aug)
        slot = np.zeros(nrow, dtype=int)
        for r, x in zip(rows, extra):
            pad[r, slot[r]] = x
            slot[r] += 1
        xs = np.concatenate([grid, pad], axis=1)
    log_c = math.log(c)
    log_rho = math.log(rho)
    worst = np.full(nrow, np.inf)  # smallest log_norm - log(c rho^n) over tested (x, n)
    min_rate = np.full(nrow, np.inf)
    for sign, counts in ((1, pos), (-1, neg)):
        res = cc.products(amap, alpha, xs, counts, sign)
        for n in counts:
            ln = res[n].log_norm
            target = log_c + n * log_rho
            worst = np.minimum(worst, (ln - target).min(axis=1) / max(1.0, abs(target)))
            min_rate = np.minimum(min_rate, ln.min(axis=1) / n)
    # a shortfall at rounding level neither certifies nor refutes
    status = np.where(worst >= 0, "certified",
                      np.where(worst < -MARGIN_TOL, "refuted-at-budget", "inconclusive"))
    return {"status": status, "min_rate": min_rate, "n_augmented": n_aug, "n_max": n_max}


def ueg_test(spec, alpha, param, x_grid_size=2048, n_list=None, c=1.0, rho=1.05, augment=True,
             augment_max=64):
    """Check ||A_n(x)|| >= c rho^|n| on a phase grid (plus critical phases) for every n in n_list."""
    out = ueg_batch(spec, alpha, [param], x_grid_size, n_list, c, rho, augment, augment_max=augment_max)
    return UHCertificate(spec_summary(spec), float(param), "ueg", int(out["n_max"]), float(c), float(rho),
                         int(x_grid_size), str(out["status"][0]),
                         {"min_growth_rate": float(out["min_rate"][0]),
                          "critical_phases_added": out["n_augmented"]})


# ---------------------------------------------------------------- chained certification

@dataclass(frozen=True)
class ChainConfig:
    """Safety exponents of the chaining argument, with the defaults the argument uses."""
    final_exponent: float = 0.25  # certified rate lambda^(final_exponent M)
    block_exponent: float = 0.5  # each return block must have norm >= lambda^(block_exponent r)


def _return_blocks(amap, alpha, xs, interval, M, min_return):
    """Per phase: entry times into the interval and scaled block products between them."""
    K = len(xs)
    y = xs.copy()
    in_I = interval.contains(y)
    last = np.where(in_I, 0, -1)
    first = last.copy()
    P = cc.identity((K,))
    acc = np.zeros(K)
    pre_log = np.zeros(K)
    blocks = [[] for _ in range(K)]
    bounds = [[0] if in_I[i] else [] for i in range(K)]
    for j in range(M):
        A = amap(xs + j * alpha)
        P = cc.mul(A, P)
        nr = cc.opnorm(P)
        P = P / nr[:, None, None]
        acc = acc + np.log(nr)
        pos = np.mod(xs + (j + 1) * alpha, 1.0)
        hit = interval.contains(pos) & ((last < 0) | (j + 1 - last >= min_return))
        for i in np.nonzero(hit)[0]:
            if last[i] < 0:
                pre_log[i] = acc[i]
                first[i] = j + 1
            else:
                blocks[i].append((float(acc[i]), P[i].copy()))
            bounds[i].append(j + 1)
        if hit.any():
            P[hit] = np.eye(2)
            acc[hit] = 0.0
            last = np.where(hit, j + 1, last)
    suffix_log = acc
    return first, last, pre_log, blocks, bounds, suffix_log


def chain_certify(spec, alpha, param, interval, gap, M, x_grid_size=256, min_return=1, config=None,
                  cf_depth=30):
    """Certify ||A_M(x)|| >= lambda^(M/4) by chaining return blocks to the interval.

    The orbit of each test phase is cut at its returns to the interval. Block growth comes from
    block_growth; the prefix before the first entry costs at most lambda^(-M_1) and the suffix after
    the last return at most the largest one-step norm to the power sqrt(M).
    """
    config = config or ChainConfig()
    if not gap > 0:
        raise SeparationTooSmall("gap must be positive")
    interval = interval if isinstance(interval, Arc) else Arc(*interval)
    lam = float(spec.coupling)
    log_lam = math.log(lam)
    pspec = spec.with_param(float(param))
    amap = cc.make_map(pspec)
    xs = np.arange(x_grid_size) / x_grid_size
    step_log = float(np.log(cc.opnorm(amap(np.arange(4096) / 4096))).max())
    cf = expand(alpha, cf_depth)
    M1 = 0 if interval.length >= 1.0 else hitting_time_bound(alpha, cf, interval.length)
    first, last, pre_log, blocks, bounds, suffix_log = _return_blocks(amap, alpha, xs, interval, M, min_return)
    gaps = [np.diff(b) for b in bounds if len(b) > 1]
    r_max = int(max((g.max() for g in gaps), default=0))
    M2 = r_max**2
    M_floor = max(M1**2, M2)
    details = {"M1": M1, "M2": M2, "max_return": r_max, "interval": [interval.start, interval.length]}
    summary = spec_summary(spec)
    if M <= M_floor:
        details["reason"] = f"M must exceed max(M1^2, M2) = {M_floor}"
        return UHCertificate(summary, float(param), "chain", int(M), lam ** -M1, lam**config.final_exponent,
                             x_grid_size, "inconclusive", details)
    worst = math.inf
    log_beta_min = math.inf
    gamma_min = math.inf
    for i in range(x_grid_size):
        if first[i] < 0 or len(blocks[i]) == 0:
            details["reason"] = "a test orbit has no complete return block"
            return UHCertificate(summary, float(param), "chain", int(M), lam ** -M1, lam**config.final_exponent,
                                 x_grid_size, "inconclusive", details)
        log_beta = min(b[0] for b in blocks[i])
        lengths = np.diff(bounds[i])[: len(blocks[i])]
        if np.any(np.array([b[0] for b in blocks[i]]) < config.block_exponent * lengths * log_lam):
            details["reason"] = "a return block grows slower than the configured block exponent"
            return UHCertificate(summary, float(param), "chain", int(M), lam ** -M1, lam**config.final_exponent,
                                 x_grid_size, "inconclusive", details)
        if math.tan(min(gap, np.pi / 2 - 1e-12)) <= 2.0 / (math.exp(log_beta) - math.exp(-log_beta)):
            raise SeparationTooSmall("gap is not large against the inverse block norms")
        wit = block_growth(blocks[i], prefix_check=len(blocks[i]), boundaries=bounds[i])
        log_beta_min = min(log_beta_min, log_beta)
        gamma_min = min(gamma_min, wit.gamma)
        n_blk = len(blocks[i])
        # prefix and suffix enter as inverse norms; both are at most the one-step norm to their length
        lower = n_blk * wit.log_rho_bound - min(pre_log[i], first[i] * step_log) \
            - min(suffix_log[i], (M - last[i]) * step_log)
        worst = min(worst, lower)
    target = config.final_exponent * M * log_lam
    details.update({"log_lower_bound": worst, "log_target": target, "beta_min": math.exp(min(log_beta_min, 700)),
                    "gamma_min": gamma_min, "one_step_log_norm": step_log})
    status = "certified" if worst >= target else "inconclusive"
    return UHCertificate(summary, float(param), "chain", int(M), lam ** -M1, lam**config.final_exponent,
                         x_grid_size, status, details)
