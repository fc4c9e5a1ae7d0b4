"""Spectral ground truth: truncated operators, Lyapunov exponents, gap scans and rho tracking."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from . import cocycle as cc
from .certifier import ueg_batch

ORACLE_TOL = 5e-2


# ---------------------------------------------------------------- truncated operator

@dataclass
class TruncatedOperator:
    """(H u)_n = u_{n+1} + u_{n-1} + lambda v(x + n alpha) u_n on n = -N..N with zero boundary."""
    N: int
    x: float
    diag: np.ndarray

    @classmethod
    def build(cls, v, lam, alpha, x, N):
        n = np.arange(-N, N + 1)
        return cls(N, float(x), lam * np.asarray(v.eval(x + n * alpha), dtype=float))

    @property
    def offdiag(self):
        return np.ones(2 * self.N)

    def bounds(self):
        return float(self.diag.min()) - 2.0, float(self.diag.max()) + 2.0

    def count_below(self, E):
        """Number of eigenvalues strictly below each E (Sturm sequence of LDL^T pivots)."""
        E = np.asarray(E, dtype=float)
        q = self.diag[0] - E
        neg = (q < 0).astype(np.int64)
        tiny = np.finfo(float).tiny
        with np.errstate(over="ignore"):
            for d in self.diag[1:]:
                q = np.where(q == 0, tiny, q)
                q = d - E - 1.0 / q
                neg += q < 0
        return neg

    def eigenvalues(self, tol=1e-10):
        lo_b, hi_b = self.bounds()
        size = len(self.diag)
        k = np.arange(size)
        lo = np.full(size, lo_b)
        hi = np.full(size, hi_b)
        while np.max(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            above = self.count_below(mid) > k
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        return 0.5 * (lo + hi)


def truncate_eigenvalues(v, lam, alpha, x, N, tol=1e-10):
    if N < 8:
        raise ValueError("N must be at least 8")
    return TruncatedOperator.build(v, lam, alpha, x, N).eigenvalues(tol)


def spectral_interval(v, lam, grid=4096):
    xs = np.arange(grid) / grid
    vals = np.asarray(v.eval(xs), dtype=float)
    return -2.0 + lam * float(vals.min()), 2.0 + lam * float(vals.max())


# ---------------------------------------------------------------- Lyapunov exponents

@dataclass
class LyapunovEstimate:
    value: float
    stderr: float
    n_steps: int
    samples: int


def lyapunov_batch(spec, alpha, params, n_steps, x_samples=16, burn_in=100):
    """Estimates per parameter: mean over phases of (log||A_{b+n}|| - log||A_b||)/n, and its standard error."""
    if n_steps < 1000:
        raise ValueError("n_steps must be at least 1000")
    xs = np.arange(x_samples) / x_samples if np.ndim(x_samples) == 0 else np.asarray(x_samples, float)
    params = np.atleast_1d(np.asarray(params, dtype=float))
    amap = cc.make_map(spec.with_param(params[:, None]))
    res = cc.products(amap, alpha, np.broadcast_to(xs, (len(params), len(xs))), [burn_in, burn_in + n_steps])
    rates = (res[burn_in + n_steps].log_norm - res[burn_in].log_norm) / n_steps
    mean = rates.mean(axis=1)
    err = rates.std(axis=1, ddof=1) / math.sqrt(rates.shape[1]) if rates.shape[1] > 1 else np.zeros(len(params))
    return [LyapunovEstimate(float(m), float(e), int(n_steps), int(len(xs))) for m, e in zip(mean, err)]


def lyapunov(spec, alpha, n_steps, x_samples=16, burn_in=100):
    return lyapunov_batch(spec, alpha, [spec.param], n_steps, x_samples, burn_in)[0]


# ---------------------------------------------------------------- gap scans

@dataclass(frozen=True)
class ScanBudgets:
    x_grid_size: int = 2048
    n_list: tuple | None = None
    c: float = 1.0
    rho: float = 1.05
    augment: bool = True
    augment_max: int = 64
    chunk: int = 64
    oracle_N: tuple = (200,)
    oracle_phases: int = 8
    oracle_tol: float = ORACLE_TOL
    lyapunov_steps: int = 0
    lyapunov_samples: int = 16


@dataclass
class GapScan:
    params: list
    ueg_status: list  # raw growth-test verdict per point
    status: list  # after the oracle disagreement policy
    min_growth_rate: list
    lyapunov: list
    oracle_min_dist: list  # distance to the nearest eigenvalue over all phases and N
    oracle_robust_dist: list  # largest over phases of the per-phase distance
    gaps: list = field(default_factory=list)
    spectral_interval: tuple | None = None
    rho_samples: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def rows(self):
        for i, p in enumerate(self.params):
            yield (p, self.status[i], self.lyapunov[i], self.oracle_min_dist[i])


def oracle_operator_energy(spec, params):
    """Energies of the underlying operator for parameters of the schrodinger or polar families."""
    params = np.asarray(params, dtype=float)
    if spec.family == "schrodinger":
        return params
    if spec.family == "polar" and isinstance(spec.coupling, (int, float)):
        return float(spec.coupling) * params
    return None


def oracle_eigenvalues(spec, alpha, budgets):
    """Eigenvalue sets per phase (concatenated over N) or None when the family has no operator."""
    if oracle_operator_energy(spec, [0.0]) is None:
        return None
    lam = float(spec.coupling)
    phases = np.arange(budgets.oracle_phases) / budgets.oracle_phases
    return [np.sort(np.concatenate([truncate_eigenvalues(spec.function, lam, float(alpha), x, N)
                                    for N in budgets.oracle_N])) for x in phases]


def _nearest(sorted_vals, E):
    idx = np.clip(np.searchsorted(sorted_vals, E), 1, len(sorted_vals) - 1)
    return np.minimum(np.abs(E - sorted_vals[idx - 1]), np.abs(E - sorted_vals[idx]))


def certify_points(spec, alpha, params, budgets):
    """Raw growth-test verdicts, growth rates and optional Lyapunov estimates for a chunk of parameters."""
    params = np.asarray(params, dtype=float)
    status, rates, lyap = [], [], []
    for start in range(0, len(params), budgets.chunk):
        block = params[start:start + budgets.chunk]
        out = ueg_batch(spec, alpha, block, budgets.x_grid_size, budgets.n_list, budgets.c, budgets.rho,
                        budgets.augment, augment_max=budgets.augment_max)
        status.extend(str(s) for s in out["status"])
        rates.extend(float(r) for r in out["min_rate"])
        if budgets.lyapunov_steps:
            lyap.extend(e.value for e in lyapunov_batch(spec, alpha, block, budgets.lyapunov_steps,
                                                        budgets.lyapunov_samples))
        else:
            lyap.extend([None] * len(block))
    return status, rates, lyap


def collate_gaps(params, status, spectral=None):
    """Maximal runs of certified points; each gap reports its first and last certified points and the
    neighbouring refuted points as a half-open bracket."""
    gaps = []
    i = 0
    n = len(params)
    while i < n:
        if status[i] != "certified":
            i += 1
            continue
        j = i
        while j + 1 < n and status[j + 1] == "certified":
            j += 1
        lo_out = params[i - 1] if i > 0 else None
        hi_out = params[j + 1] if j + 1 < n else None
        unbounded = False
        if spectral is not None:
            unbounded = (lo_out is None and params[i] < spectral[0]) or (hi_out is None and params[j] > spectral[1])
        gaps.append({"first": params[i], "last": params[j], "bracket": [lo_out, hi_out], "points": j - i + 1,
                     "unbounded": bool(unbounded),
                     "inside_spectral_interval": spectral is not None and params[i] > spectral[0]
                     and params[j] < spectral[1]})
        i = j + 1
    return gaps


def gap_scan(spec, alpha, parameter_grid, budgets=None, certified=None):
    """Growth-test every grid parameter, compare with truncation eigenvalues and collate gaps.

    ``certified`` may carry precomputed (status, rates, lyapunov) lists, e.g. from parallel workers.
    """
    budgets = budgets or ScanBudgets()
    grid = [float(p) for p in parameter_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("parameter grid must be sorted")
    if certified is None:
        certified = certify_points(spec, alpha, grid, budgets) if grid else ([], [], [])
    raw, rates, lyap = certified
    energies = oracle_operator_energy(spec, grid)
    spectral = None
    dmin = [None] * len(grid)
    drob = [None] * len(grid)
    final = list(raw)
    log = []
    if energies is not None:
        lam = float(spec.coupling)
        lo, hi = spectral_interval(spec.function, lam)
        spectral = (lo, hi) if spec.family == "schrodinger" else (lo / lam, hi / lam)
        if grid:
            eigs = oracle_eigenvalues(spec, alpha, budgets)
            per_phase = np.array([_nearest(e, np.asarray(energies)) for e in eigs])
            scale = 1.0 if spec.family == "schrodinger" else float(spec.coupling)
            dmin = [float(v) / scale for v in per_phase.min(axis=0)]
            drob = [float(v) / scale for v in per_phase.max(axis=0)]
            for i, s in enumerate(raw):
                if s == "certified" and drob[i] * scale < budgets.oracle_tol:
                    final[i] = "inconclusive"
                    log.append(f"downgraded {grid[i]!r}: within {budgets.oracle_tol} of eigenvalues at all phases")
    gaps = collate_gaps(grid, final, spectral)
    return GapScan(grid, list(raw), final, rates, lyap, dmin, drob, gaps, spectral, [], log)


# ---------------------------------------------------------------- rho tracking

@dataclass
class RhoSample:
    level: int
    t: float
    rho: float
    branch: str  # "value" when the critical points merged, "distance" otherwise
    slope: float | None
    large_gap: bool
    g_at_critical: float


def _g_at(lv, i, j):
    return float(np.interp(lv.crit[i, j], lv.xs[i, j], lv.g[i, j]))


def rho_track(state, t_grid=None):
    """Sample rho_i(t) per level: g_i at the critical point when the two critical points merged,
    c_{i,1} - c_{i,2} otherwise; slopes by finite differences; large-gap trigger per point."""
    if state is None or not state.levels:
        return {"samples": [], "zero_set": []}
    ts = np.asarray(state.ts, dtype=float)
    keep = np.ones(len(ts), bool) if t_grid is None else np.isin(ts, np.asarray(t_grid, float))
    if not keep.any():
        return {"samples": [], "zero_set": []}
    lam = float(state.config.lam)
    samples, zeros = [], []
    for lv in state.levels:
        prev_r = np.ones(len(ts), dtype=int) if lv.index == 0 else \
            np.minimum(state.levels[lv.index - 1].n_plus, state.levels[lv.index - 1].n_minus)
        vals, branch, gvals = [], [], []
        for i in range(len(ts)):
            g1 = _g_at(lv, i, 0)
            if lv.merged[i]:
                vals.append(g1)
                branch.append("value")
            else:
                d = lv.crit[i, 0] - lv.crit[i, 1]
                vals.append(float(d - round(d)))
                branch.append("distance")
            gvals.append(g1)
        vals = np.array(vals)
        idx = np.nonzero(keep & lv.active)[0] if lv.index > 0 else np.nonzero(keep)[0]
        for a, i in enumerate(idx):
            slope = None
            nb = [k for k in (idx[a - 1] if a > 0 else None, idx[a + 1] if a + 1 < len(idx) else None)
                  if k is not None and branch[k] == branch[i]]
            if nb:
                k0, k1 = (min(nb[0], i), max(nb[-1], i)) if len(nb) == 2 else (min(nb[0], i), max(nb[0], i))
                slope = float((vals[k1] - vals[k0]) / (ts[k1] - ts[k0]))
            trig = abs(gvals[i]) > lam ** (-prev_r[i] / 10.0)
            samples.append(RhoSample(lv.index + 1, float(ts[i]), float(vals[i]), branch[i], slope, bool(trig),
                                     gvals[i]))
        for a in range(len(idx) - 1):
            i, k = idx[a], idx[a + 1]
            if branch[i] == branch[k] and vals[i] * vals[k] < 0:
                zeros.append({"level": lv.index + 1, "bracket": [float(ts[i]), float(ts[k])]})
            elif vals[i] == 0:
                zeros.append({"level": lv.index + 1, "bracket": [float(ts[i]), float(ts[i])]})
    return {"samples": [asdict(s) for s in samples], "zero_set": zeros}
