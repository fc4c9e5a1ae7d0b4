"""Acceptance criteria, each at its stated tolerance and runtime limit.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists one PASS/FAIL line per criterion.
"""
import math
import time

import numpy as np
import pytest

from cocyclelab import cli
from cocyclelab import cocycle as cc
from cocyclelab import spectrum as sp
from cocyclelab.certifier import block_growth, ueg_batch
from cocyclelab.classifier import Type3Decomposition, bifurcation_analysis, bifurcation_threshold
from cocyclelab.cocycle import CocycleSpec
from cocyclelab.directions import build_field, wrap_half
from cocyclelab.errors import HypothesisFailed
from cocyclelab.frequency import GOLDEN
from cocyclelab.induction import InductionConfig, init, step, verify_estimates
from cocyclelab.potential import SmoothFunction, cosine

criterion = pytest.mark.criterion


def powers(lo, hi):
    ns = [2**j for j in range(lo, hi + 1)]
    return tuple(ns + [-n for n in ns])


@criterion(1, 1)
def test_exact_first_critical_function():
    start = time.perf_counter()
    spec = CocycleSpec("polar", cosine(), 30.0, 0.0)
    fld = build_field(spec, GOLDEN, None, (-2.0, 2.0), (512, 16), 1, 1)
    exact = np.arctan(fld.ts[:, None] - np.cos(2 * np.pi * fld.xs))
    err = np.abs(wrap_half(fld.g_values - exact)).max()
    elapsed = time.perf_counter() - start
    print(f"max |g1 - arctan(t - v)| = {err:.3g}, {elapsed:.2f} s")
    assert err < 1e-9
    assert np.all(fld.u_values == 0.0)
    assert elapsed < 1.0


@criterion(2, 30)
def test_spectral_containment():
    start = time.perf_counter()
    offsets = np.logspace(-3, 1, 12)
    for lam in (2.0, 5.0, 10.0):
        lo, hi = sp.spectral_interval(cosine(), lam)
        assert lo == pytest.approx(-2 - lam) and hi == pytest.approx(2 + lam)
        for x in np.arange(8) / 8:
            ev = sp.truncate_eigenvalues(cosine(), lam, GOLDEN, x, 200)
            assert ev.min() >= lo and ev.max() <= hi
        outside = np.concatenate([lo - offsets, hi + offsets])
        out = ueg_batch(CocycleSpec("schrodinger", cosine(), lam), GOLDEN, outside, 512, powers(3, 9), 1.0, 1.05)
        assert list(out["status"]) == ["certified"] * len(outside), (lam, out["status"], out["min_rate"])
    elapsed = time.perf_counter() - start
    print(f"{elapsed:.1f} s")
    assert elapsed < 30


@criterion(3, 600)
def test_certified_gaps_avoid_eigenvalues():
    start = time.perf_counter()
    lam = 5.0
    spec = CocycleSpec("schrodinger", cosine(), lam)
    lo, hi = sp.spectral_interval(cosine(), lam)
    grid = np.linspace(lo, hi, 2000)
    budgets = sp.ScanBudgets(x_grid_size=512, n_list=powers(3, 8), c=1.0, rho=math.exp(0.5), chunk=100,
                             augment_max=64, oracle_N=(200,), oracle_phases=8)
    scan = sp.gap_scan(spec, GOLDEN, grid, budgets)
    raw = list(scan.ueg_status)
    robust = np.array(scan.oracle_robust_dist)
    gaps = sp.collate_gaps(list(grid), raw, (lo, hi))
    inside = [g for g in gaps if g["inside_spectral_interval"]]
    violations = []
    for g in gaps:
        interior = (grid > g["first"] + 0.05) & (grid < g["last"] - 0.05)
        if interior.any() and robust[interior].min() < 0.05:
            violations.append((g["first"], g["last"], float(robust[interior].min())))
    elapsed = time.perf_counter() - start
    print(f"{len(inside)} certified gaps inside [{lo}, {hi}]: "
          + ", ".join(f"[{g['first']:.4f}, {g['last']:.4f}]" for g in inside) + f"; {elapsed:.0f} s")
    assert not violations
    assert len(inside) >= 3
    assert elapsed < 600


def random_blocks(rng, count):
    """Blocks R(u) diag(beta, 1/beta) R(pi/2 - s) whose contraction angle s sits a random angle away from the
    previous expansion angle u; separations and norms are drawn wide enough that some sequences fail the gate."""
    floor = math.exp(rng.uniform(math.log(1.5), math.log(1e3)))
    beta = floor * np.exp(rng.uniform(0, math.log(10), count))
    sep_floor = rng.uniform(0.2, np.pi / 2)
    sep = rng.uniform(sep_floor, np.pi / 2, count) * rng.choice([-1, 1], count)
    blocks, u_prev = [], rng.uniform(0, np.pi)
    for b, d in zip(beta, sep):
        s = u_prev + d
        u = rng.uniform(0, np.pi)
        blocks.append(cc.rotation(u) @ np.diag([b, 1 / b]) @ cc.rotation(np.pi / 2 - s))
        u_prev = u
    return np.array(blocks)


@criterion(4, 10)
def test_block_growth_soundness():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    accepted = rejected = large = 0
    weak_large = []
    while accepted < 500:
        blocks = random_blocks(rng, 20)
        try:
            w = block_growth(blocks, prefix_check=0)
        except HypothesisFailed:
            rejected += 1
            continue
        accepted += 1
        # brute-force prefix norms in log form
        P = np.eye(2)
        log_norm = 0.0
        for n, B in enumerate(blocks, start=1):
            P = B @ P
            nr = np.linalg.norm(P, 2)
            P /= nr
            log_norm += math.log(nr)
            # the bound is attained at n = 1 when the first block is the weakest, so allow rounding
            assert log_norm >= n * w.log_rho_bound * (1 - 1e-12), (n, log_norm, w.log_rho_bound)
        if w.beta >= 100 and w.gamma >= 1:
            large += 1
            if not w.rho_bound >= 0.1 * w.beta * w.gamma:
                weak_large.append((w.beta, w.gamma, w.rho_bound))
    elapsed = time.perf_counter() - start
    print(f"{accepted} sequences sound ({rejected} rejected by the hypothesis); {len(weak_large)} of {large} "
          "with beta >= 100, gamma >= 1 have rho < 0.1 beta gamma")
    assert elapsed < 10
    assert large > 0
    assert not weak_large, weak_large[:3]


@criterion(5, 5)
def test_type3_bifurcation():
    start = time.perf_counter()
    r = 0.1

    def f1(x):
        return x

    def f2(x):
        return -x

    for l in (1e2, 1e3, 1e4):
        below, above = bifurcation_threshold(f1, f2, l, r)
        tangent = bifurcation_analysis(Type3Decomposition(f1, f2, l, below, r))
        assert tangent["zero_count"] == 1 and tangent["tangential"]
        offsets = np.concatenate([np.linspace(0, below, 5), [below], np.geomspace(above, 2 * r / 3, 8)])
        counts = []
        bound = 10 * l ** -0.75
        for d in offsets:
            out = bifurcation_analysis(Type3Decomposition(f1, f2, l, d, r))
            counts.append(out["zero_count"])
            if out["zero_count"] == 2:
                assert abs(out["x1"]) < bound and abs(out["x2"] - d) < bound
        assert counts == sorted(counts) and counts[0] == 0 and counts[-1] == 2 and 1 in counts, counts
    elapsed = time.perf_counter() - start
    print(f"{elapsed:.2f} s")
    assert elapsed < 5


@criterion(6, 300)
def test_induction_estimates():
    start = time.perf_counter()
    spec = CocycleSpec("polar", cosine(), 30.0)
    state = init(spec, GOLDEN, InductionConfig(lam=30.0, max_level=2, q_min=5), (-0.6, 0.6), nt=16)
    assert state.cf.q(state.N) >= 5
    step(state)
    step(state)
    reached = int(state.current.active.sum())
    reports = verify_estimates(state)
    elapsed = time.perf_counter() - start
    for rep in reports:
        print(rep)
    print(f"{reached} of 16 parameters reach level 2; {elapsed:.0f} s")
    assert reached > 0
    for rep in reports:
        assert rep["slope_product_ok"] and rep["dg_dt_ok"]
        if rep["level"] >= 1:
            assert rep["closeness_ok"] is not False
            assert rep["norm_growth_ok"]
    assert elapsed < 300


@criterion(7, 60)
def test_rotation_family_lyapunov():
    start = time.perf_counter()
    lam = 100.0
    spec = CocycleSpec("rotation", cosine(), lam)
    thetas = np.arange(32) / 32 * np.pi
    estimates = sp.lyapunov_batch(spec, GOLDEN, thetas, 10**4, 16)
    ratios = np.array([e.value for e in estimates]) / math.log(lam)
    elapsed = time.perf_counter() - start
    print(f"L / log(lambda): min {ratios.min():.4f}, mean {ratios.mean():.4f}; {elapsed:.1f} s")
    assert elapsed < 60
    assert np.all(ratios > 0.99)


@criterion(8, 600)
def test_rotation_family_density():
    start = time.perf_counter()
    spec = CocycleSpec("rotation", cosine(0.5), 50.0)
    thetas = np.arange(4096) / 4096 * np.pi
    budgets = sp.ScanBudgets(x_grid_size=512, n_list=powers(3, 8), c=1.0, rho=math.exp(0.5), chunk=128)
    status, _, _ = sp.certify_points(spec, GOLDEN, thetas, budgets)
    status = np.array(status)
    certified = np.nonzero(status == "certified")[0]
    refuted = np.nonzero(status == "refuted-at-budget")[0]
    # distance in cells from each refuted point to the nearest certified one, cyclic in theta
    if certified.size:
        gap = np.abs(refuted[:, None] - certified[None, :])
        far = refuted[np.minimum(gap, len(thetas) - gap).min(axis=1) > 2]
    else:
        far = refuted
    elapsed = time.perf_counter() - start
    print(f"certified {certified.size}, refuted {refuted.size}, refuted more than 2 cells from a certified point "
          f"{far.size}" + (f" (theta in [{thetas[far].min():.3f}, {thetas[far].max():.3f}])" if far.size else "")
          + f"; {elapsed:.0f} s")
    assert certified.size > 0
    assert elapsed < 600
    assert far.size == 0


@criterion(9, 5)
def test_szego_reduction():
    start = time.perf_counter()
    assert cc.conjugation_check(samples=100, seed=7, tol=1e-10)
    theta = cosine(0.5)
    lam = 0.6
    xs = np.linspace(0, 1, 257)

    def psi(x):
        return np.pi * (theta(x) - theta(np.asarray(x) - GOLDEN))

    zero = lambda x: np.zeros(np.shape(x))  # noqa: E731
    angle = SmoothFunction(psi, zero, zero, "psi")
    worst = 0.0
    for t in np.linspace(0, 1, 11):
        reduced = cc.make_map(CocycleSpec("szego", theta, lam, t, alpha=GOLDEN))(xs)
        rotation = cc.make_map(CocycleSpec("rotation", angle, math.sqrt((1 + lam) / (1 - lam)), np.pi * t))(xs)
        worst = max(worst, float(np.abs(reduced - rotation).max()))
    elapsed = time.perf_counter() - start
    print(f"max entrywise difference {worst:.3g}; {elapsed:.2f} s")
    assert worst < 1e-10
    assert elapsed < 5


SMALL = ["--set", "x_grid=64", "--set", "n_max=64", "--set", "oracle_N=[40]", "--set", "oracle_phases=2"]
RUNS = [
    ["freq", "--set", "cf_depth=12"],
    ["scan-spectrum", "--lambda", "5", "--grid", "30", *SMALL],
    ["scan-spectrum", "--family", "rotation", "--lambda", "20", "--window", "0", "3.14", "--grid", "20", *SMALL],
    ["certify", "--lambda", "5", "--param", "9", *SMALL],
    ["lyapunov-scan", "--lambda", "3", "--grid", "5", "--set", "lyapunov_steps=1000", "--seed", "3"],
    ["szego-scan", "--lambda", "0.5", "--grid", "6", *SMALL],
    ["induction-trace", "--levels", "1", "--window", "-0.1", "0.1", "--set", "nt=3"],
]


@criterion(10, 600)
@pytest.mark.parametrize("argv", RUNS, ids=[" ".join(r[:3]) for r in RUNS])
def test_determinism(tmp_path, monkeypatch, argv):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
    outputs = []
    for run, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / run
        assert cli.main(argv + ["--out", str(out), "--jobs", jobs]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] and outputs[0] == outputs[1] == outputs[2]
