import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocyclelab import cocycle as cc
from cocyclelab.directions import (build_field, contraction_angle, expansion_angle, lift_rows, most_contraction,
                                   rp1, rp1_dist, sn_un, unit_vector, wrap_half)
from cocyclelab.errors import BranchAmbiguity, NearConformal
from cocyclelab.frequency import GOLDEN, Arc
from cocyclelab.potential import constant, cosine

sl2 = st.tuples(st.floats(-3, 3), st.floats(0.05, 4), st.floats(-3, 3)).map(
    lambda p: cc.rotation(p[0]) @ np.diag([np.exp(p[1]), np.exp(-p[1])]) @ cc.rotation(p[2]))


def brute_contraction(A, n=10**4):
    thetas = np.arange(n) * np.pi / n
    return thetas[np.argmin(np.linalg.norm(unit_vector(thetas) @ A.T, axis=1))]


def test_diag_contraction():
    assert most_contraction(np.diag([2.0, 0.5])) == pytest.approx(np.pi / 2)


def test_rotation_is_conformal():
    with pytest.raises(NearConformal):
        most_contraction(cc.rotation(np.pi / 3))


def test_contraction_matches_brute_force():
    A = np.diag([3.0, 1 / 3]) @ cc.rotation(0.7)
    got = most_contraction(A)
    assert rp1_dist(got, brute_contraction(A)) < np.pi / 1e4
    w, V = np.linalg.eigh(A.T @ A)
    assert rp1_dist(got, np.arctan2(V[1, 0], V[0, 0])) < 1e-12


@given(sl2)
def test_contraction_realises_inverse_norm(A):
    s = most_contraction(A)
    assert np.linalg.norm(A @ unit_vector(s)) == pytest.approx(1 / cc.opnorm(A), rel=1e-8)


@given(sl2, st.floats(0.1, 100))
def test_scale_invariance(A, c):
    # the unit factor and any positive multiple give the same direction
    assert abs(most_contraction(A / cc.opnorm(A)) - most_contraction(A)) < 1e-14
    assert rp1_dist(contraction_angle(c * A), contraction_angle(A)) < 1e-12


@given(sl2)
def test_expansion_is_contraction_of_inverse(A):
    assert rp1_dist(expansion_angle(A), contraction_angle(np.linalg.inv(A))) < 1e-9


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_rp1_metric(a, b):
    d = rp1_dist(a, b)
    assert 0 <= d <= np.pi / 2 + 1e-12
    assert d == pytest.approx(rp1_dist(b, a))
    assert rp1_dist(a, a + np.pi) < 1e-9
    assert 0 <= rp1(a) < np.pi
    assert -np.pi / 2 <= wrap_half(a) < np.pi / 2


@given(st.floats(0, 1), st.floats(-2, 2))
def test_first_step_directions_polar(x, t):
    spec = cc.CocycleSpec("polar", cosine(), 30.0, t)
    s, u = sn_un(spec, GOLDEN, x, t, 1, 1)
    assert u == 0.0
    assert rp1_dist(s, np.arctan(t - np.cos(2 * np.pi * x))) < 1e-9


def test_directions_stabilise_on_hyperbolic_point():
    spec = cc.CocycleSpec("rotation", cosine(0.3), 10.0, 0.4)
    prev = None
    for n in range(20, 26):
        s, u = sn_un(spec, GOLDEN, 0.3, 0.4, n, n)
        if prev is not None:
            assert rp1_dist(s, prev[0]) < 1e-6 and rp1_dist(u, prev[1]) < 1e-6
        prev = (s, u)


def test_field_g1_exact():
    spec = cc.CocycleSpec("polar", cosine(), 30.0, 0.0)
    fld = build_field(spec, GOLDEN, None, (-0.5, 0.5), (512, 16), 1, 1)
    ref = np.arctan(fld.ts[:, None] - np.cos(2 * np.pi * fld.xs))
    assert np.abs(wrap_half(fld.g_values - ref)).max() < 1e-10
    assert np.all(fld.u_values == 0.0)
    # g_1 increases in t with derivative 1/(1 + (t - v)^2)
    assert np.all(np.diff(fld.g_values, axis=0) > 0)
    assert np.abs(fld.dg_dt() - np.gradient(ref, fld.ts, axis=0)).max() < 1e-10


def test_field_dg_dx_matches_analytic():
    spec = cc.CocycleSpec("polar", cosine(), 30.0, 0.0)
    h = 1e-5
    fld = build_field(spec, GOLDEN, Arc(0.1, 64 * h - h), (0.1, 0.4), (64, 8), 1, 1)
    v, dv = np.cos(2 * np.pi * fld.xs), -2 * np.pi * np.sin(2 * np.pi * fld.xs)
    expect = -dv / (1 + (fld.ts[:, None] - v) ** 2)
    assert np.abs(fld.dg_dx() - expect)[:, 1:-1].max() < 1e-4


def test_constant_potential_field_is_flat():
    spec = cc.CocycleSpec("polar", constant(0.2), 5.0, 0.0)
    fld = build_field(spec, GOLDEN, None, (-1, 1), (64, 8), 3, 4)
    assert np.ptp(fld.g_values, axis=1).max() < 1e-12


def test_grid_too_small_and_branch_ambiguity():
    spec = cc.CocycleSpec("polar", cosine(), 30.0, 0.0)
    with pytest.raises(ValueError):
        build_field(spec, GOLDEN, None, (0, 1), (32, 8), 1, 1)
    with pytest.raises(BranchAmbiguity):
        lift_rows(np.array([[0.0, np.pi / 2, 0.0]]))
    with pytest.raises(BranchAmbiguity):
        lift_rows(np.array([[0.0, 1.0]]), max_jump=0.5)
    assert lift_rows(np.array([[3.0, 3.2, 3.4]])) == pytest.approx(np.array([[3.0, 3.2, 3.4]]) - np.pi)


def test_field_csv(tmp_path):
    spec = cc.CocycleSpec("polar", cosine(), 30.0, 0.0)
    fld = build_field(spec, GOLDEN, None, (0, 1), (64, 8), 1, 1)
    path = tmp_path / "field.csv"
    fld.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,t,s,u,g" and len(lines) == 1 + 64 * 8
