import numpy as np
import pytest
from hypothesis import given, strategies as st

from cocyclelab.errors import DegenerateCritical
from cocyclelab.frequency import GOLDEN
from cocyclelab.potential import (angle_range, by_name, constant, cosine, load_tabulated, perturbed_cosine,
                                  szego_angle, tabulated, validate_admissible)

BUILTINS = [cosine(), perturbed_cosine(0.3), cosine(0.5), cosine(harmonic=2), cosine(1.0, 1, 0.17)]


@pytest.mark.parametrize("f", BUILTINS, ids=lambda f: f.name)
def test_derivatives_match_finite_differences(f, rng):
    xs = rng.random(1000)
    h = 1e-5
    d1 = (f.eval(xs + h) - f.eval(xs - h)) / (2 * h)
    d2 = (f.deriv1(xs + h) - f.deriv1(xs - h)) / (2 * h)
    scale1 = np.abs(f.deriv1(xs)).max()
    scale2 = np.abs(f.deriv2(xs)).max()
    assert np.abs(d1 - f.deriv1(xs)).max() < 1e-6 * scale1
    assert np.abs(d2 - f.deriv2(xs)).max() < 1e-6 * scale2


def test_cosine_admissible():
    rep = validate_admissible(cosine(), 4096, 1e-6)
    assert rep.admissible
    xs = sorted(x for x, _, _ in rep.critical_points)
    assert xs[0] == pytest.approx(0.0, abs=1e-9)
    assert xs[1] == pytest.approx(0.5, abs=1e-9)
    d2 = sorted(d for _, _, d in rep.critical_points)
    assert d2 == pytest.approx([-4 * np.pi**2, 4 * np.pi**2], rel=1e-9)
    assert rep.range == pytest.approx((-1.0, 1.0), abs=1e-12)


def test_constant_not_admissible():
    rep = validate_admissible(constant(0.3))
    assert not rep.admissible
    assert rep.critical_points == []


def test_cos4_has_four_critical_points():
    rep = validate_admissible(cosine(harmonic=2))
    assert len(rep.critical_points) == 4
    assert not rep.admissible


def test_degenerate_critical_point():
    # derivative sin^3(2 pi x) changes sign at 0 and 1/2 with vanishing second derivative
    w = 2 * np.pi
    flat = type(cosine())(lambda x: (np.cos(w * x) ** 3 / 3 - np.cos(w * x)) / w,
                          lambda x: np.sin(w * x) ** 3,
                          lambda x: 3 * w * np.sin(w * x) ** 2 * np.cos(w * x), "flat")
    with pytest.raises(DegenerateCritical):
        validate_admissible(flat)


def test_grid_floor():
    with pytest.raises(ValueError):
        validate_admissible(cosine(), grid_size=100)


@given(st.floats(-0.2, 0.2))
def test_perturbed_cosine_admissible(eps):
    assert validate_admissible(perturbed_cosine(eps)).admissible


def test_tabulated_csv(tmp_path):
    xs = np.arange(200) / 200
    path = tmp_path / "v.csv"
    np.savetxt(path, np.column_stack([xs, np.cos(2 * np.pi * xs) + 0.2 * np.sin(4 * np.pi * xs)]), delimiter=",")
    f = load_tabulated(str(path))
    assert validate_admissible(f).admissible
    ref = perturbed_cosine(0.2)
    probe = np.linspace(0, 1, 333)
    assert np.abs(f.eval(probe) - ref.eval(probe)).max() < 1e-5
    assert by_name("tabulated", path=str(path)).eval(0.25) == pytest.approx(f.eval(0.25))


def test_by_name():
    assert by_name("cos").eval(0.0) == pytest.approx(1.0)
    assert by_name("const", value=2.0).eval(0.4) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        by_name("tabulated")
    with pytest.raises(ValueError):
        by_name("nope")


def test_szego_angle_examples():
    theta = cosine(0.5)
    psi = szego_angle(theta, GOLDEN)
    assert validate_admissible(psi).admissible
    xs = np.linspace(0, 1, 101)
    assert np.abs(szego_angle(constant(0.7), GOLDEN).eval(xs)).max() == 0.0
    assert np.abs(szego_angle(theta, 0.0).eval(xs)).max() == 0.0
    # closed form: theta(x) - theta(x - a) = -sin(pi a) sin(2 pi x - pi a)
    expect = -np.sin(np.pi * GOLDEN) * np.sin(2 * np.pi * xs - np.pi * GOLDEN)
    assert np.abs(psi.eval(xs) - expect).max() < 1e-12


def test_angle_range():
    assert angle_range(cosine(0.25)) == pytest.approx(0.5, abs=1e-6)
    psi = szego_angle(cosine(0.5), GOLDEN).scaled(np.pi)
    assert angle_range(psi) == pytest.approx(2 * np.pi * np.sin(np.pi * GOLDEN), rel=1e-6)
