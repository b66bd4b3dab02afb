import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from microlocal.field import (
    DEGENERATE,
    ELLIPTIC,
    INFINITE,
    REAL_DIRECTION,
    Domain,
    LinearCombination,
    PlanarVectorField,
    classify_point,
    detect_F0,
    field_from_dict,
    load_field,
    make_bump,
    t,
    x,
)

DOM = Domain(-1.0, 1.0, 1.0)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain(1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        Domain(-1.0, 1.0, 0.0)


def test_taylor_agrees_with_coefficient():
    fld = PlanarVectorField.from_expr("real_dir", -2 * sp.I * x * t / (1 + sp.I * t ** 2), DOM)
    xs = np.linspace(-1, 1, 11)
    for tv in (0.05, 0.1, 0.2):
        err = np.max(np.abs(fld.a(xs, tv) - fld.taylor_eval(xs, tv)))
        assert err <= fld.taylor_constant() * tv ** (fld.order + 1) * 1.01 + 1e-15


def test_taylor_constant_example():
    # a = -2ixt (1 - it^2 - t^4 + ...): the remainder after t^8 is 2 |x| t^9 (1 + O(t^2))
    fld = PlanarVectorField.from_expr("real_dir", -2 * sp.I * x * t / (1 + sp.I * t ** 2), Domain(-1.5, 1.5, 1.0))
    assert fld.taylor_constant() == pytest.approx(3.0, rel=0.2)


def test_X_Y_split():
    fld = PlanarVectorField.from_expr("c", 2 + 3 * sp.I, DOM)
    assert fld.X(0.1, 0.2) == pytest.approx(2.0)
    assert fld.Y(0.1, 0.2) == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# classify_point


def test_classify_elliptic():
    fld = PlanarVectorField.from_expr("cr", sp.I, DOM)
    pc = classify_point(fld, 0.0)
    assert (pc.tag, pc.order) == (ELLIPTIC, 0)


def test_classify_real_direction_example():
    fld = PlanarVectorField.from_expr("real_dir", -2 * sp.I * x * t / (1 + sp.I * t ** 2), DOM)
    pc = classify_point(fld, 0.5)
    assert (pc.tag, pc.order) == (REAL_DIRECTION, 1)
    # oracle: Taylor coefficient of t in the symbolic expansion
    a1 = sp.series(-2 * sp.I * x * t / (1 + sp.I * t ** 2), t, 0, 3).removeO().coeff(t, 1).subs(x, 0.5)
    assert complex(a1).imag == pytest.approx(-1.0)


def test_classify_degenerate():
    fld = PlanarVectorField.from_expr("real_dir", -2 * sp.I * x * t / (1 + sp.I * t ** 2), DOM)
    pc = classify_point(fld, 0.0)
    assert (pc.tag, pc.order) == (DEGENERATE, INFINITE)


def test_classify_out_of_domain():
    fld = PlanarVectorField.from_expr("cr", sp.I, DOM)
    with pytest.raises(ValueError):
        classify_point(fld, 3.0)


@settings(max_examples=15, deadline=None)
@given(scale=st.floats(0.1, 10.0), x0=st.floats(-0.9, 0.9))
def test_classify_scale_consistent(scale, x0):
    expr = sp.I * (x ** 2 - 0.25) * t ** 2 + sp.I * x * t ** 3
    a = PlanarVectorField.from_expr("a", expr, DOM)
    b = PlanarVectorField.from_expr("b", scale * expr, DOM)
    pa, pb = classify_point(a, x0, tol=1e-9), classify_point(b, x0, tol=1e-9 * scale)
    assert (pa.tag, pa.order) == (pb.tag, pb.order)


# ---------------------------------------------------------------------------
# bumps


def test_bump_values():
    phi = make_bump(0.0, 1.0, 0)
    assert phi(np.array([0.0]))[0] == 1.0
    assert phi(np.array([-1.0, 1.0])).tolist() == [0.0, 0.0]
    assert phi(np.array([0.5, -0.5])).tolist() == [1.0, 1.0]


def test_bump_derivative_matches_fd():
    phi = make_bump(0.0, 1.0, 3)
    h = 1e-4
    fd = (phi.deriv(0, 0.7 - 2 * h) - 8 * phi.deriv(0, 0.7 - h) + 8 * phi.deriv(0, 0.7 + h) - phi.deriv(0, 0.7 + 2 * h)) / (12 * h)
    exact = phi.deriv(1, 0.7)
    assert abs(fd - exact) / abs(exact) < 1e-6


def test_bump_scaling_property_iii():
    consts = []
    for eps in (1.0, 0.1, 0.01):
        phi = make_bump(0.0, eps, 2)
        xs = np.linspace(-eps, eps, 8001)
        consts.append(np.max(np.abs(phi.deriv(2, xs))) * eps ** 2)
    assert max(consts) / min(consts) < 1.01


def test_bump_vanishes_outside_support():
    phi = make_bump(0.2, 0.3, 5)
    xs = np.array([-0.2, 0.5 + 1e-9, 0.9])
    for n in range(6):
        assert np.all(phi.deriv(n, xs) == 0)


def test_bump_max_order_enforced():
    phi = make_bump(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        phi.deriv(3, 0.1)
    with pytest.raises(ValueError):
        make_bump(0.0, 0.0, 2)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-5, 5), r=st.floats(0.01, 10))
def test_bump_integral_between_plateau_and_support(c, r):
    phi = make_bump(c, r, 0)
    val, _ = quad(lambda v: float(phi(np.array([v]))[0]), c - r, c + r, points=[c - r / 2, c + r / 2])
    assert r < val < 2 * r
    assert val == pytest.approx(1.5 * r, rel=1e-6)


def test_linear_combination_derivatives():
    p, q = make_bump(0.0, 1.0, 3), make_bump(0.2, 0.5, 3)
    comb = LinearCombination([2.0, -1.0], [p, q])
    xs = np.linspace(-1, 1, 13)
    for n in range(4):
        np.testing.assert_allclose(comb.deriv(n, xs), 2 * p.deriv(n, xs) - q.deriv(n, xs))


# ---------------------------------------------------------------------------
# detect_F0


def _b_field(expr, taylor=None):
    return PlanarVectorField.from_expr("b", sp.I * expr, DOM, taylor=taylor)


def test_F0_linear():
    grid = np.linspace(-1, 1, 201)
    assert detect_F0(_b_field(x), 0.5, 1e-12, grid) == [(0.0, 0.0)]


def test_F0_empty():
    grid = np.linspace(-1, 1, 201)
    assert detect_F0(_b_field(sp.Integer(1)), 0.5, 1e-12, grid) == []


def test_F0_late_onset():
    grid = np.linspace(-1, 1, 201)
    # flat at t = 0, so the Taylor table is zero
    out = detect_F0(_b_field(x * sp.Max(0, t - sp.Rational(1, 2)), taylor=[0] * 9), 0.25, 1e-12, grid)
    assert out == [(-1.0, 1.0)]


def test_F0_rejects_non_real():
    with pytest.raises(ValueError, match="max"):
        detect_F0(PlanarVectorField.from_expr("c", 1 + sp.I * x, DOM), 0.5, 1e-12, np.linspace(-1, 1, 11))


def _covered(intervals, grid):
    return {g for g in grid for a, b in intervals if a <= g <= b}


@settings(max_examples=15, deadline=None)
@given(onset=st.floats(0.05, 0.9), e1=st.floats(0.01, 1.0), e2=st.floats(0.01, 1.0))
def test_F0_monotone_in_eps(onset, e1, e2):
    lo, hi = sorted((e1, e2))
    grid = np.linspace(-1, 1, 41)
    fld = _b_field(x * (x - sp.Rational(1, 2)) * sp.Max(0, t - onset) + x ** 2, taylor=[x ** 2] + [0] * 8)
    small, large = detect_F0(fld, lo, 1e-12, grid), detect_F0(fld, hi, 1e-12, grid)
    assert _covered(large, grid) <= _covered(small, grid)


@settings(max_examples=15, deadline=None)
@given(t1=st.floats(1e-14, 1e-2), t2=st.floats(1e-14, 1e-2))
def test_F0_monotone_in_tol(t1, t2):
    lo, hi = sorted((t1, t2))
    grid = np.linspace(-1, 1, 41)
    fld = _b_field(x ** 3 * t)
    assert _covered(detect_F0(fld, 0.5, lo, grid), grid) <= _covered(detect_F0(fld, 0.5, hi, grid), grid)


# ---------------------------------------------------------------------------
# loading


def test_field_round_trip(tmp_path):
    fld = PlanarVectorField.from_expr("real_dir", -2 * sp.I * x * t / (1 + sp.I * t ** 2), DOM)
    path = tmp_path / "f.json"
    path.write_text(json.dumps(fld.to_dict()))
    back = load_field(str(path))
    xs = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(back.a(xs, 0.3), fld.a(xs, 0.3))


def test_field_from_taylor_tables():
    grid = np.linspace(-1, 1, 33)
    tables = [np.zeros_like(grid, dtype=complex), 1j * grid, 1j * grid ** 2]
    doc = {
        "name": "tab",
        "domain": DOM.to_dict(),
        "x_grid": grid.tolist(),
        "taylor": [[[v.real, v.imag] for v in row] for row in tables],
    }
    fld = field_from_dict(doc)
    assert fld.a(0.5, 0.2) == pytest.approx(1j * (0.5 * 0.2 + 0.25 * 0.04), abs=1e-10)
    assert classify_point(fld, 0.5).order == 1


def test_field_from_preset_name():
    fld = field_from_dict({"preset": "mizohata"})
    assert fld.a(0.3, 0.5) == pytest.approx(0.5j)


def test_field_needs_description():
    with pytest.raises(ValueError):
        field_from_dict({"domain": DOM.to_dict()})
    assert math.isclose(make_bump(0, 2, 0).integral, 3.0)
