import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from microlocal.field import Domain, PlanarVectorField, t, x
from microlocal.first_integral import (
    CLOSED_FORM,
    SERIES,
    FirstIntegral,
    limit_direction,
    residual_check,
    solve_series,
)
from microlocal.presets import PRESET_NAMES, preset

DOM = Domain(-1.0, 1.0, 0.5)
XS = np.linspace(-1, 1, 21)
T_GRID = np.geomspace(0.05, 0.4, 8)


def _field(expr, dom=DOM, **kw):
    return PlanarVectorField.from_expr("f", expr, dom, **kw)


def test_zero_field_gives_x():
    Z = solve_series(_field(sp.Integer(0)), 5)
    assert Z.kind == SERIES
    for m in range(1, 6):
        assert np.all(Z.coefficient(m, XS) == 0)


def test_mizohata_series():
    Z = solve_series(_field(sp.I * t), 5)
    np.testing.assert_allclose(Z.coefficient(2, XS), -0.5j, atol=1e-14)
    for m in (1, 3, 4, 5):
        assert np.max(np.abs(Z.coefficient(m, XS))) < 1e-14


def test_example41_series():
    fld = preset("example41").field
    Z = solve_series(fld, 8)
    xs = np.linspace(-1.5, 1.5, 31)
    np.testing.assert_allclose(Z.coefficient(2, xs), 1j * xs, atol=1e-12)
    for m in (1, 3, 4, 5, 6, 7, 8):
        assert np.max(np.abs(Z.coefficient(m, xs))) < 1e-10


def test_series_needs_taylor_order():
    fld = _field(sp.I * t, order=2)
    with pytest.raises(ValueError, match="Taylor order"):
        solve_series(fld, 5)


def test_under_resolved_coefficient_warns():
    fld = _field(sp.I * sp.sin(200 * x) * t)
    with pytest.warns(UserWarning, match="under-resolved"):
        solve_series(fld, 3, deg=16)


def test_series_z_on_boundary_is_x():
    Z = solve_series(_field(sp.I * t * sp.exp(x)), 4)
    vals = Z.Z(XS, np.zeros_like(XS))
    assert np.all(vals.real == XS)
    assert np.all(vals.imag == 0)
    assert np.all(Z.phi(XS, np.zeros_like(XS)) == 0)
    assert Z.phi(0.0, 0.0) == 0


def test_series_round_trip():
    Z = solve_series(_field(sp.I * t * sp.exp(x)), 4)
    back = FirstIntegral.from_dict(Z.to_dict())
    np.testing.assert_allclose(back.Z(XS, 0.3), Z.Z(XS, 0.3), atol=1e-13)
    Zc = FirstIntegral.closed_form(x * (1 + sp.I * t ** 2))
    assert FirstIntegral.from_dict(Zc.to_dict()).Z(0.3, 0.2) == pytest.approx(Zc.Z(0.3, 0.2))


def test_residual_exact_for_closed_form():
    fld = preset("example41").field
    Z = FirstIntegral.closed_form(x * (1 + sp.I * t ** 2))
    assert Z.kind == CLOSED_FORM and Z.exact
    res = residual_check(Z, fld, T_GRID)
    assert res.exact and math.isinf(res.slope)
    val = abs(Z.dZ_dt(0.3, 0.2) + fld.a(0.3, 0.2) * Z.dZ_dx(0.3, 0.2))
    assert val < 1e-12


def test_residual_slope_one_for_x():
    res = residual_check(FirstIntegral.closed_form(x + 0 * t), _field(sp.I * t), T_GRID)
    assert res.slope == pytest.approx(1.0, abs=1e-6)
    csv = res.to_csv()
    assert csv.startswith("t,max_residual\n") and csv.count("\n") == len(T_GRID) + 1


def test_residual_slope_it_exp_x():
    fld = _field(sp.I * t * sp.exp(x))
    res = residual_check(solve_series(fld, 4), fld, T_GRID)
    assert res.slope >= 3.5
    assert res.certifies(4)


def test_residual_degenerate_grid():
    with pytest.raises(ValueError):
        residual_check(FirstIntegral.closed_form(x + 0 * t), _field(sp.I * t), [0.1, 0.2, 0.3])


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_series_order_on_presets(name):
    fld = preset(name).field
    k = 4
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Z = solve_series(fld, k)
    T = fld.domain.T
    res = residual_check(Z, fld, np.geomspace(0.05 * T, 0.9 * T, 10))
    assert res.certifies(k), res.slope


# ---------------------------------------------------------------------------
# limit_direction

GRID = np.linspace(0.5, 0.01, 20000)


def _tube(tv):
    tv = np.asarray(tv, float)
    with np.errstate(under="ignore"):
        return np.exp(-1.0 / tv ** 2) * np.cos(1.0 / tv)


def test_direction_minus_t2():
    assert limit_direction(lambda tv: -np.asarray(tv) ** 2, GRID).directions == {1}


def test_direction_plus_t2():
    assert limit_direction(lambda tv: np.asarray(tv) ** 2, GRID).directions == {-1}


def test_direction_tube():
    res = limit_direction(_tube, GRID)
    assert res.directions == {1, -1}
    assert not res.degenerate


def test_direction_degenerate():
    res = limit_direction(lambda tv: np.zeros(np.shape(tv)), GRID)
    assert res.degenerate and res.directions == frozenset()


def test_direction_needs_decreasing_grid():
    with pytest.raises(ValueError):
        limit_direction(_tube, GRID[::-1])


def test_witness_invariants():
    res = limit_direction(_tube, GRID)
    vals = np.abs(_tube(GRID))
    for sign, ts in res.witness_t.items():
        assert all(a > b for a, b in zip(ts, ts[1:]))
        for tk in ts:
            assert vals[GRID <= tk].max() <= np.abs(_tube(tk)) * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(1e-3, 1e3))
def test_direction_rescale_invariant(lam):
    base = limit_direction(_tube, GRID)
    scaled = limit_direction(lambda tv: lam * _tube(tv), GRID)
    assert scaled.directions == base.directions
    assert scaled.witness_t == base.witness_t
