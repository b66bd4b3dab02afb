import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microlocal.field import make_bump, t, x
from microlocal.fbi import (
    EXPONENTIAL,
    FLAT,
    INVERSION_CONSTANT,
    POLYNOMIAL,
    BranchError,
    FbiPlan,
    angle_bracket,
    calibrate_inversion,
    default_ladder,
    dense_scan,
    fbi_generalized,
    fbi_inverse,
    fbi_transform,
    fit_decay,
    fit_decay_values,
    wavefront_report,
)
from microlocal.first_integral import FirstIntegral
from microlocal.measures import BoundaryMeasure
from microlocal.presets import preset
from microlocal.quadrature import QuadratureError
from microlocal.trace import SampledTrace

SMALL_LADDER = default_ladder(8.0, 64.0)


def _sampled(fn, name="g", breakpoints=()):
    return SampledTrace(lambda v: np.asarray(fn(v), dtype=complex), name, breakpoints=breakpoints)


def test_angle_bracket_sector():
    assert angle_bracket(3.0) == 3.0
    assert angle_bracket(-3.0) == 3.0
    assert angle_bracket(2 + 1j) == 2 + 1j
    assert angle_bracket(-2 - 1j) == 2 + 1j
    with pytest.raises(BranchError):
        angle_bracket(1 + 2j)


def test_plan_validation():
    with pytest.raises(ValueError):
        FbiPlan((0.0,), ladder=[2.0, 1.0])
    with pytest.raises(ValueError):
        FbiPlan((0.0,), kappa=0.0)
    with pytest.raises(ValueError):
        FbiPlan((0.0,), directions=(2,))
    plan = FbiPlan(0.5)
    assert plan.points == (0.5,) and plan.cutoff_for(0.5).support == (-0.5, 1.5)


def test_gaussian_closed_form():
    plan = FbiPlan((0.0,), directions=(1,), ladder=SMALL_LADDER, cutoff_radius=4.0)
    scan = fbi_transform(_sampled(np.ones_like), plan)
    vals, _ = scan.series(0.0, 1)
    exact = np.sqrt(np.pi / SMALL_LADDER) * np.exp(-SMALL_LADDER / 4)
    np.testing.assert_allclose(vals, exact, rtol=1e-8, atol=1e-14)


def test_generalized_with_x_is_plain():
    u = _sampled(lambda v: np.cos(3 * v) + v ** 2)
    plan = FbiPlan((0.0, 0.3), ladder=SMALL_LADDER)
    plain = fbi_transform(u, plan).values
    gen = fbi_generalized(u, FirstIntegral.closed_form(x + 0 * t), plan).values
    np.testing.assert_allclose(gen, plain, rtol=1e-12, atol=1e-15)


def test_conjugate_symmetry_real_trace():
    u = _sampled(lambda v: np.abs(v) ** 0.5, breakpoints=(0.0,))
    scan = fbi_transform(u, FbiPlan((0.0, 0.2), ladder=SMALL_LADDER))
    np.testing.assert_allclose(scan.values[:, 1], np.conj(scan.values[:, 0]), rtol=1e-12, atol=1e-15)


@settings(max_examples=10, deadline=None)
@given(shift=st.floats(-0.5, 0.5))
def test_translation_covariance(shift):
    base = _sampled(lambda v: np.abs(v), breakpoints=(0.0,))
    moved = _sampled(lambda v: np.abs(v - shift), breakpoints=(shift,))
    ladder = default_ladder(8.0, 32.0)
    a = fbi_transform(base, FbiPlan((0.1,), ladder=ladder)).values
    b = fbi_transform(moved, FbiPlan((0.1 + shift,), ladder=ladder)).values
    np.testing.assert_allclose(b, a, rtol=1e-9, atol=1e-13)


def test_modulation_peak():
    omega = 10.0
    u = _sampled(lambda v: np.exp(1j * omega * v))
    ladder = np.linspace(5.0, 40.0, 71)
    scan = fbi_transform(u, FbiPlan((0.0,), ladder=ladder, cutoff_radius=4.0))
    plus, _ = scan.series(0.0, 1)
    minus, _ = scan.series(0.0, -1)
    assert abs(ladder[np.argmax(np.abs(plus))] - omega) < 1.5
    # Gaussian closed form with the frequency shifted by -/+ omega
    for vals, sign in ((plus, -1), (minus, 1)):
        exact = np.sqrt(np.pi / ladder) * np.exp(-((ladder + sign * omega) ** 2) / (4 * ladder))
        np.testing.assert_allclose(np.abs(vals), exact, rtol=1e-6, atol=1e-14)
    assert np.max(np.abs(minus)) < 1e-4 * np.max(np.abs(plus))


def test_heaviside_wavefront():
    u = _sampled(lambda v: (v > 0).astype(float), "H", breakpoints=(0.0,))
    plan = FbiPlan((0.0, 0.7), cutoff_radius=0.5)
    rep = wavefront_report(u, (0.0, 0.7), plan)
    assert rep.in_wf(0.7) == frozenset()
    assert rep.in_wf(0.0) == {1, -1}
    for d in (1, -1):
        fit = rep.entry(0.0, d).fit
        assert fit.cls == POLYNOMIAL and fit.order == pytest.approx(1.0, abs=0.1)
    assert rep.halfspace_ok == {0.0: False, 0.7: True}
    for row in rep.to_json_rows():
        assert row["in_WF"] == (row["class"] != EXPONENTIAL)
        assert row["halfspace_ok"] == rep.halfspace_ok[row["x"]]


def test_delta_measure_is_flat():
    mu = BoundaryMeasure(atoms=[(0.0, 1.0)])
    scan = fbi_transform(mu, FbiPlan((0.0,), ladder=default_ladder(8.0, 64.0)))
    vals, _ = scan.series(0.0, 1)
    np.testing.assert_allclose(vals, 1.0, atol=1e-14)
    assert fit_decay(scan, 0.0, 1).cls == FLAT


def test_fit_synthetic_exponential():
    ladder = default_ladder()
    fit = fit_decay_values(ladder, np.exp(-0.3 * ladder))
    assert fit.cls == EXPONENTIAL and fit.rate == pytest.approx(0.30, abs=0.02)


def test_fit_synthetic_polynomial():
    ladder = default_ladder()
    fit = fit_decay_values(ladder, ladder ** -2.0)
    assert fit.cls == POLYNOMIAL and fit.order == pytest.approx(2.0, abs=0.1)


def test_fit_floor_limited():
    ladder = default_ladder()
    vals = np.exp(-0.3 * ladder)
    floors = np.full(ladder.size, 1e-20)
    fit = fit_decay_values(ladder, vals, floors)
    assert fit.cls == EXPONENTIAL and fit.floor_limited
    assert fit.rate == pytest.approx(0.3, abs=0.02)


def test_fit_needs_window():
    with pytest.raises(ValueError):
        fit_decay_values([1.0, 2.0, 3.0], [1.0, 0.5, 0.2])


@pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0])
def test_kappa_sweep_smooth_trace(kappa):
    u = _sampled(lambda v: np.cos(v))
    plan = FbiPlan((0.0,), kappa=kappa)
    scan = fbi_generalized(u, FirstIntegral.closed_form(x + 0 * t), plan)
    for d in (1, -1):
        assert fit_decay(scan, 0.0, d).cls == EXPONENTIAL


def test_generalized_rejects_tower_only_trace():
    p = preset("example41")
    tr = p.trace("h")
    tr.first_integral = None
    with pytest.raises(ValueError):
        fbi_generalized(tr, None, FbiPlan((0.0,)))


def test_first_integral_trace_smooth_at_real_direction_point():
    p = preset("example41")
    rep = wavefront_report(p.trace("Z"), (0.5,), FbiPlan((0.5,), cutoff_radius=0.5))
    assert rep.in_wf(0.5) == frozenset()


# ---------------------------------------------------------------------------
# inversion


def _roundtrip(u, eps=1e-3, extrapolate=False, xi_max=160.0):
    cutoff = make_bump(0.0, 4.0, 2)
    scan = dense_scan(u, cutoff, xi_max=xi_max)
    xs = np.linspace(-1.5, 1.5, 61)
    rec = fbi_inverse(scan, eps, xs, extrapolate=extrapolate)
    return float(np.max(np.abs(rec - u(xs))))


def test_inversion_round_trip_smooth():
    assert _roundtrip(lambda v: np.cos(2 * v) + 0.5 * v) < 5e-3


def test_inversion_extrapolation_helps_oscillation():
    u = lambda v: np.exp(5j * v)
    plain, extra = _roundtrip(u), _roundtrip(u, extrapolate=True)
    assert extra < plain / 10 and extra < 1e-3


def test_inversion_tail_check():
    scan = dense_scan(lambda v: np.ones_like(v), make_bump(0.0, 4.0, 2), xi_max=20.0)
    with pytest.raises(QuadratureError, match="coverage"):
        fbi_inverse(scan, 1e-4, np.array([0.0]))


def test_inversion_eps_positive():
    scan = dense_scan(lambda v: np.ones_like(v), make_bump(0.0, 4.0, 2), xi_max=20.0)
    with pytest.raises(ValueError):
        fbi_inverse(scan, 0.0)


def test_calibration_matches_closed_form_constant():
    assert calibrate_inversion() == pytest.approx(INVERSION_CONSTANT, rel=2e-3)
    assert INVERSION_CONSTANT == pytest.approx(1 / (2 * math.pi ** 1.5), rel=1e-15)
