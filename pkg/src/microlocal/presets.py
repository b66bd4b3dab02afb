"""Named vector fields with exact first integrals, solutions and trace oracles."""
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache
import logging
import math

import numpy as np
import sympy as sp
from scipy.integrate import quad

from .field import Domain, PlanarVectorField, x, t
from .first_integral import CLOSED_FORM, FirstIntegral
from .trace import SampledTrace, SolutionSampler, TraceFunctional

LOGGER = logging.getLogger(__name__)

CUT_TOL = 1e-14


@dataclass
class Solution:
    f: object
    N: int
    singular_points: tuple = ()
    note: str = ""

    def sampler(self, T, name="f"):
        return SolutionSampler(self.f, self.N, T, name=name, singular_points=self.singular_points)


@dataclass
class Preset:
    name: str
    field: PlanarVectorField
    integral: FirstIntegral
    solutions: dict
    trace_oracle: dict = dc_field(default_factory=dict)
    notes: str = ""

    def sampler(self, solution):
        return self.solutions[solution].sampler(self.field.domain.T, f"{self.name}.{solution}")

    def trace(self, solution, k=None, T=None):
        """:class:`TraceFunctional` of a named solution, carrying the exact integral."""
        return TraceFunctional(self.sampler(solution), self.field, k=k, T=T, first_integral=self.integral)

    def residual(self, solution, x_grid, t_grid, h=1e-4):
        """Max 4th-order finite-difference ``|Lf|`` on the grid."""
        f = self.solutions[solution].f
        Xg, Tg = np.meshgrid(np.asarray(x_grid, float), np.asarray(t_grid, float))

        def d4(fn):
            return (fn(-2 * h) - 8 * fn(-h) + 8 * fn(h) - fn(2 * h)) / (12 * h)

        ft = d4(lambda d: f(Xg, Tg + d))
        fx = d4(lambda d: f(Xg + d, Tg))
        return float(np.max(np.abs(ft + self.field.a(Xg, Tg) * fx)))


class PrincipalValueTrace:
    """``p.v. 1/(x - pole) + i pi delta_pole``, the boundary value of ``1/(x - pole - it)``."""

    def __init__(self, pole=0.0):
        self.pole = float(pole)
        self.singular_points = (self.pole,)

    def pair(self, phi):
        lo, hi = phi.support
        pv = quad(lambda s: float(phi(np.array([s]))[0]), lo, hi, weight="cauchy", wvar=self.pole,
                  points=None, limit=400, epsabs=1e-13, epsrel=1e-12)[0] if lo < self.pole < hi else \
            quad(lambda s: float(phi(np.array([s]))[0]) / (s - self.pole), lo, hi, limit=400)[0]
        inside = lo <= self.pole <= hi
        return pv + (1j * math.pi * float(phi(np.array([self.pole]))[0]) if inside else 0.0)


# ---------------------------------------------------------------------------
# W_k and h


def branch_sqrt(g, strict=False):
    """Square root with the cut on the negative imaginary axis, ``arg in (-pi/2, 3pi/2]``.

    Arguments within ``1e-14`` of the cut are nudged by ``+1e-14 i`` (with a
    logged warning); ``strict=True`` raises instead.
    """
    g = np.asarray(g, dtype=complex)
    near = (np.abs(g.real) <= CUT_TOL) & (g.imag < -CUT_TOL)
    if np.any(near):
        bad = g[near].ravel()[0]
        if strict:
            raise ValueError(f"argument {bad} lies on the branch cut (negative imaginary axis)")
        LOGGER.warning("argument %s on the branch cut, perturbed by +1e-14 i", bad)
        g = np.where(near, g + 1j * CUT_TOL + CUT_TOL, g)
    r = np.abs(g)
    th = np.angle(g)
    th = np.where(th <= -math.pi / 2, th + 2 * math.pi, th)
    out = np.sqrt(r) * np.exp(0.5j * th)
    return out if out.ndim else complex(out)


def _z41(xv, tv):
    return np.asarray(xv, float) * (1 + 1j * np.asarray(tv, float) ** 2)


def g_k(k, xv, tv):
    return _z41(xv, tv) ** 2 - 1.0 / k ** 2


def wk_eval(k, xv, tv, strict=False):
    """``W_k = (Z^2 - 1/k^2)^(1/2)`` for ``Z = x (1 + i t^2)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return branch_sqrt(g_k(k, xv, tv), strict=strict)


@lru_cache(maxsize=None)
def wk_coefficients(n):
    """``A_j`` with ``D^n W = sum_j A_j g^(1/2-n+j) (Dg)^(n-2j) (D^2 g)^j`` (``D = d/dx``).

    Valid for any ``g`` with ``D^3 g = 0``; the recursion is obtained by
    differentiating the formula once more.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    A = {0: Fraction(1, 2)}
    for m in range(1, n):
        nxt = {}
        for j in range(m // 2 + 1):
            a = A.get(j, 0)
            if a:
                nxt[j] = nxt.get(j, 0) + (Fraction(1, 2) - m + j) * a
                if m - 2 * j > 0:
                    nxt[j + 1] = nxt.get(j + 1, 0) + (m - 2 * j) * a
        A = nxt
    return tuple(A.get(j, Fraction(0)) for j in range(n // 2 + 1))


def wk_derivative(k, n, xv, tv):
    """``d^n W_k / dx^n`` from the closed formula; ``t = 0`` is refused."""
    tv = np.asarray(tv, float)
    if np.any(tv == 0):
        raise ValueError("the derivative formula is stated for t != 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    xv = np.asarray(xv, float)
    g = g_k(k, xv, tv)
    s = branch_sqrt(g)
    w = (1 + 1j * tv ** 2) ** 2
    Dg = 2 * xv * w
    D2g = 2 * w
    out = 0
    for j, a in enumerate(wk_coefficients(n)):
        out = out + float(a) * s * g ** (j - n) * Dg ** (n - 2 * j) * D2g ** j
    return out


def h_series(xv, tv, K=8, R=None):
    """Partial sum ``sum_{k<=K} 3^-k W_k`` and the bound ``(R^2+1)^(1/2) 3^-K / 2`` on the tail."""
    if K < 1:
        raise ValueError("K must be >= 1")
    xv = np.asarray(xv, float)
    tv = np.asarray(tv, float)
    val = sum(3.0 ** -k * wk_eval(k, xv, tv) for k in range(1, K + 1))
    if R is None:
        R = float(np.max(np.abs(_z41(xv, tv))))
    return val, math.sqrt(R * R + 1) * 3.0 ** -K / 2


# ---------------------------------------------------------------------------
# presets


def _closed(expr, domain):
    return FirstIntegral.closed_form(expr, domain)


def _xt(fn):
    def call(xv, tv):
        xv, tv = np.broadcast_arrays(np.asarray(xv, float), np.asarray(tv, float))
        return np.asarray(fn(xv, tv), dtype=complex)

    return call


def _cauchy_riemann():
    dom = Domain(-2.0, 2.0, 1.0)
    fld = PlanarVectorField.from_expr("cauchy_riemann", sp.I, dom, preset="cauchy_riemann")
    Z = _closed(x - sp.I * t, dom)
    sols = {
        "inv": Solution(_xt(lambda X, T: 1.0 / (X - 1j * T)), 1, (0.0,), "1/(x - it)"),
        "Z": Solution(_xt(lambda X, T: X - 1j * T), 0),
        "Z2": Solution(_xt(lambda X, T: (X - 1j * T) ** 2), 0),
    }
    oracle = {
        "inv": PrincipalValueTrace(0.0),
        "Z": SampledTrace(lambda X: X + 0j, "x"),
        "Z2": SampledTrace(lambda X: X * X + 0j, "x^2"),
    }
    return Preset("cauchy_riemann", fld, Z, sols, oracle, "L = d/dt + i d/dx; holomorphic model")


def _mizohata():
    dom = Domain(-1.0, 1.0, 1.0)
    fld = PlanarVectorField.from_expr("mizohata", sp.I * t, dom, preset="mizohata")
    Z = _closed(x - sp.I * t ** 2 / 2, dom)
    sols = {
        "Z": Solution(_xt(lambda X, T: X - 0.5j * T * T), 0),
        "Z2": Solution(_xt(lambda X, T: (X - 0.5j * T * T) ** 2), 0),
    }
    oracle = {"Z": SampledTrace(lambda X: X + 0j, "x"), "Z2": SampledTrace(lambda X: X * X + 0j, "x^2")}
    return Preset("mizohata", fld, Z, sols, oracle, "L = d/dt + i t d/dx")


H_TERMS = 8


def _example41():
    dom = Domain(-1.5, 1.5, 1.0)
    expr = -2 * sp.I * x * t / (1 + sp.I * t ** 2)
    fld = PlanarVectorField.from_expr("example41", expr, dom, preset="example41")
    Z = _closed(x * (1 + sp.I * t ** 2), dom)
    sols = {"Z": Solution(_xt(_z41), 0)}
    oracle = {"Z": SampledTrace(lambda X: X + 0j, "x")}
    for k in range(1, 6):
        pts = (-1.0 / k, 1.0 / k)
        sols[f"W{k}"] = Solution(_xt(lambda X, T, k=k: wk_eval(k, X, T)), 0, pts)
        oracle[f"W{k}"] = SampledTrace(lambda X, k=k: wk_eval(k, X, 0 * X), f"W{k}(x,0)", pts, pts)
    hpts = tuple(sorted({q / k for k in range(1, H_TERMS + 1) for q in (-1, 1)}))
    sols["h"] = Solution(_xt(lambda X, T: h_series(X, T, H_TERMS)[0]), 0, hpts, f"K = {H_TERMS}")
    oracle["h"] = SampledTrace(lambda X: h_series(X, 0 * X, H_TERMS)[0], "h(x,0)", hpts, hpts)
    return Preset("example41", fld, Z, sols, oracle, "L = d/dt - 2ixt/(1+it^2) d/dx; Z = x(1+it^2)")


def _tube_phi(tv):
    tv = np.asarray(tv, float)
    out = np.zeros(tv.shape)
    pos = tv != 0
    tp = tv[pos]
    with np.errstate(under="ignore"):
        out[pos] = np.exp(-1.0 / tp ** 2) * np.cos(1.0 / tp)
    return out


def _tube_phi_t(tv):
    tv = np.asarray(tv, float)
    out = np.zeros(tv.shape)
    pos = tv != 0
    tp = tv[pos]
    with np.errstate(under="ignore"):
        e = np.exp(-1.0 / tp ** 2)
        out[pos] = e * (2 * np.cos(1.0 / tp) / tp ** 3 + np.sin(1.0 / tp) / tp ** 2)
    return out


def _tube1d():
    dom = Domain(-1.0, 1.0, 0.5)
    phi = sp.exp(-1 / t ** 2) * sp.cos(1 / t)
    expr = -sp.I * sp.diff(phi, t)
    base = PlanarVectorField.from_expr("tube1d", expr, dom, taylor=[0] * 9, preset="tube1d")
    # the lambdified coefficient is 0 * nan at t = 0; use the flat limit there
    a = _xt(lambda X, T: -1j * _tube_phi_t(T) + 0 * X)
    fld = PlanarVectorField(base.name, a, base.taylor, dom, base.expr, base.preset, base.taylor_exprs)
    Z = FirstIntegral(
        CLOSED_FORM,
        _xt(lambda X, T: X + 1j * _tube_phi(T)),
        _xt(lambda X, T: np.ones_like(X)),
        _xt(lambda X, T: 1j * _tube_phi_t(T) + 0 * X),
        expr=x + sp.I * phi,
        domain=dom,
    )
    sols = {
        "Z": Solution(Z.Z, 0),
        "Z2": Solution(_xt(lambda X, T: (X + 1j * _tube_phi(T)) ** 2), 0),
    }
    oracle = {"Z": SampledTrace(lambda X: X + 0j, "x"), "Z2": SampledTrace(lambda X: X * X + 0j, "x^2")}
    return Preset("tube1d", fld, Z, sols, oracle, "Phi = exp(-1/t^2) cos(1/t); L = d/dt - i Phi_t d/dx")


def _thm31ii():
    dom = Domain(-1.0, 1.0, 1.0)
    fld = PlanarVectorField.from_expr("thm31ii", sp.I * x * t, dom, preset="thm31ii")
    Z = _closed(x * sp.exp(-sp.I * t ** 2 / 2), dom)

    def u(X, T):
        Zv = X * np.exp(-0.5j * T * T)
        return np.sqrt(Zv * Zv)  # principal branch

    sols = {
        "Z": Solution(Z.Z, 0),
        "u3": Solution(_xt(lambda X, T: u(X, T) ** 3), 0, (0.0,), "u = <Z>, f = u^3"),
    }
    oracle = {
        "Z": SampledTrace(lambda X: X + 0j, "x"),
        "u3": SampledTrace(lambda X: np.sqrt(X * X + 0j) ** 3, "|x|^3", (0.0,), (0.0,)),
    }
    return Preset("thm31ii", fld, Z, sols, oracle, "b = x t; trace of u^3 is |x|^3 (lambda = 1)")


def _degenerate_axis():
    dom = Domain(-1.0, 1.0, 1.0)
    fld = PlanarVectorField.from_expr("degenerate_axis", sp.I * x, dom, preset="degenerate_axis")
    Z = _closed(x * sp.exp(-sp.I * t), dom)
    sols = {
        "Z": Solution(Z.Z, 0),
        "Z2": Solution(_xt(lambda X, T: (X * np.exp(-1j * T)) ** 2), 0),
    }
    oracle = {"Z": SampledTrace(lambda X: X + 0j, "x"), "Z2": SampledTrace(lambda X: X * X + 0j, "x^2")}
    return Preset("degenerate_axis", fld, Z, sols, oracle, "L = d/dt + i x d/dx; F0 = {0}")


_BUILDERS = {
    "cauchy_riemann": _cauchy_riemann,
    "mizohata": _mizohata,
    "example41": _example41,
    "tube1d": _tube1d,
    "thm31ii": _thm31ii,
    "degenerate_axis": _degenerate_axis,
}

PRESET_NAMES = tuple(_BUILDERS)


@lru_cache(maxsize=None)
def preset(name):
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}") from None
