"""Planar vector fields ``L = d/dt + a(x, t) d/dx`` and test functions.

A field carries its coefficient both as a vectorized callable and, when
available, as a sympy expression in the module symbols :data:`x` and
:data:`t`.  The expression is what the correction tower in
:mod:`microlocal.trace` differentiates.
"""
from dataclasses import dataclass, field as dc_field
from functools import cached_property
import json
import logging
import math
import warnings

import numpy as np
import sympy as sp

from .quadrature import panel_rule

LOGGER = logging.getLogger(__name__)

x, t = sp.symbols("x t", real=True)

DEFAULT_TAYLOR_ORDER = 8


def lambdify_xt(expr):
    """Vectorized complex callable ``(x, t) -> expr`` that broadcasts constants."""
    fn = sp.lambdify((x, t), expr, modules="numpy")

    def call(xv, tv):
        xv = np.asarray(xv, dtype=float)
        tv = np.asarray(tv, dtype=float)
        with np.errstate(all="ignore"):
            out = fn(xv, tv)
        return np.broadcast_to(np.asarray(out, dtype=complex), np.broadcast(xv, tv).shape).copy()

    return call


def lambdify_x(expr):
    fn = sp.lambdify(x, expr, modules="numpy")

    def call(xv):
        xv = np.asarray(xv, dtype=float)
        with np.errstate(all="ignore"):
            out = fn(xv)
        return np.broadcast_to(np.asarray(out, dtype=complex), xv.shape).copy()

    return call


@dataclass(frozen=True)
class Domain:
    x_lo: float
    x_hi: float
    T: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValueError(f"empty x-range [{self.x_lo}, {self.x_hi}]")
        if not self.T > 0:
            raise ValueError(f"depth T must be positive, got {self.T}")

    def contains(self, xv):
        xv = np.asarray(xv)
        return bool(np.all((xv >= self.x_lo) & (xv <= self.x_hi)))

    def to_dict(self):
        return {"x_lo": self.x_lo, "x_hi": self.x_hi, "T": self.T}


@dataclass(frozen=True, eq=False)
class PlanarVectorField:
    """The coefficient ``a`` of ``L = d/dt + a d/dx`` on a rectangle.

    ``taylor[m]`` is the x-callable ``a_m`` with
    ``a(x, t) = sum_m a_m(x) t**m + O(t**(K+1))``.
    """

    name: str
    a: object
    taylor: tuple
    domain: Domain
    expr: object = None
    preset: str = None
    taylor_exprs: tuple = dc_field(default=None, repr=False)

    @classmethod
    def from_expr(cls, name, expr, domain, order=DEFAULT_TAYLOR_ORDER, taylor=None, preset=None):
        """Build a field from a sympy expression in ``x`` and ``t``.

        ``taylor`` overrides the t-expansion, which is otherwise read off
        ``sympy.series``; fields that are flat at ``t = 0`` need it.
        """
        expr = sp.sympify(expr)
        if taylor is None:
            series = sp.expand(sp.series(expr, t, 0, order + 1).removeO())
            taylor = [sp.simplify(series.coeff(t, m)) for m in range(order + 1)]
        taylor = tuple(sp.sympify(c) for c in taylor)
        return cls(
            name=name,
            a=lambdify_xt(expr),
            taylor=tuple(lambdify_x(c) for c in taylor),
            domain=domain,
            expr=expr,
            preset=preset,
            taylor_exprs=taylor,
        )

    @classmethod
    def from_taylor_tables(cls, name, x_grid, tables, domain, max_degree=12):
        """Field whose coefficient is the t-polynomial with tabulated x-coefficients.

        Each row of ``tables`` (one per power of ``t``) is fitted by a
        Chebyshev series on the domain, so the result has an exact
        symbolic form and can feed the correction tower.
        """
        x_grid = np.asarray(x_grid, dtype=float)
        tables = np.asarray(tables, dtype=complex)
        if tables.ndim != 2 or tables.shape[1] != x_grid.size:
            raise ValueError("taylor tables must have shape (K+1, len(x_grid))")
        deg = min(max_degree, x_grid.size - 1)
        u_expr = (2 * x - (domain.x_lo + domain.x_hi)) / (domain.x_hi - domain.x_lo)
        u = (2 * x_grid - (domain.x_lo + domain.x_hi)) / (domain.x_hi - domain.x_lo)
        coeffs = []
        for row in tables:
            cr = np.polynomial.chebyshev.chebfit(u, row.real, deg)
            ci = np.polynomial.chebyshev.chebfit(u, row.imag, deg)
            tail = np.max(np.abs(cr[-2:]) + np.abs(ci[-2:]))
            scale = max(np.max(np.abs(row)), 1e-300)
            if tail > 1e-8 * scale:
                warnings.warn(
                    f"taylor table under-resolved on the x-grid (Chebyshev tail {tail:.2e})",
                    stacklevel=2,
                )
            coeffs.append(
                sum(
                    (sp.Float(cr[n]) + sp.I * sp.Float(ci[n])) * sp.chebyshevt(n, u_expr)
                    for n in range(deg + 1)
                )
            )
        taylor = [sp.expand(c) for c in coeffs]
        expr = sum(c * t ** m for m, c in enumerate(taylor))
        return cls.from_expr(name, expr, domain, order=len(taylor) - 1, taylor=taylor)

    def __call__(self, xv, tv):
        return self.a(xv, tv)

    @property
    def order(self):
        return len(self.taylor) - 1

    def X(self, xv, tv):
        """Real part of the x-coefficient (``L = X + iY``)."""
        return self.a(xv, tv).real

    def Y(self, xv, tv):
        return self.a(xv, tv).imag

    @cached_property
    def da_dx(self):
        if self.expr is None:
            raise ValueError(f"field {self.name!r} has no symbolic form")
        return lambdify_xt(sp.diff(self.expr, x))

    def taylor_eval(self, xv, tv, upto=None):
        upto = self.order if upto is None else upto
        tv = np.asarray(tv, dtype=float)
        return sum(self.taylor[m](xv) * tv ** m for m in range(upto + 1))

    def taylor_constant(self, nx=21, nt=12):
        """Fitted ``C`` in ``|a - sum a_m t^m| <= C t^(K+1)`` on a sample grid."""
        xs = np.linspace(self.domain.x_lo, self.domain.x_hi, nx)
        ts = np.geomspace(self.domain.T * 0.02, self.domain.T * 0.5, nt)
        X, Tm = np.meshgrid(xs, ts)
        A = self.a(X, Tm)
        err = np.abs(A - self.taylor_eval(X, Tm))
        # below roundoff the ratio measures noise, not the remainder
        err[err < 1e-13 * np.maximum(1.0, np.abs(A))] = 0.0
        return float(np.max(err / Tm ** (self.order + 1)))

    def to_dict(self):
        out = {"name": self.name, "domain": self.domain.to_dict()}
        if self.preset:
            out["preset"] = self.preset
        if self.expr is not None:
            out["expression"] = sp.srepr(self.expr)
        return out


def field_from_dict(doc, presets=None):
    """Load a field description.

    Recognized keys: ``name``, ``domain`` and one of ``preset`` (resolved
    through ``presets``), ``expression`` (sympy source or ``srepr``) or
    ``taylor`` together with ``x_grid``.
    """
    domain = Domain(**doc["domain"]) if "domain" in doc else None
    if "preset" in doc:
        if presets is None:
            from .presets import preset as presets
        fld = presets(doc["preset"]).field
        if domain is not None and domain != fld.domain:
            fld = PlanarVectorField.from_expr(
                fld.name, fld.expr, domain, taylor=fld.taylor_exprs, preset=fld.preset
            )
        return fld
    if domain is None:
        raise ValueError("field description needs a domain")
    name = doc.get("name", "field")
    if "expression" in doc:
        src = doc["expression"]
        expr = sp.sympify(src, locals={"x": x, "t": t})
        return PlanarVectorField.from_expr(name, expr, domain)
    if "taylor" in doc:
        tables = np.array(doc["taylor"], dtype=float)
        tables = tables[..., 0] + 1j * tables[..., 1]
        return PlanarVectorField.from_taylor_tables(name, doc["x_grid"], tables, domain)
    raise ValueError("field description needs one of 'preset', 'expression', 'taylor'")


def load_field(path):
    """Read a field description, or the ``field`` entry of a materialized preset."""
    with open(path) as fh:
        doc = json.load(fh)
    return field_from_dict(doc["field"] if "field" in doc else doc)


# ---------------------------------------------------------------------------
# test functions


class TestFunction:
    """Compactly supported function with exact derivatives up to ``max_order``."""

    __test__ = False  # not a pytest class

    support = (0.0, 0.0)
    max_order = 0

    def deriv(self, n, xv):
        raise NotImplementedError

    def __call__(self, xv):
        return self.deriv(0, xv)

    def sup_norms(self, upto, n=4001):
        """``sup |d^n phi|`` for ``n = 0..upto`` sampled on a fine grid."""
        xs = np.linspace(*self.support, n)
        return np.array([np.max(np.abs(self.deriv(m, xs))) for m in range(upto + 1)])

    def breakpoints(self):
        return self.support

    def flat_zone(self):
        """Interval on which the function is locally constant, or ``None``."""
        return None


def _bump_polys(nmax):
    """Polynomials ``R_n`` with ``d^n/du^n exp(-1/(1-u^2)) = R_n (1-u^2)^(-2n) exp(...)``."""
    P = np.polynomial.Polynomial
    one_minus = P([1.0, 0.0, -1.0])
    u = P([0.0, 1.0])
    polys = [P([1.0])]
    for n in range(nmax):
        r = polys[-1]
        polys.append(r.deriv() * one_minus ** 2 + 4 * n * u * r * one_minus - 2 * u * r)
    return polys


_R = _bump_polys(16)


def _psi_deriv(n, u):
    """``n``-th derivative of ``exp(-1/(1-u^2))`` (zero outside ``(-1, 1)``)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    um = u[m]
    s = 1.0 - um * um
    with np.errstate(under="ignore"):
        out[m] = _R[n](um) * np.exp(-1.0 / s - 2 * n * np.log(s))
    return out


class _SmoothStep:
    """``S(v) = int_{-1}^v psi / int psi`` for ``psi = exp(-1/(1-u^2))``.

    Values come from a cumulative table plus a short Gauss correction;
    derivatives use the exact ``R_n`` recursion.
    """

    def __init__(self, nodes=2048):
        self.edges = np.linspace(-1.0, 1.0, nodes + 1)
        xs, ws = panel_rule(self.edges, 12)
        vals = (ws * _psi_deriv(0, xs)).reshape(nodes, 12).sum(axis=1)
        cum = np.concatenate([[0.0], np.cumsum(vals)])
        self.mass = cum[-1]
        self.table = cum / self.mass
        self.h = 2.0 / nodes

    def value(self, v):
        v = np.clip(np.asarray(v, dtype=float), -1.0, 1.0)
        j = np.clip(np.rint((v + 1.0) / self.h).astype(int), 0, self.table.size - 1)
        v0 = self.edges[j]
        g, w = np.polynomial.legendre.leggauss(8)
        half = 0.5 * (v - v0)
        pts = (0.5 * (v + v0))[..., None] + half[..., None] * g
        corr = np.sum(w * _psi_deriv(0, pts), axis=-1) * half
        return self.table[j] + corr / self.mass

    def deriv(self, n, v):
        if n == 0:
            return self.value(v)
        return _psi_deriv(n - 1, v) / self.mass


_STEP = _SmoothStep()


class Bump(TestFunction):
    """Even plateau bump: ``1`` on ``|x - c| <= r/2``, ``0`` for ``|x - c| >= r``.

    On each transition zone the profile is ``1 - S(v)`` where ``S`` is the
    normalized integral of ``exp(-1/(1-u^2))``, so
    ``|d^n phi| <= C_n r^-n`` with ``C_n`` independent of ``r``.
    """

    def __init__(self, center, radius, max_order):
        if not radius > 0:
            raise ValueError(f"bump radius must be positive, got {radius}")
        if max_order < 0 or max_order > 15:
            raise ValueError("max_order must lie in 0..15")
        self.center = float(center)
        self.radius = float(radius)
        self.max_order = int(max_order)
        self.support = (self.center - self.radius, self.center + self.radius)

    def __repr__(self):
        return f"Bump(center={self.center}, radius={self.radius}, max_order={self.max_order})"

    def deriv(self, n, xv):
        if n > self.max_order:
            raise ValueError(f"derivative order {n} exceeds max_order {self.max_order}")
        xv = np.asarray(xv, dtype=float)
        r = self.radius
        y = xv - self.center
        ay = np.abs(y)
        out = np.zeros(xv.shape)
        if n == 0:
            out[ay <= 0.5 * r] = 1.0
        trans = (ay > 0.5 * r) & (ay < r)
        if np.any(trans):
            v = (ay[trans] - 0.75 * r) / (0.25 * r)
            sign = np.where(y[trans] > 0, 1.0, (-1.0) ** n)
            dv = (4.0 / r) ** n
            if n == 0:
                out[trans] = 1.0 - _STEP.value(v)
            else:
                out[trans] = -sign * dv * _STEP.deriv(n, v)
        return out

    def breakpoints(self):
        c, r = self.center, self.radius
        return (c - r, c - 0.5 * r, c + 0.5 * r, c + r)

    def flat_zone(self):
        return (self.center - 0.5 * self.radius, self.center + 0.5 * self.radius)

    @property
    def integral(self):
        return 1.5 * self.radius


def make_bump(center, radius, max_order):
    return Bump(center, radius, max_order)


class ProductTestFunction(TestFunction):
    """Product of a smooth (possibly complex) factor with a test function.

    ``factor_derivs(n, x)`` must return the ``n``-th derivative of the
    factor; derivatives of the product follow from Leibniz' rule.
    """

    def __init__(self, factor_derivs, base):
        self.factor_derivs = factor_derivs
        self.base = base
        self.support = base.support
        self.max_order = base.max_order

    def deriv(self, n, xv):
        xv = np.asarray(xv, dtype=float)
        return sum(
            math.comb(n, i) * self.factor_derivs(i, xv) * self.base.deriv(n - i, xv)
            for i in range(n + 1)
        )

    def breakpoints(self):
        return self.base.breakpoints()


class LinearCombination(TestFunction):
    """``sum_i w_i phi_i`` for test functions ``phi_i``."""

    def __init__(self, weights, parts):
        self.weights = [complex(w) for w in weights]
        self.parts = list(parts)
        self.support = (min(p.support[0] for p in parts), max(p.support[1] for p in parts))
        self.max_order = min(p.max_order for p in parts)

    def deriv(self, n, xv):
        return sum(w * p.deriv(n, xv) for w, p in zip(self.weights, self.parts))

    def breakpoints(self):
        return tuple(sorted({b for p in self.parts for b in p.breakpoints()}))


# ---------------------------------------------------------------------------
# pointwise classification


ELLIPTIC = "Elliptic"
REAL_DIRECTION = "RealDirection"
DEGENERATE = "Degenerate"
INFINITE = "infinite-to-tolerance"


@dataclass(frozen=True)
class PointClass:
    tag: str
    order: object  # int or INFINITE

    def __post_init__(self):
        if self.tag not in (ELLIPTIC, REAL_DIRECTION, DEGENERATE):
            raise ValueError(f"unknown tag {self.tag!r}")


def classify_point(fld, x0, tol=1e-12):
    """Elliptic if ``Im a_0(x0) != 0``, else the first ``l`` with ``Im a_l(x0) != 0``."""
    if not fld.taylor:
        raise ValueError("field has no Taylor data")
    if not fld.domain.contains(x0):
        raise ValueError(f"x = {x0} outside [{fld.domain.x_lo}, {fld.domain.x_hi}]")
    im = [float(np.imag(c(np.array(x0, dtype=float)))) for c in fld.taylor]
    if abs(im[0]) > tol:
        return PointClass(ELLIPTIC, 0)
    for m, v in enumerate(im):
        if abs(v) > tol:
            return PointClass(REAL_DIRECTION, m)
    return PointClass(DEGENERATE, INFINITE)


def _merge_intervals(xs, mask):
    out = []
    start = None
    for xi, m in zip(xs, mask):
        if m and start is None:
            start = xi
        if m:
            last = xi
        if not m and start is not None:
            out.append((float(start), float(last)))
            start = None
    if start is not None:
        out.append((float(start), float(last)))
    return out


def detect_F0(fld, eps, tol, x_grid, nt=1024):
    """Grid approximation of ``{x : b(x, t) = 0 for t in [0, eps]}`` for ``a = i b``.

    The t-samples are the multiples of ``T / nt`` in ``[0, eps]``, so the
    sample sets for increasing ``eps`` are nested.
    """
    dom = fld.domain
    if eps > dom.T:
        raise ValueError(f"eps = {eps} exceeds the field depth T = {dom.T}")
    xs = np.asarray(x_grid, dtype=float)
    gx = np.linspace(dom.x_lo, dom.x_hi, 101)
    gt = np.linspace(0.0, dom.T, 65)
    A = fld.a(*np.meshgrid(gx, gt))
    scale = np.max(np.abs(A))
    dev = np.max(np.abs(A.real))
    if dev > tol * scale and dev > 0:
        raise ValueError(f"field is not i*(real): max |Re a| = {dev:.3e}")
    dt = dom.T / nt
    ts = dt * np.arange(int(np.floor(eps / dt + 1e-9)) + 1)
    X, Tm = np.meshgrid(xs, ts)
    b = fld.a(X, Tm).imag
    mask = np.max(np.abs(b), axis=0) <= tol
    return _merge_intervals(xs, mask)
