"""First integrals ``Z = x + i Phi`` of ``L = d/dt + a d/dx``.

Series integrals are built by matching powers of ``t`` in
``Z_t + a Z_x = 0``; x-derivatives of the coefficients are spectral
(Chebyshev) on the field domain.
"""
from dataclasses import dataclass
import io
import math
import warnings

import numpy as np
from numpy.polynomial import Chebyshev
import sympy as sp

from .field import lambdify_xt, x as X_SYM, t as T_SYM

CLOSED_FORM = "ClosedForm"
SERIES = "Series"

DEFAULT_CHEB_DEGREE = 48


class FirstIntegral:
    """A function ``Z(x, t)`` with ``Z(x, 0) = x`` and ``LZ = O(t^k)``.

    ``order`` is ``None`` for exact (closed-form) integrals.
    """

    def __init__(self, kind, Z, dZ_dx, dZ_dt, order=None, series_c=None, expr=None, domain=None):
        if kind not in (CLOSED_FORM, SERIES):
            raise ValueError(f"unknown kind {kind!r}")
        self.kind = kind
        self._Z = Z
        self._dZ_dx = dZ_dx
        self._dZ_dt = dZ_dt
        self.order = order
        self.series_c = series_c
        self.expr = expr
        self.domain = domain

    @classmethod
    def closed_form(cls, expr, domain=None):
        expr = sp.sympify(expr)
        return cls(
            CLOSED_FORM,
            lambdify_xt(expr),
            lambdify_xt(sp.diff(expr, X_SYM)),
            lambdify_xt(sp.diff(expr, T_SYM)),
            order=None,
            expr=expr,
            domain=domain,
        )

    @classmethod
    def from_series(cls, coeffs, order, domain=None):
        """Series integral ``x + sum_m coeffs[m-1](x) t^m`` from Chebyshev objects."""
        coeffs = list(coeffs)
        dcoeffs = [c.deriv() for c in coeffs]

        def Z(xv, tv):
            xv, tv = np.broadcast_arrays(np.asarray(xv, float), np.asarray(tv, float))
            out = xv.astype(complex)
            for m, c in enumerate(coeffs, start=1):
                out = out + c(xv) * tv ** m
            return out

        def dZ_dx(xv, tv):
            xv, tv = np.broadcast_arrays(np.asarray(xv, float), np.asarray(tv, float))
            out = np.ones(xv.shape, dtype=complex)
            for m, c in enumerate(dcoeffs, start=1):
                out = out + c(xv) * tv ** m
            return out

        def dZ_dt(xv, tv):
            xv, tv = np.broadcast_arrays(np.asarray(xv, float), np.asarray(tv, float))
            out = np.zeros(xv.shape, dtype=complex)
            for m, c in enumerate(coeffs, start=1):
                out = out + m * c(xv) * tv ** (m - 1)
            return out

        return cls(SERIES, Z, dZ_dx, dZ_dt, order=order, series_c=coeffs, domain=domain)

    @property
    def exact(self):
        return self.order is None

    def Z(self, xv, tv):
        return self._Z(xv, tv)

    __call__ = Z

    def phi(self, xv, tv):
        """``Phi = Im Z``."""
        return self._Z(xv, tv).imag

    def dZ_dx(self, xv, tv):
        return self._dZ_dx(xv, tv)

    def dZ_dt(self, xv, tv):
        return self._dZ_dt(xv, tv)

    def coefficient(self, m, xv):
        """``c_m(x)`` of a series integral (``c_0 = 0`` by construction)."""
        if self.series_c is None:
            raise ValueError("closed-form integral has no series coefficients")
        if m == 0:
            return np.zeros(np.shape(xv), dtype=complex)
        if m > len(self.series_c):
            return np.zeros(np.shape(xv), dtype=complex)
        return self.series_c[m - 1](np.asarray(xv, float))

    def real_part_deviation(self, x_grid, t_grid):
        """``max |Re Z - x|``; zero when the coordinates are adapted."""
        Xg, Tg = np.meshgrid(np.asarray(x_grid, float), np.asarray(t_grid, float))
        return float(np.max(np.abs(self.Z(Xg, Tg).real - Xg)))

    def to_dict(self, n=33):
        if self.kind == CLOSED_FORM:
            return {"kind": CLOSED_FORM, "expression": str(self.expr)}
        lo, hi = self.series_c[0].domain if self.series_c else (-1.0, 1.0)
        grid = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * (np.arange(n) + 0.5) / n)[::-1]
        tables = [[[float(v.real), float(v.imag)] for v in c(grid)] for c in self.series_c]
        cheb = [[[float(v.real), float(v.imag)] for v in c.coef] for c in self.series_c]
        return {
            "kind": SERIES,
            "order": self.order,
            "x_grid": [float(g) for g in grid],
            "c": tables,
            "cheb": cheb,
            "cheb_domain": [float(lo), float(hi)],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc["kind"] == CLOSED_FORM:
            return cls.closed_form(sp.sympify(doc["expression"], locals={"x": X_SYM, "t": T_SYM}))
        if "cheb" in doc:
            dom = doc["cheb_domain"]
            coeffs = [Chebyshev([complex(*p) for p in row], domain=dom) for row in doc["cheb"]]
        else:
            grid = np.asarray(doc["x_grid"], float)
            dom = [grid.min(), grid.max()]
            coeffs = []
            for row in doc["c"]:
                vals = np.array([complex(*p) for p in row])
                deg = grid.size - 1
                cr = Chebyshev.fit(grid, vals.real, deg, domain=dom)
                ci = Chebyshev.fit(grid, vals.imag, deg, domain=dom)
                coeffs.append(Chebyshev(cr.coef + 1j * ci.coef, domain=dom))
        return cls.from_series(coeffs, doc["order"])


def _cheb_complex(fn, deg, domain):
    cr = Chebyshev.interpolate(lambda u: np.real(fn(u)), deg, domain=domain)
    ci = Chebyshev.interpolate(lambda u: np.imag(fn(u)), deg, domain=domain)
    return Chebyshev(cr.coef + 1j * ci.coef, domain=domain)


def _chop(c, rel=1e-14):
    """Drop trailing Chebyshev coefficients below ``rel`` times the largest."""
    coef = c.coef
    scale = float(np.max(np.abs(coef))) if coef.size else 0.0
    if scale == 0.0:
        return Chebyshev([0j], domain=c.domain)
    keep = np.nonzero(np.abs(coef) > rel * scale)[0]
    return Chebyshev(coef[: keep[-1] + 1], domain=c.domain)


def _tail(c):
    return float(np.max(np.abs(c.coef[-3:])))


def solve_series(fld, k, deg=DEFAULT_CHEB_DEGREE):
    """Series first integral with ``LZ = O(t^k)``.

    Uses ``c_{m+1} = -(a_m + sum_{p+q=m, q>=1} a_p c_q') / (m+1)``.

    Parameters
    ----------
    fld : PlanarVectorField
        Needs Taylor coefficients ``a_0, ..., a_{k-1}``.
    k : int
        Residual order.
    deg : int
        Chebyshev degree used to represent each coefficient on the domain.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if fld.order < k - 1:
        raise ValueError(f"field has Taylor order {fld.order}, need at least {k - 1}")
    dom = [fld.domain.x_lo, fld.domain.x_hi]
    raw = [_cheb_complex(fld.taylor[m], deg, dom) for m in range(k)]
    for m, am in enumerate(raw):
        scale = max(float(np.max(np.abs(am.coef))), 1e-300)
        if _tail(am) > 1e-10 * scale:
            warnings.warn(
                f"Taylor coefficient a_{m} is under-resolved on the x-grid; "
                f"estimated derivative error {_tail(am) * deg ** 2:.2e}",
                stacklevel=2,
            )
    a = [_chop(am) for am in raw]
    zero = Chebyshev([0j], domain=dom)
    c = [zero]  # c_0 = 0
    dc = [zero]
    for m in range(k):
        acc = a[m]
        for q in range(1, m + 1):
            acc = acc + a[m - q] * dc[q]
        acc = acc.truncate(deg + 1) if len(acc.coef) > deg + 1 else acc
        nxt = _chop(-acc / (m + 1))
        c.append(nxt)
        dc.append(nxt.deriv())
    cleaned = c[1:]
    return FirstIntegral.from_series(cleaned, order=k, domain=fld.domain)


@dataclass
class ResidualResult:
    """Fitted growth of ``max_x |LZ|`` in ``t``."""

    slope: float
    exact: bool
    t: np.ndarray
    residual: np.ndarray

    def __float__(self):
        return float(self.slope)

    def certifies(self, k):
        return self.exact or self.slope >= k - 0.5

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,max_residual\n")
        for tv, rv in zip(self.t, self.residual):
            buf.write(f"{tv:.17g},{rv:.17g}\n")
        return buf.getvalue()


EXACT_THRESHOLD = 1e-12


def _fd4(fn, h):
    return (fn(-2 * h) - 8 * fn(-h) + 8 * fn(h) - fn(2 * h)) / (12 * h)


def residual_check(Z, fld, grid, nx=41, h=1e-3):
    """``r(t) = max_x |Z_t + a Z_x|`` by 4th-order central differences, and its log-log slope.

    The x-samples stay ``2h`` inside the domain, so every stencil is evaluable.
    """
    ts = np.asarray(grid, dtype=float)
    if ts.size < 4:
        raise ValueError("residual_check needs at least 4 t-samples")
    if np.any(ts <= 0):
        raise ValueError("t-samples must be positive")
    dom = fld.domain
    xs = np.linspace(dom.x_lo + 2 * h, dom.x_hi - 2 * h, nx)
    Xg, Tg = np.meshgrid(xs, ts)
    ht = np.minimum(h, 0.25 * Tg)
    Zt = _fd4(lambda d: Z.Z(Xg, Tg + d * ht / h), h) * h / ht
    Zx = _fd4(lambda d: Z.Z(Xg + d, Tg), h)
    r = np.max(np.abs(Zt + fld.a(Xg, Tg) * Zx), axis=1)
    if np.all(r < EXACT_THRESHOLD):
        return ResidualResult(math.inf, True, ts, r)
    # samples at the finite-difference noise floor carry no slope information
    good = r >= EXACT_THRESHOLD
    if np.count_nonzero(good) < 2:
        return ResidualResult(math.inf, False, ts, r)
    slope = np.polyfit(np.log(ts[good]), np.log(r[good]), 1)[0]
    return ResidualResult(float(slope), False, ts, r)


@dataclass
class DirectionResult:
    """Accumulation directions ``-Phi(0, t_k) / |Phi(0, t_k)|`` of running maxima."""

    directions: frozenset
    witness_t: dict
    max_ratio_trace: dict
    degenerate: bool = False


WITNESS_WINDOW = 8
MIN_OCCURRENCES = 2


def limit_direction(Z, t_grid, tol=1e-300, window=WITNESS_WINDOW):
    """Discrete direction extraction for ``Phi(0, .)`` on a decreasing t-grid.

    A witness is a sample ``t_k`` with ``|Phi(0, t_k)| >= |Phi(0, t)|`` for
    every smaller sampled ``t`` and ``|Phi(0, t_k)| > 0``.  A sign belongs to
    the result if it occurs at least twice among the ``window`` witnesses
    closest to ``t = 0``, where a witness is the peak of a run of
    equal-sign running maxima.  The sign of the run nearest ``t = 0``
    always belongs to the result.

    ``Z`` is a :class:`FirstIntegral` or a callable ``t -> Phi(0, t)``.
    """
    ts = np.asarray(t_grid, dtype=float)
    if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) >= 0):
        raise ValueError("t_grid must be strictly decreasing")
    if isinstance(Z, FirstIntegral):
        vals = Z.phi(np.zeros_like(ts), ts)
    else:
        vals = np.asarray(Z(ts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("Phi(0, t) is not finite on the grid")
    mags = np.abs(vals)
    if np.all(mags <= tol):
        return DirectionResult(frozenset(), {}, {}, degenerate=True)
    # running maxima from the small-t end
    records = []
    best = 0.0
    for i in range(ts.size - 1, -1, -1):
        if mags[i] > 0 and mags[i] >= best:
            records.append(i)
            best = mags[i]
    # one witness per run of equal-sign records: the run's peak
    witnesses = []
    for i in records:
        sign = -1 if vals[i] > 0 else +1
        if witnesses and witnesses[-1][1] == sign:
            witnesses[-1] = (i, sign)
        else:
            witnesses.append((i, sign))
    witness_t = {+1: [], -1: []}
    trace = {+1: [], -1: []}
    for i, sign in reversed(witnesses):  # decreasing t
        witness_t[sign].append(float(ts[i]))
        trace[sign].append(float(mags[i]))
    closest = [sign for _, sign in witnesses[:window]]
    dirs = {closest[0]}
    dirs.update(s for s in (+1, -1) if closest.count(s) >= MIN_OCCURRENCES)
    dirs = frozenset(dirs)
    return DirectionResult(dirs, witness_t, trace)
