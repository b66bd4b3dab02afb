"""Weak boundary values ``bf = lim_{t -> 0} f(., t)`` through a correction tower.

For a test function ``phi`` the levels

    phi_0 = phi,    phi_j = -d_t phi_{j-1} - d_x(a phi_{j-1})

define ``Phi^k = sum_{j<=k} phi_j t^j / j!`` with ``L^t Phi^k = phi_{k+1} t^k / k!``
where ``L^t = -d_t - d_x(a .)``.  Integrating ``d/dt int f Phi^k dx`` over
``[0, T]`` gives

    <bf, phi> = int f Phi^k |_{t=T} dx - int int (Lf) Phi^k + int int f phi_{k+1} t^k / k!

and no derivative of ``f`` is ever taken.
"""
from dataclasses import dataclass
import math
import threading

import numpy as np
import sympy as sp

from .field import lambdify_xt, x as X_SYM, t as T_SYM
from .quadrature import QuadratureError, geometric_levels, panel_rule, uniform_edges

DEFAULT_TOL = 1e-6


class SolutionSampler:
    """A solution ``f`` of ``Lf = 0`` (or with bounded ``Lf``) with growth ``O(t^-N)``.

    ``singular_points`` lists x-locations where ``f(., t)`` concentrates as
    ``t -> 0``; quadrature meshes are graded toward them.
    """

    def __init__(self, f, N, T, Lf=None, name="f", singular_points=()):
        self.f = f
        self.N = int(N)
        self.T = float(T)
        self.Lf = Lf
        self.name = name
        self.singular_points = tuple(float(p) for p in singular_points)

    def __repr__(self):
        return f"SolutionSampler({self.name!r}, N={self.N}, T={self.T})"

    def __call__(self, xv, tv):
        return self.f(xv, tv)

    def growth_constant(self, x_grid, t_grid):
        """``max |f| t^N`` on the sample grid."""
        Xg, Tg = np.meshgrid(np.asarray(x_grid, float), np.asarray(t_grid, float))
        return float(np.max(np.abs(self.f(Xg, Tg)) * Tg ** self.N))


# ---------------------------------------------------------------------------
# operator-level tower: phi_j = sum_n C_{j,n}(x, t) phi^(n)(x)


class _OperatorTower:
    def __init__(self, fld):
        if fld.expr is None:
            raise ValueError(f"field {fld.name!r} has no symbolic coefficient")
        self.a = fld.expr
        self.levels = [{0: sp.Integer(1)}]
        self._fns = {}
        self._lock = threading.RLock()

    def extend(self, j):
        with self._lock:
            return self._extend(j)

    def _extend(self, j):
        while len(self.levels) <= j:
            prev = self.levels[-1]
            nxt = {}
            for n, c in prev.items():
                nxt[n] = nxt.get(n, 0) - sp.diff(c, T_SYM) - sp.diff(self.a * c, X_SYM)
                nxt[n + 1] = nxt.get(n + 1, 0) - self.a * c
            cleaned = {}
            for n, c in sorted(nxt.items()):
                c = sp.cancel(sp.expand(c))
                if c != 0:
                    cleaned[n] = c
            self.levels.append(cleaned)
        return self.levels[j]

    def coefficient_fn(self, j, n, i):
        """Callable for ``d_x^i C_{j,n}``."""
        key = (j, n, i)
        with self._lock:
            if key not in self._fns:
                expr = self._extend(j)[n]
                self._fns[key] = lambdify_xt(sp.diff(expr, X_SYM, i) if i else expr)
            return self._fns[key]


_TOWER_CACHE = {}
_CACHE_LOCK = threading.Lock()


def operator_tower(fld):
    """Cached symbolic tower for ``fld`` (independent of the test function)."""
    with _CACHE_LOCK:
        tower = _TOWER_CACHE.get(fld)
        if tower is None:
            tower = _TOWER_CACHE[fld] = _OperatorTower(fld)
        return tower


class PhiTower:
    """Levels ``phi_0, ..., phi_{k+1}`` of the correction tower for one test function."""

    def __init__(self, fld, phi, k):
        self.field = fld
        self.phi = phi
        self.k = int(k)
        self.ops = operator_tower(fld)
        self.ops.extend(self.k + 1)

    def symbolic_level(self, j):
        """``{n: C_{j,n}}`` with ``phi_j = sum_n C_{j,n} phi^(n)``."""
        return dict(self.ops.extend(j))

    def level(self, j, xv, tv, alpha=0):
        """``d_x^alpha phi_j(x, t)``."""
        need = j + alpha
        if need > self.phi.max_order:
            raise ValueError(
                f"level {j} with {alpha} x-derivatives needs max_order {need}, "
                f"test function has {self.phi.max_order}"
            )
        xv, tv = np.broadcast_arrays(np.asarray(xv, float), np.asarray(tv, float))
        out = np.zeros(xv.shape, dtype=complex)
        cache = {}
        for n in self.ops.extend(j):
            for i in range(alpha + 1):
                order = n + alpha - i
                if order not in cache:
                    cache[order] = self.phi.deriv(order, xv)
                coef = self.ops.coefficient_fn(j, n, i)(xv, tv)
                out += math.comb(alpha, i) * coef * cache[order]
        return out

    def Phi(self, xv, tv, upto=None, alpha=0):
        upto = self.k if upto is None else upto
        tv = np.asarray(tv, float)
        return sum(self.level(j, xv, tv, alpha) * tv ** j / math.factorial(j) for j in range(upto + 1))

    def lt_Phi(self, xv, tv, upto=None):
        """``L^t Phi^j = phi_{j+1} t^j / j!`` (the closed-form right-hand side)."""
        j = self.k if upto is None else upto
        tv = np.asarray(tv, float)
        return self.level(j + 1, xv, tv) * tv ** j / math.factorial(j)


def build_phi_tower(fld, phi, k):
    if phi.max_order < k + 1:
        raise ValueError(f"test function max_order {phi.max_order} < k + 1 = {k + 1}")
    return PhiTower(fld, phi, k)


def lt_phi_identity(tower, fld, grid, h=1e-3):
    """Max deviation of ``L^t Phi^j - phi_{j+1} t^j / j!`` for ``j < k``.

    ``grid`` is a pair ``(x_grid, t_grid)``.  The t-derivative is a fourth
    order central difference; everything in x is exact.
    """
    xs, ts = (np.asarray(g, float) for g in grid)
    if xs.size < 1 or ts.size < 1:
        raise ValueError("degenerate grid")
    if tower.k < 1:
        raise ValueError("identity needs a tower with k >= 1")
    Xg, Tg = np.meshgrid(xs, ts)
    ht = np.minimum(h, 0.25 * Tg)
    a = fld.a(Xg, Tg)
    a_x = fld.da_dx(Xg, Tg)
    worst = 0.0
    for j in range(tower.k):
        def P(d):
            return tower.Phi(Xg, Tg + d * ht, upto=j)

        P_t = (P(-2) - 8 * P(-1) + 8 * P(1) - P(2)) / (12 * ht)
        P0 = tower.Phi(Xg, Tg, upto=j)
        P_x = tower.Phi(Xg, Tg, upto=j, alpha=1)
        lhs = -P_t - a_x * P0 - a * P_x
        dev = np.max(np.abs(lhs - tower.lt_Phi(Xg, Tg, upto=j)))
        worst = max(worst, float(dev))
    return worst


# ---------------------------------------------------------------------------
# pairing


@dataclass
class PairingResult:
    value: complex
    k: int
    T: float
    error_estimate: float

    def __complex__(self):
        return complex(self.value)

    def to_dict(self):
        return {
            "value": [float(self.value.real), float(self.value.imag)],
            "k": self.k,
            "T": self.T,
            "quad_error_estimate": self.error_estimate,
        }


EDGE_LEVELS = 8


def _x_nodes(lo, hi, width, finest, hints, breakpoints, order):
    """Gauss panels graded toward test-function breakpoints and singular hints.

    Bump profiles are flat to infinite order at their breakpoints, which
    Gauss rules resolve only slowly; a few geometric levels fix that.
    Around each hint the grading continues down to ``finest``.
    """
    cuts = []
    for b in breakpoints:
        cuts.append(b)
        cuts.extend(b + s * width * 0.5 ** j for j in range(1, EDGE_LEVELS + 1) for s in (-1, 1))
    if finest < width:
        levels = int(np.ceil(np.log2(width / finest)))
        for p in hints:
            if lo - width < p < hi + width:
                cuts.append(p)
                cuts.extend(p + s * width * 0.5 ** j for j in range(levels + 1) for s in (-1, 1))
    edges = uniform_edges(lo, hi, width, cuts)
    return panel_rule(edges, order)


def _pair_once(sol, tower, T, lo, hi, width, breakpoints, t_levels, order):
    k = tower.k
    hints = sol.singular_points
    # boundary term at t = T
    xn, xw = _x_nodes(lo, hi, width, T / 4, hints, breakpoints, order)
    Tn = np.full_like(xn, T)
    total = np.sum(xw * sol.f(xn, Tn) * tower.Phi(xn, Tn))
    # interior terms on a mesh graded toward t = 0
    t_edges = geometric_levels(T, t_levels)
    g, gw = np.polynomial.legendre.leggauss(order)
    kfact = math.factorial(k)
    for t0, t1 in zip(t_edges[:-1], t_edges[1:]):
        xn, xw = _x_nodes(lo, hi, width, t0 / 4, hints, breakpoints, order)
        half = 0.5 * (t1 - t0)
        tn = 0.5 * (t0 + t1) + half * g
        Xg, Tg = np.meshgrid(xn, tn)
        W = np.outer(half * gw, xw)
        fv = sol.f(Xg, Tg)
        integrand = fv * tower.level(k + 1, Xg, Tg) * Tg ** k / kfact
        if sol.Lf is not None:
            integrand = integrand - sol.Lf(Xg, Tg) * tower.Phi(Xg, Tg)
        total += np.sum(W * integrand)
    return complex(total)


def pair_trace(sol, fld, phi, k, quad=None, T=None, breakpoints=None):
    """``<bf, phi>`` from the three-term identity.

    Parameters
    ----------
    sol : SolutionSampler
    fld : PlanarVectorField
    phi : TestFunction
        Needs ``max_order >= k + 1``.
    k : int
        Tower order, at least ``N + 1``.
    quad : dict, optional
        ``tol`` (absolute, default 1e-6), ``levels`` (t-levels, 40),
        ``width`` (largest x-panel), ``order`` (Gauss points per panel).
    T : float, optional
        Pairing depth; defaults to ``sol.T``.

    Returns
    -------
    PairingResult
    """
    quad = dict(quad or {})
    if k <= sol.N:
        raise ValueError(f"k = {k} must exceed the growth order N = {sol.N}")
    lo, hi = phi.support
    T = sol.T if T is None else float(T)
    dom = fld.domain
    if lo < dom.x_lo or hi > dom.x_hi or T > dom.T:
        raise ValueError("support of phi times [0, T] leaves the field domain")
    tower = build_phi_tower(fld, phi, k)
    bps = tuple(phi.breakpoints() if breakpoints is None else breakpoints)
    tol = quad.get("tol", DEFAULT_TOL)
    levels = quad.get("levels", 40)
    width = quad.get("width", (hi - lo) / 32)
    order = quad.get("order", 10)
    coarse = _pair_once(sol, tower, T, lo, hi, width, bps, levels, order)
    fine = _pair_once(sol, tower, T, lo, hi, width / 2, bps, levels + 4, order + 4)
    est = abs(fine - coarse)
    if est > tol:
        raise QuadratureError(f"pairing of {sol.name} did not converge", est)
    return PairingResult(fine, k, T, est)


class TraceFunctional:
    """``phi -> <bf, phi>`` for a fixed solution, field and tower order.

    The pairing depth adapts to the test function: for a bump of radius
    ``r`` the tower terms scale like ``(T / r)^j``, so ``T <= r`` keeps the
    three terms of comparable size.
    """

    def __init__(self, sol, fld, k=None, T=None, quad=None, first_integral=None):
        self.solution = sol
        self.field = fld
        self.k = sol.N + 1 if k is None else int(k)
        self.T = min(sol.T, fld.domain.T) if T is None else float(T)
        self.quad = quad
        self.first_integral = first_integral

    def __repr__(self):
        return f"TraceFunctional({self.solution.name!r}, k={self.k}, T={self.T})"

    def depth_for(self, phi):
        return min(self.T, 0.5 * (phi.support[1] - phi.support[0]))

    def pair_result(self, phi, breakpoints=None):
        return pair_trace(
            self.solution, self.field, phi, self.k, self.quad, T=self.depth_for(phi), breakpoints=breakpoints
        )

    def pair(self, phi, breakpoints=None):
        return self.pair_result(phi, breakpoints).value

    __call__ = pair

    @property
    def singular_points(self):
        return self.solution.singular_points


class SampledTrace:
    """A trace that is a locally integrable function ``g(x)``; pairing is quadrature."""

    def __init__(self, func, name="g", singular_points=(), breakpoints=()):
        self.func = func
        self.name = name
        self.singular_points = tuple(singular_points)
        self.breakpoints = tuple(breakpoints)

    def __repr__(self):
        return f"SampledTrace({self.name!r})"

    def __call__(self, xv):
        return self.func(np.asarray(xv, float))

    def nodes(self, lo, hi, width, order=8, finest=1e-9):
        bps = tuple(b for b in self.breakpoints if lo < b < hi)
        return _x_nodes(lo, hi, width, finest, self.singular_points, bps, order)

    def integrate(self, fn, lo, hi, width, breakpoints=(), order=8):
        """``int g fn dx`` over ``[lo, hi]`` and the L1 mass of the integrand."""
        bps = tuple(breakpoints) + tuple(b for b in self.breakpoints if lo < b < hi)
        xn, xw = _x_nodes(lo, hi, width, 1e-9, self.singular_points, bps, order)
        integrand = xw * self.func(xn) * fn(xn)
        return complex(np.sum(integrand)), float(np.sum(np.abs(integrand)))

    def pair(self, phi, width=None):
        lo, hi = phi.support
        width = (hi - lo) / 32 if width is None else width
        bps = tuple(phi.breakpoints()) + self.breakpoints
        xn, xw = _x_nodes(lo, hi, width, 1e-9, self.singular_points, bps, 8)
        return complex(np.sum(xw * self.func(xn) * phi(xn)))


# ---------------------------------------------------------------------------
# uniform bound at finite depth


@dataclass
class SweepResult:
    depths: np.ndarray
    constants: np.ndarray
    divergent: bool
    slope: float


def uniform_bound_sweep(sol, fld, phi, k, depths, divergence_slope=-0.5, width=None):
    """``|int f(x, eps) phi dx| / sum_{n<=k+1} sup|phi^(n)|`` over the depths.

    The list is flagged divergent when its log-log slope against ``eps`` is
    below ``divergence_slope``.
    """
    if k <= sol.N:
        raise ValueError(f"k = {k} must exceed the growth order N = {sol.N}")
    lo, hi = phi.support
    width = (hi - lo) / 32 if width is None else width
    norm = float(np.sum(phi.sup_norms(k + 1)))
    depths = np.asarray(depths, float)
    out = []
    for eps in depths:
        xn, xw = _x_nodes(lo, hi, width, eps / 8, sol.singular_points, phi.breakpoints(), 8)
        out.append(abs(np.sum(xw * sol.f(xn, np.full_like(xn, eps)) * phi(xn))) / norm)
    out = np.array(out)
    slope = 0.0
    if depths.size >= 2 and np.all(out > 0):
        slope = float(np.polyfit(np.log(depths), np.log(out), 1)[0])
    return SweepResult(depths, out, slope < divergence_slope, slope)
