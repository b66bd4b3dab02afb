"""FBI transforms of boundary traces and wave-front classification.

The transform of a trace ``u`` at ``(s, sigma |xi|)`` is

    F(s, xi) = <u, exp(E(s, xi, x)) phi>,   E = i xi (s - Z) - kappa <xi> (s - Z)^2

with ``Z = x`` for the plain kernel.  Exponential decay of ``|F(s, .)|``
in a direction certifies that direction is outside the wave front set.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
import io
import math

import numpy as np
from scipy.signal import fftconvolve

from .field import ProductTestFunction, make_bump
from .quadrature import QuadratureError, geometric_levels, panel_rule, uniform_edges
from .trace import SampledTrace, TraceFunctional, _x_nodes

EXPONENTIAL = "Exponential"
POLYNOMIAL = "Polynomial"
FLAT = "Flat"

FIT_WINDOW = 6
FLAT_SLOPE = 0.25
EXP_R2 = 0.98
EXP_DECADES = 5.0
NOISE_FLOOR = 1e-13
HARD_FLOOR = 1e-300

INVERSION_CONSTANT = 1.0 / (2.0 * math.pi ** 1.5)


class BranchError(ValueError):
    """Raised when ``<zeta>`` is requested outside ``|Im zeta| < |Re zeta|``."""


def angle_bracket(zeta):
    """Principal square root of ``zeta**2`` on the sector ``|Im zeta| < |Re zeta|``."""
    z = np.asarray(zeta, dtype=complex)
    if np.any(np.abs(z.imag) >= np.abs(z.real)):
        bad = z.ravel()[np.argmax(np.abs(z.imag) - np.abs(z.real))]
        raise BranchError(f"<zeta> undefined at zeta = {bad}: outside |Im| < |Re|")
    out = np.where(z.real > 0, z, -z)
    return out if out.ndim else complex(out)


def default_ladder(xi_min=8.0, xi_max=256.0, ratio=math.sqrt(2.0)):
    count = int(round(math.log(xi_max / xi_min) / math.log(ratio))) + 1
    return xi_min * ratio ** np.arange(count)


@dataclass
class FbiPlan:
    """Where to evaluate ``F``: points, directions, ``|xi|``-ladder, kernel width.

    The cutoff is ``cutoff`` when given, else a bump of ``cutoff_radius``
    centred at each point.
    """

    points: tuple
    directions: tuple = (+1, -1)
    ladder: np.ndarray = dc_field(default_factory=default_ladder)
    kappa: float = 1.0
    cutoff: object = None
    cutoff_radius: float = 1.0
    cutoff_order: int = 6

    def __post_init__(self):
        self.points = tuple(float(p) for p in np.atleast_1d(self.points))
        self.directions = tuple(int(d) for d in self.directions)
        self.ladder = np.asarray(self.ladder, dtype=float)
        if self.ladder.size < 2 or np.any(np.diff(self.ladder) <= 0):
            raise ValueError("ladder must be strictly increasing")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if any(d not in (1, -1) for d in self.directions):
            raise ValueError("directions must be +1 or -1")

    def cutoff_for(self, s):
        if self.cutoff is not None:
            return self.cutoff
        return make_bump(s, self.cutoff_radius, self.cutoff_order)

    def to_dict(self):
        return {
            "points": list(self.points),
            "directions": list(self.directions),
            "ladder": [float(v) for v in self.ladder],
            "kappa": self.kappa,
            "cutoff_radius": self.cutoff_radius,
        }


@dataclass
class FbiScan:
    values: np.ndarray  # (points, directions, rungs)
    floors: np.ndarray
    plan: FbiPlan
    method: str = "direct"

    def index(self, point):
        for i, p in enumerate(self.plan.points):
            if abs(p - point) <= 1e-12 * max(1.0, abs(p)):
                return i
        raise KeyError(f"point {point} not in the plan")

    def series(self, point, direction):
        i = self.index(point)
        j = self.plan.directions.index(direction)
        return self.values[i, j], self.floors[i, j]

    def to_csv(self):
        buf = io.StringIO()
        buf.write("s,direction,xi,re_F,im_F,abs_F\n")
        for i, s in enumerate(self.plan.points):
            for j, d in enumerate(self.plan.directions):
                for m, xi in enumerate(self.plan.ladder):
                    v = self.values[i, j, m]
                    buf.write(f"{s:.17g},{d},{xi:.17g},{v.real:.17g},{v.imag:.17g},{abs(v):.17g}\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# kernels


def _kernel(s, zeta, Z, kappa):
    """``exp(i zeta (s - Z) - kappa <zeta> (s - Z)^2)`` for real ``zeta``."""
    d = s - Z
    return np.exp(1j * zeta * d - kappa * abs(zeta) * d * d)


def _kernel_derivs(s, zeta, kappa):
    """``n -> d^n/dx^n`` of the plain kernel, by ``K' = q' K`` with quadratic ``q``."""
    w = kappa * abs(zeta)

    def derivs(n, xv):
        d = s - xv
        k0 = np.exp(1j * zeta * d - w * d * d)
        if n == 0:
            return k0
        q1 = -1j * zeta + 2 * w * d
        q2 = -2 * w
        prev, cur = np.zeros_like(k0), k0
        for m in range(n):
            prev, cur = cur, q1 * cur + m * q2 * prev
        return cur

    return derivs


def _panel_width(xi_max, order=10):
    """Gauss panel width for oscillation ``exp(i xi x)`` up to ``xi_max``.

    Mean node spacing stays below ``pi / (4 xi_max)``; the panel phase
    ``xi_max * width / 2`` is capped at 1.25 so a 10-point rule is accurate
    to roundoff.
    """
    return min(order * math.pi / (4.0 * xi_max), 2.5 / xi_max)


# ---------------------------------------------------------------------------
# routes


def _direct(trace, s, sigma, ladder, kappa, cutoff, Z=None):
    """Quadrature against a trace that supports ``integrate``."""
    lo, hi = cutoff.support
    width = min(_panel_width(ladder[-1]), (hi - lo) / 16)
    vals = np.empty(ladder.size, dtype=complex)
    floors = np.empty(ladder.size)
    for m, xi in enumerate(ladder):
        zeta = sigma * xi
        if Z is None:
            fn = lambda xv, zeta=zeta: _kernel(s, zeta, xv, kappa) * cutoff(xv)
        else:
            fn = lambda xv, zeta=zeta: (
                _kernel(s, zeta, Z.Z(xv, 0 * xv), kappa) * cutoff(xv) * Z.dZ_dx(xv, 0 * xv)
            )
        v, l1 = trace.integrate(fn, lo, hi, width, cutoff.breakpoints(), order=10)
        vals[m] = v
        floors[m] = max(NOISE_FLOOR * l1, HARD_FLOOR)
    return vals, floors


def _t_edges(t1, levels, xi_max):
    """``0`` plus a geometric mesh toward ``t = 0``, split so ``xi_max * dt <= 2.5``."""
    geo = np.concatenate([[0.0], geometric_levels(t1, levels)])
    out = [0.0]
    for a, b in zip(geo[:-1], geo[1:]):
        m = max(1, int(math.ceil(xi_max * (b - a) / 2.5)))
        out.extend(np.linspace(a, b, m + 1)[1:])
    return np.array(out)


def _strip_depth(trace, Z, s, zetas, kappa, cutoff, t1, levels=12, order=10):
    """Boundary values by Stokes on ``[supp] x [0, t1]`` for an exact first integral.

    Returns the values and L1 masses for every ``zeta`` in ``zetas``; the
    parts of the integrands that do not depend on ``zeta`` are shared.
    """
    sol, fld = trace.solution, trace.field
    lo, hi = cutoff.support
    width = min(_panel_width(np.max(np.abs(zetas)), order), (hi - lo) / 16)
    bps = cutoff.breakpoints()
    xn, xw = _x_nodes(lo, hi, width, t1 / 4, sol.singular_points, bps, order)
    tn = np.full_like(xn, t1)
    Z_top = Z.Z(xn, tn)
    w_top = xw * sol.f(xn, tn) * cutoff(xn) * Z.dZ_dx(xn, tn)
    # the strip integrand carries phi', which vanishes on the cutoff plateau
    flat = cutoff.flat_zone()
    g, gw = np.polynomial.legendre.leggauss(8)
    t_edges = _t_edges(t1, levels, float(np.max(np.abs(zetas))))
    Z_body, w_body = [], []
    x_cache = {}
    for t0, t2 in zip(t_edges[:-1], t_edges[1:]):
        key = max(t0, t1 * 0.5 ** levels)
        if key not in x_cache:
            x_cache[key] = _x_nodes(lo, hi, width, key / 4, sol.singular_points, bps, order)
        xq, wq = x_cache[key]
        if flat is not None:
            keep = (xq < flat[0]) | (xq > flat[1])
            xq, wq = xq[keep], wq[keep]
        half = 0.5 * (t2 - t0)
        tq = 0.5 * (t0 + t2) + half * g
        Xg, Tg = np.meshgrid(xq, tq)
        W = np.outer(half * gw, wq)
        Z_body.append(Z.Z(Xg, Tg).ravel())
        w_body.append((W * Z.dZ_dx(Xg, Tg) * sol.f(Xg, Tg) * fld.a(Xg, Tg) * cutoff.deriv(1, Xg)).ravel())
    Z_body = np.concatenate(Z_body)
    w_body = np.concatenate(w_body)
    vals = np.empty(len(zetas), dtype=complex)
    mass = np.empty(len(zetas))
    with np.errstate(over="ignore", invalid="ignore"):
        for m, zeta in enumerate(zetas):
            top = w_top * _kernel(s, zeta, Z_top, kappa)
            body = w_body * _kernel(s, zeta, Z_body, kappa)
            vals[m] = np.sum(top) - np.sum(body)
            mass[m] = np.sum(np.abs(top)) + np.sum(np.abs(body))
    return vals, mass


STRIP_DEPTHS = 6


def _strip(trace, s, sigma, ladder, kappa, cutoff):
    Z = trace.first_integral
    T = min(trace.T, 0.5 * (cutoff.support[1] - cutoff.support[0]))
    zetas = sigma * ladder
    vals = np.zeros(ladder.size, dtype=complex)
    best = np.full(ladder.size, np.inf)
    for j in range(1, STRIP_DEPTHS + 1):
        v, l1 = _strip_depth(trace, Z, s, zetas, kappa, cutoff, T * 0.5 ** j)
        better = np.isfinite(l1) & np.isfinite(v) & (l1 < best)
        vals[better] = v[better]
        best[better] = l1[better]
    if not np.all(np.isfinite(best)):
        raise QuadratureError("strip evaluation overflowed at every depth", float("inf"))
    return vals, np.maximum(NOISE_FLOOR * best, HARD_FLOOR)


def _tower(trace, s, sigma, ladder, kappa, cutoff):
    vals = np.empty(ladder.size, dtype=complex)
    floors = np.empty(ladder.size)
    for m, xi in enumerate(ladder):
        phi = ProductTestFunction(_kernel_derivs(s, sigma * xi, kappa), cutoff)
        res = trace.pair_result(phi)
        vals[m] = res.value
        floors[m] = max(res.error_estimate, HARD_FLOOR)
    return vals, floors


def _route(trace, Z=None):
    if isinstance(trace, TraceFunctional):
        fi = trace.first_integral if Z is None else Z
        if fi is not None and fi.exact and trace.solution.Lf is None:
            return "strip"
        return "tower"
    if hasattr(trace, "integrate"):
        return "direct"
    raise TypeError(f"cannot take the FBI transform of {type(trace).__name__}")


def _run(trace, plan, jobs, Z, kappa, route):
    P, D, M = len(plan.points), len(plan.directions), plan.ladder.size
    values = np.empty((P, D, M), dtype=complex)
    floors = np.empty((P, D, M))

    def task(ij):
        i, j = ij
        s, sigma = plan.points[i], plan.directions[j]
        cutoff = plan.cutoff_for(s)
        if route == "direct":
            v, f = _direct(trace, s, sigma, plan.ladder, kappa, cutoff, Z)
        elif route == "strip":
            tr = trace
            if Z is not None and Z is not trace.first_integral:
                tr = TraceFunctional(trace.solution, trace.field, trace.k, trace.T, trace.quad, first_integral=Z)
            v, f = _strip(tr, s, sigma, plan.ladder, kappa, cutoff)
        else:
            v, f = _tower(trace, s, sigma, plan.ladder, kappa, cutoff)
        values[i, j] = v
        floors[i, j] = f

    tasks = [(i, j) for i in range(P) for j in range(D)]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(task, tasks))
    else:
        for ij in tasks:
            task(ij)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("non-finite FBI values", float("inf"))
    return FbiScan(values, floors, plan, route)


def fbi_transform(trace, plan, jobs=1):
    """``F(s, sigma |xi|)`` with the plain kernel ``exp(i xi (s - x) - |xi| (s - x)^2)``.

    Sampled traces and measures are integrated directly.  A
    :class:`TraceFunctional` with an exact first integral is evaluated by
    moving the integral into the strip ``0 < t < t1`` (the kernel composed
    with ``Z`` is annihilated by ``L``); the depth ``t1`` is picked per rung
    to minimize the L1 mass of the integrands.  Otherwise the
    kernel-times-cutoff is paired through the correction tower.
    """
    route = _route(trace)
    return _run(trace, plan, jobs, None, 1.0, route)


def fbi_generalized(trace, Z, plan, jobs=1):
    """FBI with kernel ``i zeta (s - Z) - kappa <zeta> (s - Z)^2`` and weight ``Z_x``.

    For sampled traces ``Z`` is evaluated at ``t = 0``; for trace functionals
    of exact solutions the strip identity uses ``Z`` in the interior.
    """
    for zeta in plan.ladder:
        angle_bracket(zeta)
    route = _route(trace, Z)
    if route == "tower":
        raise ValueError("generalized FBI needs a sampled trace or an exact first integral")
    return _run(trace, plan, jobs, Z, plan.kappa, route)


# ---------------------------------------------------------------------------
# inversion


@dataclass
class DenseScan:
    """s-integrated transform ``H(xi) = int exp(-i xi s) F(s, xi) ds`` on a uniform xi-grid.

    ``F`` itself is kept on ``s_grid`` (the cutoff support) for inspection;
    the s-integral uses a window wide enough for the Gaussian at each ``xi``.
    """

    xi: np.ndarray
    H: np.ndarray
    s_grid: np.ndarray
    F: np.ndarray
    dxi: float


def dense_scan(trace, cutoff, xi_max=160.0, dxi=0.1, h=None):
    """Transform of ``cutoff * trace`` on ``xi in (-xi_max, xi_max)`` for inversion.

    ``trace`` is a callable of ``x`` (or a :class:`SampledTrace`).  All
    integrals are trapezoid sums on a uniform grid with spacing at most
    ``pi / (4 xi_max)``.
    """
    h = min(0.01, math.pi / (4 * xi_max)) if h is None else h
    lo, hi = cutoff.support
    n = int(math.ceil((hi - lo) / h))
    y = lo + h * np.arange(n + 1)
    u = np.asarray(trace(y), dtype=complex) * cutoff(y)
    # midpoint xi-grid avoids xi = 0
    xi = dxi * (np.arange(-int(xi_max / dxi), int(xi_max / dxi)) + 0.5)
    s_keep = y[::4]
    H = np.empty(xi.size, dtype=complex)
    F_keep = np.empty((s_keep.size, xi.size), dtype=complex)
    for m, z in enumerate(xi):
        w = math.sqrt(40.0 / abs(z))
        nk = int(math.ceil(w / h))
        sig = h * np.arange(-nk, nk + 1)
        ker = np.exp(1j * z * sig - abs(z) * sig * sig)
        F = fftconvolve(u, ker) * h  # F at s = y[0] + sig[0] + h * index
        s = y[0] + sig[0] + h * np.arange(F.size)
        H[m] = h * np.sum(np.exp(-1j * z * s) * F)
        F_keep[:, m] = F[nk : nk + n + 1 : 4]
    return DenseScan(xi, H, s_keep, F_keep, dxi)


def fbi_inverse(scan, eps=1e-3, x=None, constant=INVERSION_CONSTANT, extrapolate=False, tail_tol=1e-6):
    """``c int int exp(i (x - s) xi - eps xi^2) F(s, xi) |xi|^(1/2) ds dxi`` on ``x``.

    With ``extrapolate`` the result is ``2 R(eps) - R(2 eps)``, which removes
    the first-order smoothing error.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = scan.s_grid if x is None else np.asarray(x, float)
    weight = np.sqrt(np.abs(scan.xi)) * scan.H

    def rec(e):
        damp = np.exp(-e * scan.xi ** 2)
        edge = np.max(np.abs(weight[[0, -1]] * damp[[0, -1]])) * scan.dxi * scan.xi.size
        if edge > tail_tol:
            raise QuadratureError("xi-coverage too small for the inversion", edge)
        phase = np.exp(1j * np.outer(x, scan.xi))
        return constant * scan.dxi * (phase @ (weight * damp))

    if extrapolate:
        return 2 * rec(eps) - rec(2 * eps)
    return rec(eps)


def calibrate_inversion(eps=1e-3, xi_max=160.0, dxi=0.1):
    """Least-squares constant reproducing ``exp(-x^2)`` on the plateau of a wide cutoff."""
    cutoff = make_bump(0.0, 6.0, 2)
    scan = dense_scan(lambda y: np.exp(-y * y), cutoff, xi_max, dxi)
    xs = np.linspace(-3.0, 3.0, 121)
    raw = fbi_inverse(scan, eps, xs, constant=1.0)
    target = np.exp(-xs * xs)
    return float(np.real(np.vdot(raw, target) / np.vdot(raw, raw)))


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class DecayFit:
    cls: str
    rate: float = None
    order: float = None
    r2: float = 0.0
    window: tuple = ()
    floor_limited: bool = False

    def to_dict(self):
        value = self.rate if self.cls == EXPONENTIAL else self.order
        return {
            "class": self.cls,
            "rate_or_order": None if value is None or not math.isfinite(value) else float(value),
            "r2": float(self.r2),
            "floor_limited": self.floor_limited,
        }


def _linfit(u, v):
    A = np.vstack([u, np.ones_like(u)]).T
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    pred = A @ coef
    ss = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum((v - pred) ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), min(max(r2, 0.0), 1.0)


def fit_decay_values(ladder, values, floors=None, window=FIT_WINDOW):
    """Classify ``|F|`` on a ladder as exponential, polynomial or flat decay.

    Rungs with ``|F|`` at or below the noise floor are invalid.  When the
    top of the ladder has sunk to the floor the decay is exponential and
    flagged ``floor_limited``; the rate is fitted on the remaining valid
    rungs.
    """
    ladder = np.asarray(ladder, float)
    mags = np.abs(np.asarray(values))
    if ladder.size < window:
        raise ValueError(f"ladder needs at least {window} rungs")
    floors = np.full(ladder.shape, HARD_FLOOR) if floors is None else np.maximum(floors, HARD_FLOOR)
    valid = mags > floors
    top = slice(ladder.size - window, ladder.size)
    win = (float(ladder[top][0]), float(ladder[-1]))
    if not np.all(valid[top]):
        idx = np.nonzero(valid)[0][-window:]
        rate, r2 = math.inf, 1.0
        if idx.size >= 2:
            slope, r2 = _linfit(ladder[idx], np.log(mags[idx]))
            rate = -slope
            win = (float(ladder[idx[0]]), float(ladder[idx[-1]]))
        if rate > 0:
            return DecayFit(EXPONENTIAL, rate=rate, r2=r2, window=win, floor_limited=True)
    xi = ladder[top]
    lm = np.log(mags[top])
    slope_p, r2p = _linfit(np.log(xi), lm)
    slope_e, r2e = _linfit(xi, lm)
    rate = -slope_e
    if r2e > r2p and r2e > EXP_R2 and rate * xi[-1] > EXP_DECADES:
        return DecayFit(EXPONENTIAL, rate=rate, r2=r2e, window=win)
    if abs(slope_p) < FLAT_SLOPE:
        return DecayFit(FLAT, order=abs(slope_p), r2=r2p, window=win)
    return DecayFit(POLYNOMIAL, order=abs(slope_p), r2=r2p, window=win)


def fit_decay(scan, point, direction):
    vals, floors = scan.series(point, direction)
    return fit_decay_values(scan.plan.ladder, vals, floors)


# ---------------------------------------------------------------------------
# reports


@dataclass
class WaveFrontEntry:
    point: float
    direction: int
    fit: DecayFit
    in_WF: bool


@dataclass
class WaveFrontReport:
    entries: list
    halfspace_ok: dict

    def in_wf(self, point):
        return frozenset(e.direction for e in self.entries if e.point == point and e.in_WF)

    def entry(self, point, direction):
        for e in self.entries:
            if e.point == point and e.direction == direction:
                return e
        raise KeyError((point, direction))

    def to_json_rows(self):
        rows = []
        for e in self.entries:
            d = e.fit.to_dict()
            rows.append(
                {
                    "x": e.point,
                    "direction": e.direction,
                    "class": d["class"],
                    "rate_or_order": d["rate_or_order"],
                    "r2": d["r2"],
                    "in_WF": e.in_WF,
                    "halfspace_ok": self.halfspace_ok[e.point],
                }
            )
        return rows


def wavefront_report(traces, points, plan=None, rate_threshold=0.0, jobs=1, Z=None):
    """Per point and direction, whether the FBI decays exponentially.

    ``traces`` is one trace for all points or a sequence with one trace per
    point.  In one dimension the half-space condition holds when at most
    one of the two directions is in the wave front set.
    """
    points = tuple(float(p) for p in np.atleast_1d(points))
    plan = FbiPlan(points) if plan is None else plan
    if set(plan.directions) != {1, -1}:
        raise ValueError("wave-front reports need both directions")
    if isinstance(traces, (list, tuple)):
        if len(traces) != len(points):
            raise ValueError("one trace per point expected")
        pairs = list(zip(points, traces))
    else:
        pairs = [(p, traces) for p in points]
    entries = []
    halfspace = {}
    for p, tr in pairs:
        sub = FbiPlan((p,), plan.directions, plan.ladder, plan.kappa, plan.cutoff, plan.cutoff_radius,
                      plan.cutoff_order)
        scan = fbi_transform(tr, sub, jobs) if Z is None else fbi_generalized(tr, Z, sub, jobs)
        inwf = []
        for d in plan.directions:
            fit = fit_decay(scan, p, d)
            smooth = fit.cls == EXPONENTIAL and fit.rate > rate_threshold
            entries.append(WaveFrontEntry(p, d, fit, not smooth))
            if not smooth:
                inwf.append(d)
        halfspace[p] = not ({1, -1} <= set(inwf))
    return WaveFrontReport(entries, halfspace)
