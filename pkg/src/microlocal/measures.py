"""Boundary measures: atoms, densities and absolute-continuity probes."""
from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from .field import make_bump
from .quadrature import panel_rule, uniform_edges

ATOM_SPREAD = 0.05
RESIDUAL_LIMIT = 0.05
BOUNDED_SLOPE = -0.25
ZERO_MASS = 1e-8


@dataclass(frozen=True)
class Staircase:
    """Uniform mass on the ``2^depth`` intervals of the middle-thirds construction on ``[lo, hi]``."""

    lo: float
    hi: float
    depth: int
    mass: complex = 1.0

    def intervals(self):
        ivs = [(self.lo, self.hi)]
        for _ in range(self.depth):
            nxt = []
            for a, b in ivs:
                w = (b - a) / 3
                nxt.extend([(a, a + w), (b - w, b)])
            ivs = nxt
        return ivs


def _in_intervals(xv, intervals):
    xv = np.asarray(xv, float)
    mask = np.zeros(xv.shape, dtype=bool)
    for a, b in intervals:
        mask |= (xv >= a - 1e-12) & (xv <= b + 1e-12)
    return mask


class BoundaryMeasure:
    """``g dx + sum_j m_j delta_{x_j}`` plus an optional synthetic staircase part.

    ``density`` is a callable of ``x`` or a pair ``(x_grid, values)`` that is
    linearly interpolated (and zero outside the grid).  ``restriction`` is a
    list of closed intervals the measure is restricted to.
    """

    def __init__(self, density=None, atoms=(), staircase=None, restriction=None, status="ok", residual=None):
        self.density = density
        self.atoms = tuple((float(x0), complex(m)) for x0, m in atoms)
        for x0, m in self.atoms:
            if m == 0:
                raise ValueError(f"atom at {x0} has zero mass")
        self.staircase = staircase
        self.restriction = None if restriction is None else tuple((float(a), float(b)) for a, b in restriction)
        self.status = status
        self.residual = residual

    def __repr__(self):
        return f"BoundaryMeasure(atoms={list(self.atoms)}, staircase={self.staircase}, status={self.status!r})"

    def density_at(self, xv):
        xv = np.asarray(xv, float)
        if self.density is None:
            out = np.zeros(xv.shape, dtype=complex)
        elif callable(self.density):
            out = np.asarray(self.density(xv), dtype=complex) * np.ones(xv.shape)
        else:
            grid, vals = self.density
            vals = np.asarray(vals, dtype=complex)
            out = np.interp(xv, grid, vals.real, left=0, right=0) + 1j * np.interp(
                xv, grid, vals.imag, left=0, right=0
            )
        if self.restriction is not None:
            out = np.where(_in_intervals(xv, self.restriction), out, 0)
        return out

    def _stair_pieces(self):
        if self.staircase is None:
            return []
        ivs = self.staircase.intervals()
        weight = self.staircase.mass / (len(ivs) * (ivs[0][1] - ivs[0][0]))
        pieces = []
        for a, b in ivs:
            for ra, rb in self.restriction if self.restriction is not None else [(a, b)]:
                lo, hi = max(a, ra), min(b, rb)
                if hi > lo:
                    pieces.append((lo, hi, weight))
        return pieces

    def integrate(self, fn, lo, hi, width, breakpoints=(), order=8):
        """``int fn dmu`` over ``[lo, hi]`` and the L1 mass of the integrand."""
        total, mass = 0j, 0.0
        if self.density is not None:
            cuts = list(breakpoints)
            if self.restriction is not None:
                cuts += [e for iv in self.restriction for e in iv]
            if not callable(self.density):
                grid = np.asarray(self.density[0], float)
                cuts += [grid[0], grid[-1]]
            xn, xw = panel_rule(uniform_edges(lo, hi, width, cuts), order)
            part = xw * self.density_at(xn) * fn(xn)
            total += np.sum(part)
            mass += float(np.sum(np.abs(part)))
        for x0, m in self.atoms:
            if lo <= x0 <= hi:
                v = m * complex(np.asarray(fn(np.array([x0])))[0])
                total += v
                mass += abs(v)
        for a, b, w in self._stair_pieces():
            a, b = max(a, lo), min(b, hi)
            if b > a:
                xn, xw = panel_rule(uniform_edges(a, b, width, breakpoints), order)
                part = w * xw * fn(xn)
                total += np.sum(part)
                mass += float(np.sum(np.abs(part)))
        return complex(total), mass

    def pair(self, phi):
        lo, hi = phi.support
        return self.integrate(phi, lo, hi, (hi - lo) / 64, phi.breakpoints())[0]

    def total_variation(self, lo, hi, n=4001):
        xs = np.linspace(lo, hi, n)
        tv = float(np.trapezoid(np.abs(self.density_at(xs)), xs)) if self.density is not None else 0.0
        tv += sum(abs(m) for x0, m in self.atoms if lo <= x0 <= hi)
        tv += sum(abs(w) * (b - a) for a, b, w in self._stair_pieces())
        return tv


@dataclass
class AbsContinuityVerdict:
    ac: bool
    detected_atoms: list
    window_table: list
    bounded: bool = True
    masses: dict = dc_field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "ac": self.ac,
            "atoms": [
                {"x": float(x0), "mass": [float(m.real), float(m.imag)], "confidence": float(c)} for x0, m, c in self.detected_atoms
            ],
        }

    def window_csv(self):
        lines = ["x,delta,re_ratio,im_ratio"]
        for x0, d, r in self.window_table:
            lines.append(f"{x0:.17g},{d:.17g},{r.real:.17g},{r.imag:.17g}")
        return "\n".join(lines) + "\n"


def _bump_order(trace):
    k = getattr(trace, "k", None)
    return max(2, (k + 1) if k is not None else 2)


def probe_measure(trace, x_grid, deltas):
    """Test for atoms at the grid points and for bounded averages.

    ``m(x, delta)`` is the pairing with an even plateau bump of radius
    ``delta`` at ``x``, and the averages are ``m / int(bump) = m / (1.5 delta)``.
    An atom is declared where the last three ``m`` agree within 5% and are
    nonzero; the averages are bounded when ``log|avg|`` against ``log delta``
    has slope at least ``-0.25`` over the small half of the ladder.
    """
    deltas = np.asarray(deltas, float)
    if deltas.size < 4:
        raise ValueError("delta ladder needs at least 4 rungs")
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("delta ladder must be decreasing")
    order = _bump_order(trace)
    table, atoms, masses = [], [], {}
    bounded = True
    for x0 in np.asarray(x_grid, float):
        m = np.array([complex(trace.pair(make_bump(x0, d, order))) for d in deltas])
        masses[float(x0)] = m
        avg = m / (1.5 * deltas)
        table.extend((float(x0), float(d), complex(r)) for d, r in zip(deltas, avg))
        last = m[-3:]
        ref = abs(last[-1])
        if ref > ZERO_MASS:
            spread = float(np.max(np.abs(last - last[-1]))) / ref
            if spread <= ATOM_SPREAD:
                atoms.append((float(x0), complex(last[-1]), 1.0 - spread / ATOM_SPREAD))
                continue
        small = slice(deltas.size // 2, deltas.size)
        mag = np.abs(avg[small])
        if np.all(mag > 0):
            slope = np.polyfit(np.log(deltas[small]), np.log(mag), 1)[0]
            # slope of log|avg| against log(delta): blow-up as delta -> 0 is a negative slope
            if slope < BOUNDED_SLOPE:
                bounded = False
    atoms = _merge_atoms(atoms, deltas[-1])
    return AbsContinuityVerdict(not atoms and bounded, atoms, table, bounded, masses)


def _merge_atoms(atoms, radius):
    """Keep one detection per cluster of grid points closer than ``radius``."""
    out = []
    for a in sorted(atoms):
        if out and a[0] - out[-1][0] < radius:
            if abs(a[1]) > abs(out[-1][1]):
                out[-1] = a
            continue
        out.append(a)
    return out


def restrict_to_F(measure, F):
    """``mu_F(X) = mu(X cap F)`` for a finite union of closed intervals ``F``."""
    F = [(float(a), float(b)) for a, b in F]
    if measure.restriction is not None:
        merged = []
        for a, b in measure.restriction:
            for c, d in F:
                lo, hi = max(a, c), min(b, d)
                if hi >= lo:
                    merged.append((lo, hi))
        F = merged
    atoms = [(x0, m) for x0, m in measure.atoms if _in_intervals(np.array([x0]), F)[0]]
    return BoundaryMeasure(measure.density, atoms, measure.staircase, F, measure.status, measure.residual)


def riesz_condition_check(measure, k_max, n=512):
    """Fourier coefficients ``int exp(-i k theta) dmu`` for ``|k| <= k_max`` on ``[0, 2 pi)``.

    The density is integrated by the periodic trapezoid rule.
    """
    theta = 2 * math.pi * np.arange(n) / n
    ks = np.arange(-k_max, k_max + 1)
    dens = measure.density_at(theta) if measure.density is not None else np.zeros(n, complex)
    E = np.exp(-1j * np.outer(ks, theta))
    coeffs = (2 * math.pi / n) * (E @ dens)
    for x0, m in measure.atoms:
        coeffs = coeffs + m * np.exp(-1j * ks * x0)
    for a, b, w in measure._stair_pieces():
        xn, xw = panel_rule(uniform_edges(a, b, (b - a) / 4), 16)
        coeffs = coeffs + w * (np.exp(-1j * np.outer(ks, xn)) @ xw)
    return dict(zip(ks.tolist(), coeffs))


def decompose_trace(trace, x_grid, deltas, family_radius=None):
    """Atoms plus a sampled density ``m(x, delta_min) / (1.5 delta_min)``.

    The fit is checked against bumps centred between the grid points; if the
    misfit exceeds 5% of the model's local total variation the result is
    marked ``"unresolved singular part"``.
    """
    verdict = probe_measure(trace, x_grid, deltas)
    xs = np.asarray(x_grid, float)
    dmin = float(np.min(deltas))
    atom_x = [a[0] for a in verdict.detected_atoms]
    keep = np.array([all(abs(x0 - a) > 2 * dmin for a in atom_x) for x0 in xs])
    dens_vals = np.array([verdict.masses[float(x0)][-1] / (1.5 * dmin) for x0 in xs])
    atoms = [(a[0], a[1]) for a in verdict.detected_atoms]
    dens = (xs[keep], dens_vals[keep]) if np.any(keep) and np.max(np.abs(dens_vals[keep])) > ZERO_MASS else None
    model = BoundaryMeasure(dens, atoms)
    if xs.size < 2:
        return model
    spacing = float(np.min(np.diff(xs)))
    rho = 2 * spacing if family_radius is None else family_radius
    centres = 0.5 * (xs[:-1] + xs[1:])
    order = _bump_order(trace)
    num, den = 0.0, 0.0
    for c in centres:
        psi = make_bump(c, rho, order)
        lo, hi = psi.support
        if lo < xs[0] or hi > xs[-1]:
            continue
        num += abs(complex(trace.pair(psi)) - model.pair(psi))
        abs_model = BoundaryMeasure(
            (xs[keep], np.abs(dens_vals[keep])) if dens is not None else None,
            [(x0, abs(m)) for x0, m in atoms],
        )
        den += abs(abs_model.pair(psi))
    residual = num / den if den > 0 else (0.0 if num == 0 else math.inf)
    model.residual = residual
    if residual > RESIDUAL_LIMIT:
        model.status = "unresolved singular part"
    return model
