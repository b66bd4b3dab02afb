"""Composite Gauss-Legendre rules on panel meshes.

Every integral in the package goes through these helpers so that the
summation order is fixed and results are reproducible bit for bit.
"""
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when a refinement estimate exceeds the requested tolerance."""

    def __init__(self, message, estimate):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = float(estimate)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_rule(edges, n=8):
    """Nodes and weights of an ``n``-point Gauss rule on every panel.

    Parameters
    ----------
    edges : array_like
        Increasing panel boundaries.
    n : int
        Nodes per panel.

    Returns
    -------
    nodes, weights : ndarray
        Flattened in panel order.
    """
    edges = np.asarray(edges, dtype=float)
    g, w = gauss_legendre(n)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (lo + half)[:, None] + half[:, None] * g[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def uniform_edges(lo, hi, max_width, breakpoints=()):
    """Panel boundaries of width at most ``max_width``, split at breakpoints."""
    cuts = sorted({float(lo), float(hi), *(float(b) for b in breakpoints if lo < b < hi)})
    edges = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = max(1, int(np.ceil((b - a) / max_width - 1e-12)))
        edges.extend(np.linspace(a, b, m + 1)[1:])
    return np.array(edges)


def graded_edges(lo, hi, max_width, singular_points=(), levels=24, ratio=0.5, breakpoints=()):
    """Panels refined geometrically toward each point in ``singular_points``.

    Around each singular point ``p`` extra boundaries are placed at
    ``p +- max_width * ratio**j`` for ``j < levels`` so that algebraic
    endpoint singularities are integrated to near machine precision.
    """
    extra = list(breakpoints)
    for p in singular_points:
        extra.append(p)
        for j in range(levels):
            d = max_width * ratio ** j
            extra.extend((p - d, p + d))
    return uniform_edges(lo, hi, max_width, extra)


def geometric_levels(T, levels=40, ratio=0.5):
    """Boundaries ``[T r^L, ..., T r, T]`` of a mesh graded toward ``t = 0``."""
    return T * ratio ** np.arange(levels, -1, -1, dtype=float)
