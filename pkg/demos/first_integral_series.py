"""Series first integrals and the accumulation directions of their imaginary part.

Run: python3 demos/first_integral_series.py
"""
import numpy as np
import sympy as sp

from microlocal import Domain, PlanarVectorField, limit_direction, preset, residual_check, solve_series
from microlocal.field import t, x

fld = PlanarVectorField.from_expr("it_exp", sp.I * t * sp.exp(x), Domain(-1.0, 1.0, 0.5))
for k in (2, 4, 6):
    Z = solve_series(fld, k)
    res = residual_check(Z, fld, np.geomspace(0.02, 0.4, 10))
    print(f"k = {k}: residual slope {res.slope:.2f} (expected >= {k + 1})")

# example41 recovers Z = x (1 + i t^2): only the t^2 coefficient survives
Z = solve_series(preset("example41").field, 8)
print("example41 t^2 coefficient at x = 0.7:", complex(Z.coefficient(2, np.array([0.7]))[0]))

# directions of -Phi(0, t_k) along running maxima as t -> 0
grid = np.linspace(0.5, 0.01, 20000)
tube = preset("tube1d").integral
for name, fn in [("-t^2", lambda tv: -tv ** 2), ("t^2", lambda tv: tv ** 2),
                 ("tube1d", lambda tv: tube.phi(0 * tv, tv))]:
    print(f"{name:7s} directions {sorted(limit_direction(fn, grid).directions)}")
