"""FBI inversion: transform cutoff * u on a dense xi grid and reconstruct u.

Run: python3 demos/inversion.py
"""
import numpy as np

from microlocal import make_bump
from microlocal.fbi import INVERSION_CONSTANT, calibrate_inversion, dense_scan, fbi_inverse

cutoff = make_bump(0.0, 4.0, 2)
xs = np.linspace(-1.5, 1.5, 61)

for label, u in [("cos(2x) + x/2", lambda v: np.cos(2 * v) + 0.5 * v), ("exp(5ix)", lambda v: np.exp(5j * v))]:
    scan = dense_scan(u, cutoff)
    for extrapolate in (False, True):
        rec = fbi_inverse(scan, 1e-3, xs, extrapolate=extrapolate)
        err = np.max(np.abs(rec - u(xs)))
        print(f"{label:14s} extrapolate={extrapolate!s:5s} max error {err:.2e}")

print(f"closed-form constant {INVERSION_CONSTANT:.8f}, least-squares calibration {calibrate_inversion():.8f}")
