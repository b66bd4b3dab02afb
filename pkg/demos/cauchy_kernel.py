"""Boundary value of 1/(x - it): pairing, atom probe and wave-front half-space.

Run: python3 demos/cauchy_kernel.py
"""
import math

from microlocal import FbiPlan, make_bump, preset, probe_measure, wavefront_report
from microlocal.presets import PrincipalValueTrace

cr = preset("cauchy_riemann")
trace = cr.trace("inv")

# pairing through the correction tower against the p.v. + i pi delta oracle
for centre in (0.0, 0.3):
    phi = make_bump(centre, 1.0, 4)
    res = trace.pair_result(phi)
    ref = PrincipalValueTrace(0.0).pair(phi)
    print(f"bump({centre}, 1): tower {res.value:.12f}  oracle {ref:.12f}  est {res.error_estimate:.1e}")

# even bumps of shrinking radius isolate the point mass at 0
verdict = probe_measure(trace, [0.0], [0.4, 0.2, 0.1, 0.05])
for x0, mass, conf in verdict.detected_atoms:
    print(f"atom at {x0}: mass {mass:.6f} (i pi = {1j * math.pi:.6f}), confidence {conf:.2f}")

# the boundary value is singular at 0 in one direction only
rep = wavefront_report(trace, (0.0,), FbiPlan((0.0,)))
for d in (1, -1):
    e = rep.entry(0.0, d)
    print(f"direction {d:+d}: {e.fit.cls:12s} in_WF={e.in_WF}")
print("half-space condition:", rep.halfspace_ok[0.0])
