"""Wave-front scan of the truncated series h = sum 3^-k W_k on the boundary.

The truncated sum is singular only at x = +-1/k, k <= K.  A finite
|xi|-ladder sees those singularities through the Gaussian window, so the
verdict at a smooth point depends on its distance to the nearest one.

Run: python3 demos/full_wave_front.py
"""
import numpy as np

from microlocal import FbiPlan, preset, wavefront_report

p = preset("example41")
trace = p.trace_oracle["h"]
points = (0.0, 0.4, 0.5)
sing = np.array(p.solutions["h"].singular_points)

rep = wavefront_report(trace, points, FbiPlan(points, cutoff_radius=0.5))
for x0 in points:
    dist = np.min(np.abs(sing - x0))
    cls = {d: rep.entry(x0, d).fit.cls for d in (1, -1)}
    print(f"x = {x0:.2f}  nearest singularity {dist:.3f}  +1: {cls[1]:12s} -1: {cls[-1]:12s}"
          f"  in_WF = {sorted(rep.in_wf(x0))}")

# the window weight exp(-xi d^2) at the top rung explains the ordering
xi_top = FbiPlan(points).ladder[-1]
for x0 in points:
    d = np.min(np.abs(sing - x0))
    print(f"x = {x0:.2f}: exp(-xi_max d^2) = {np.exp(-xi_top * d * d):.2e}")
