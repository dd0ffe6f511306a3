"""
One-dimensional scalar problem on [0, 2] with u(0) = 1, u(2) = 0 and Q = 1.

The minimiser is the ramp (1 - x/s)_+ with s = (p-1)^(1/p).  This script
solves it for a few exponents and compares the discrete free boundary and
interface slope with the closed form.

Usage: python demos/closed_form_1d.py [h]
"""
import sys
import time

import numpy as np

from fbplap import instances as I
from fbplap.minimizer import minimize

h = float(eval(sys.argv[1])) if len(sys.argv) > 1 else 1 / 256

print(f"{'p':>5} {'s exact':>9} {'s found':>9} {'slope':>9} {'target':>9} {'J':>10} {'time':>6}")
for p in (1.5, 2.0, 3.0, 4.0):
    pr = I.scalar_1d(p, h=h)
    t = time.perf_counter()
    res = minimize(pr)
    dt = time.perf_counter() - t
    u = res.state.values[0]
    x = pr.grid.axis(0)
    k = int(np.argmax(u == 0))
    slope = (u[k - 1] - u[k]) / h
    print(f"{p:5.1f} {I.fb_location_1d(1.0, p):9.5f} {x[k]:9.5f} {slope:9.5f} {I.slope(p):9.5f} "
          f"{res.energy.total:10.6f} {dt:5.1f}s")
