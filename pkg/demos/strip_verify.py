"""
Planar free boundary in two dimensions, then the regularity scans.

The box [0,2]^2 carries the one-dimensional ramp as boundary data, so the
minimiser should not depend on x2.  After solving, every scan of the
verify command is run on the result and its aggregates are printed.

Usage: python demos/strip_verify.py [h]   (default 1/64 to stay quick)
"""
import sys

import numpy as np

from fbplap import instances as I
from fbplap.analysis import (density_scan, measure_scan, nondegeneracy_scan, nta_diagnostics, replacement_scan,
                             subharmonic_check, viscosity_gradient_check)
from fbplap.minimizer import minimize

h = float(eval(sys.argv[1])) if len(sys.argv) > 1 else 1 / 64
pr = I.strip_2d(h=h)
res = minimize(pr)
u = res.state.values[0]
prof = I.profile_1d(pr.grid.axis(0), 1.0, 2.0)[0]
print(f"J = {res.energy.total:.6f}, sup |u - ramp| = {np.max(np.abs(u - prof[:, None])):.2e}")

st = res.state
radii = [4 * h, 8 * h, 16 * h]
scans = [
    subharmonic_check(st, pr.p),
    nondegeneracy_scan(st, radii, policy="stride:8"),
    density_scan(st, radii, policy="stride:8"),
    measure_scan(st, pr, radii, policy="stride:8"),
    viscosity_gradient_check(st, pr),
    replacement_scan(st, pr, balls=20),
    nta_diagnostics(st, radii),
]
for rep in scans:
    keep = {k: (round(v, 4) if isinstance(v, float) else v) for k, v in rep.aggregates.items()
            if not isinstance(v, list)}
    print(f"{rep.name:>14}: passed={rep.passed} {keep}")
