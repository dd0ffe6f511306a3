"""
Blow-ups at regular free-boundary points and the ACF product.

On a solved strip, blow-ups u(x0 + r y)/r at shrinking r are fitted by a
half-plane solution (-y.nu)_+ a; the flatness should not grow.  The second
part evaluates Phi(r) for the pair (x2)_+, (-x2)_+, which is constant.
"""
import numpy as np

from fbplap import instances as I
from fbplap.analysis import acf_phi, blowup_rescale, halfplane_fit, regular_points
from fbplap.core import Grid, VectorState
from fbplap.minimizer import minimize

h = 1 / 128
pr = I.strip_2d(h=h)
res = minimize(pr)
pts = regular_points(res.state, pr.p, pr.Q_at, 32 * h, count=4, reach=64 * h)
for x0 in pts:
    fits = [halfplane_fit(blowup_rescale(res.state, x0, k * h), pr.p, pr.Q_at(x0)) for k in (64, 32, 16)]
    print(f"x0={np.round(x0, 4)}  flatness " + " -> ".join(f"{f.flatness:.2e}" for f in fits)
          + f"  nu={np.round(fits[-1].nu, 4)}  slope residual {fits[-1].slope_residual:.2e}")

g = Grid.from_box((-1.0, -1.0), (1.0, 1.0), 1 / 256)
x2 = g.coords()[1]
tr = acf_phi(VectorState(g, np.maximum(x2, 0)), VectorState(g, np.maximum(-x2, 0)), (0.0, 0.0),
             [8 / 256, 16 / 256, 32 / 256, 64 / 256])
print("Phi(r) / (pi/2)^2:", np.round(np.array(tr.phi) / (np.pi / 2) ** 2, 6))
