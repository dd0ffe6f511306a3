"""
Vector-valued minimisers share one positivity set.

Three channels with boundary values (1, 1/2, 1/4) at x = 0.  Along the
interface the channel slopes alpha_i obey (p-1) sum alpha_i^p = Q^p, and
each channel is a multiple of the same ramp.
"""
import numpy as np

from fbplap import instances as I
from fbplap.minimizer import minimize

g = np.array([1.0, 0.5, 0.25])
h = 1 / 256
for p in (1.5, 2.0, 3.0):
    pr = I.vector_1d(p, g=tuple(g), h=h)
    res = minimize(pr)
    vals = res.state.values
    k = int(np.argmax(res.state.norm() == 0))
    alpha = (vals[:, k - 1] - vals[:, k]) / h
    print(f"p={p}: alpha={np.round(alpha, 4)}, (p-1) sum alpha^p = {(p - 1) * np.sum(alpha ** p):.5f}, "
          f"ratios alpha/g = {np.round(alpha / g, 4)}, certified={res.certified}")
