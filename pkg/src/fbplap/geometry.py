"""Ball/cell overlap weights.

Exact in one and two dimensions; higher dimensions supersample the cells
cut by the sphere.
"""
from __future__ import annotations

import numpy as np

from .core import Grid


def _quadrant_area(x, y, r):
    """Area of {0 <= X <= x, 0 <= Y <= y} inside the disk of radius r (x, y >= 0)."""
    x = np.minimum(x, r)
    yy = np.minimum(y, r)
    a = np.sqrt(np.maximum(r * r - yy * yy, 0.0))

    def S(t):
        t = np.clip(t, -r, r)
        return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(t / r))

    return np.where(x <= a, x * yy, a * yy + S(x) - S(a))


def _corner_area(x, y, r):
    return np.sign(x) * np.sign(y) * _quadrant_area(np.abs(x), np.abs(y), r)


def disk_rect_area(x0, x1, y0, y1, r):
    """Area of [x0,x1] x [y0,y1] inside the disk of radius r about the origin."""
    return (
        _corner_area(x1, y1, r)
        - _corner_area(x0, y1, r)
        - _corner_area(x1, y0, r)
        + _corner_area(x0, y0, r)
    )


def ball_cell_fractions(grid: Grid, center, r: float, subsample: int = 8) -> np.ndarray:
    """Fraction of each cell's volume lying in the open ball B_r(center)."""
    c = np.asarray(center, dtype=float)
    n = grid.ndim
    h = grid.h
    los = [grid.lo[d] + h * np.arange(grid.shape[d] - 1) - c[d] for d in range(n)]
    if n == 1:
        a = los[0]
        return np.clip(np.minimum(a + h, r) - np.maximum(a, -r), 0.0, None) / h
    lo = np.meshgrid(*los, indexing="ij")
    # nearest and farthest point distances classify cells as in / out / cut
    near2 = sum(np.where(x > 0, x, np.where(x + h < 0, x + h, 0.0)) ** 2 for x in lo)
    far2 = sum(np.maximum(np.abs(x), np.abs(x + h)) ** 2 for x in lo)
    frac = np.zeros(grid.cell_shape)
    frac[far2 <= r * r] = 1.0
    cut = (near2 < r * r) & (far2 > r * r)
    if not cut.any():
        return frac
    if n == 2:
        x0, y0 = lo[0][cut], lo[1][cut]
        frac[cut] = disk_rect_area(x0, x0 + h, y0, y0 + h, r) / (h * h)
        return frac
    s = subsample
    t = (np.arange(s) + 0.5) / s * h
    sub = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n)
    corners = np.stack([x[cut] for x in lo], axis=1)
    pts = corners[:, None, :] + sub[None, :, :]
    frac[cut] = np.mean(np.sum(pts ** 2, axis=2) < r * r, axis=1)
    return frac


def ball_volume(n: int, r: float) -> float:
    from math import gamma, pi

    return pi ** (n / 2) / gamma(n / 2 + 1) * r ** n


def ball_cell_fractions_local(grid: Grid, center, r: float, subsample: int = 8):
    """Cell fractions restricted to the cells whose box meets B_r(center).

    Returns ``(cell_box, frac)`` with ``cell_box`` a tuple of slices into
    the cell array.
    """
    c = np.asarray(center, dtype=float)
    box = []
    for d in range(grid.ndim):
        a = int(np.floor((c[d] - r - grid.lo[d]) / grid.h)) - 1
        b = int(np.ceil((c[d] + r - grid.lo[d]) / grid.h)) + 1
        a = max(a, 0)
        b = min(b, grid.shape[d] - 1)
        box.append(slice(a, b))
    sizes = [s.stop - s.start for s in box]
    if min(sizes) < 1:
        return tuple(box), np.zeros(sizes)
    # a sub-grid needs three nodes per axis; pad the view if necessary
    lo = tuple(grid.lo[d] + grid.h * box[d].start for d in range(grid.ndim))
    shape = tuple(max(s + 1, 3) for s in sizes)
    sub = Grid(lo, grid.h, shape)
    frac = ball_cell_fractions(sub, c, r, subsample)
    frac = frac[tuple(slice(0, s) for s in sizes)]
    return tuple(box), frac
