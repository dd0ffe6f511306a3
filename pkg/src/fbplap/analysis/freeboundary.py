"""Free-boundary faces, distances and normals."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .. import stencil
from ..core import Grid, VectorState


class NoFreeBoundary(ValueError):
    def __init__(self, msg="no free boundary"):
        super().__init__(msg)


@dataclass
class FreeBoundary:
    """Faces between an occupied and an unoccupied cell.

    ``cells`` holds the lower cell index of each face, ``axes`` the axis it
    is normal to and ``sign`` +1 when the occupied cell is the upper one.
    ``points`` are face midpoints; ``normals`` point out of the positivity
    set along the face axis.
    """

    grid: Grid
    cells: np.ndarray
    axes: np.ndarray
    sign: np.ndarray
    points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def area_weight(self) -> float:
        return self.grid.h ** (self.grid.ndim - 1)

    @property
    def normals(self) -> np.ndarray:
        nv = np.zeros((self.count, self.grid.ndim))
        nv[np.arange(self.count), self.axes] = -self.sign
        return nv

    @cached_property
    def tree(self) -> cKDTree:
        if self.empty:
            raise NoFreeBoundary()
        return cKDTree(self.points)

    def distance(self, x) -> np.ndarray:
        """Euclidean distance from points to the nearest face midpoint."""
        return self.tree.query(np.atleast_2d(x))[0]

    def require(self) -> None:
        if self.empty:
            raise NoFreeBoundary()


def extract_free_boundary(state: VectorState) -> FreeBoundary:
    grid = state.grid
    n = grid.ndim
    occ = stencil.occupied_cells(state.mask)
    cells, axes, sign, pts = [], [], [], []
    for d in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        a = occ[tuple(lo)]
        b = occ[tuple(hi)]
        diff = a != b
        idx = np.argwhere(diff)
        if not len(idx):
            continue
        cells.append(idx)
        axes.append(np.full(len(idx), d))
        sign.append(np.where(b[diff], 1, -1))
        p = np.empty((len(idx), n))
        for k in range(n):
            off = 1.0 if k == d else 0.5
            p[:, k] = grid.lo[k] + grid.h * (idx[:, k] + off)
        pts.append(p)
    if cells:
        return FreeBoundary(grid, np.concatenate(cells), np.concatenate(axes), np.concatenate(sign),
                            np.concatenate(pts))
    return FreeBoundary(grid, np.zeros((0, n), int), np.zeros(0, int), np.zeros(0, int), np.zeros((0, n)))


def smoothed_normals(state: VectorState, fb: FreeBoundary, sigma: float = 2.0) -> np.ndarray:
    """Unit normals (out of the positivity set) from the smoothed occupancy.

    ``sigma`` is in cells.  Falls back to the face normal where the smoothed
    gradient vanishes.
    """
    fb.require()
    grid = state.grid
    n = grid.ndim
    occ = stencil.occupied_cells(state.mask).astype(float)
    sm = ndimage.gaussian_filter(occ, sigma, mode="nearest")
    grads = np.gradient(sm, grid.h) if n > 1 else [np.gradient(sm, grid.h)]
    # sample at face midpoints by linear interpolation in cell-centre coordinates
    coords = [(fb.points[:, d] - grid.lo[d]) / grid.h - 0.5 for d in range(n)]
    g = np.stack([ndimage.map_coordinates(gd, coords, order=1, mode="nearest") for gd in grads], axis=1)
    norm = np.linalg.norm(g, axis=1)
    out = fb.normals.astype(float)
    ok = norm > 1e-12
    out[ok] = -g[ok] / norm[ok, None]
    return out


def select_points(fb: FreeBoundary, policy: str = "all", seed: int = 0) -> np.ndarray:
    """Indices of FB points chosen by ``all``, ``stride:k`` or ``count:k``."""
    fb.require()
    order = np.lexsort(fb.points.T[::-1])
    policy = policy.strip()
    if policy == "all":
        return order
    kind, _, val = policy.partition(":")
    k = int(val)
    if kind == "stride":
        return order[::max(k, 1)]
    if kind == "count":
        if k >= len(order):
            return order
        pick = np.linspace(0, len(order) - 1, k).round().astype(int)
        return order[pick]
    if kind == "random":
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(order, size=min(k, len(order)), replace=False))
    raise ValueError(f"unknown centers policy {policy!r}")
