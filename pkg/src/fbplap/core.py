"""Grid geometry, field storage and problem definition.

Everything downstream works on a uniform Cartesian grid over an axis-aligned
box.  Nodes are indexed in C (row-major) order; cells are the hypercubes
spanned by neighbouring nodes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class ConstraintViolation(ValueError):
    """A value violates the nonnegativity or admissibility constraints."""


class OutOfDomain(ValueError):
    """A query point or ball leaves the computational box."""


class GridMismatch(ValueError):
    """A state and a problem live on different grids."""


def pnorm(values, p: float) -> float:
    """l_p norm of a nonnegative vector.

    >>> pnorm([3.0, 4.0], 2)
    5.0
    """
    v = np.asarray(values, dtype=float)
    if p <= 1:
        raise ConstraintViolation(f"p must exceed 1, got {p}")
    if np.any(v < 0):
        raise ConstraintViolation("pnorm expects nonnegative values")
    vmax = v.max(initial=0.0)
    if vmax == 0.0:
        return 0.0
    # scale first so large p does not overflow
    return float(vmax * np.sum((v / vmax) ** p) ** (1.0 / p))


def pnorm_field(values: np.ndarray, p: float) -> np.ndarray:
    """Channelwise l_p norm of an (m, ...) array; returns the trailing shape."""
    v = np.asarray(values, dtype=float)
    vmax = v.max(axis=0)
    safe = np.where(vmax > 0, vmax, 1.0)
    return np.where(vmax > 0, vmax * np.sum((v / safe) ** p, axis=0) ** (1.0 / p), 0.0)


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on the box ``lo + h * [0, shape-1]``."""

    lo: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.shape):
            raise ValueError("lo and shape must have the same length")
        if any(s < 3 for s in self.shape):
            raise ValueError(f"need at least 3 nodes per axis, got {self.shape}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")

    @classmethod
    def from_box(cls, lo: Sequence[float], hi: Sequence[float], h: float) -> "Grid":
        shape = []
        for a, b in zip(lo, hi):
            k = (b - a) / h
            n = int(round(k))
            if n < 1 or abs(k - n) > 1e-9 * max(1.0, abs(k)):
                raise ValueError(f"box side [{a}, {b}] is not an integer multiple of h={h}")
            shape.append(n + 1)
        return cls(tuple(float(a) for a in lo), float(h), tuple(shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def hi(self) -> tuple:
        return tuple(a + self.h * (s - 1) for a, s in zip(self.lo, self.shape))

    @property
    def cell_shape(self) -> tuple:
        return tuple(s - 1 for s in self.shape)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.ndim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, d: int) -> np.ndarray:
        # index times h, never accumulated, so coordinates are reproducible
        return self.lo[d] + self.h * np.arange(self.shape[d], dtype=float)

    def cell_axis(self, d: int) -> np.ndarray:
        return self.lo[d] + self.h * (np.arange(self.shape[d] - 1, dtype=float) + 0.5)

    def coords(self) -> list:
        """Per-axis coordinate arrays broadcast to the node shape."""
        return np.meshgrid(*[self.axis(d) for d in range(self.ndim)], indexing="ij")

    def cell_coords(self) -> list:
        return np.meshgrid(*[self.cell_axis(d) for d in range(self.ndim)], indexing="ij")

    def node_points(self) -> np.ndarray:
        return np.stack([c.ravel() for c in self.coords()], axis=1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for d in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask

    def index_of(self, x) -> tuple:
        """Nearest node index to a point."""
        x = np.asarray(x, dtype=float)
        idx = np.rint((x - np.asarray(self.lo)) / self.h).astype(int)
        return tuple(int(np.clip(i, 0, s - 1)) for i, s in zip(idx, self.shape))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return bool(np.all(x >= lo - tol * self.h) and np.all(x <= hi + tol * self.h))

    def ball_inside(self, center, r: float) -> bool:
        c = np.asarray(center, dtype=float)
        return bool(np.all(c - r >= np.asarray(self.lo) - 1e-12) and np.all(c + r <= np.asarray(self.hi) + 1e-12))


class VectorState:
    """Nonnegative m-channel nodal field on a grid.

    ``values`` has shape ``(m, *grid.shape)``.  A node is exact-zero when
    every channel stores 0.0; there is no threshold.
    """

    def __init__(self, grid: Grid, values: np.ndarray, copy: bool = True):
        values = np.array(values, dtype=float, copy=copy)
        if values.ndim == grid.ndim:
            values = values[None]
        if values.shape[1:] != grid.shape:
            raise GridMismatch(f"values of shape {values.shape[1:]} do not fit grid {grid.shape}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConstraintViolation("state channels must be finite and nonnegative")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid, m: int) -> "VectorState":
        return cls(grid, np.zeros((m,) + grid.shape), copy=False)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def mask(self) -> np.ndarray:
        """True where some channel is positive."""
        return np.any(self.values > 0, axis=0)

    def norm(self) -> np.ndarray:
        """Euclidean norm over channels, per node."""
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    def sup(self) -> float:
        return float(self.norm().max())

    def copy(self) -> "VectorState":
        return VectorState(self.grid, self.values, copy=True)

    def channel(self, i: int) -> np.ndarray:
        return self.values[i]

    def check(self) -> None:
        if np.any(self.values < 0):
            raise ConstraintViolation("negative channel value")


@dataclass(frozen=True)
class BallQuery:
    """Ball B_r(center) resolved against a grid."""

    center: tuple
    r: float
    grid: Grid

    def node_mask(self, closed: bool = False) -> np.ndarray:
        d2 = sum((c - x0) ** 2 for c, x0 in zip(self.grid.coords(), self.center))
        return d2 <= self.r ** 2 if closed else d2 < self.r ** 2

    def inside(self) -> bool:
        return self.grid.ball_inside(self.center, self.r)


@dataclass
class Problem:
    """Discrete instance of the vectorial Bernoulli problem.

    ``Q_nodes``/``Q_cells`` hold the weight field at nodes and at cell
    centres; ``g`` holds the Dirichlet trace (zero away from the boundary).
    """

    grid: Grid
    p: float
    m: int
    Q_nodes: np.ndarray
    Q_cells: np.ndarray
    g: np.ndarray
    Q_func: Optional[Callable] = field(default=None, repr=False, compare=False)
    q_smooth: bool = True
    config: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.p > 1:
            raise ConstraintViolation("p must exceed 1")
        if not np.isfinite(self.p):
            raise ConstraintViolation("p must be finite")
        if self.m < 1:
            raise ConstraintViolation("m must be at least 1")
        if self.Q_nodes.shape != self.grid.shape or self.Q_cells.shape != self.grid.cell_shape:
            raise GridMismatch("Q fields do not match the grid")
        qmin = min(self.Q_nodes.min(), self.Q_cells.min())
        if not qmin > 0:
            raise ConstraintViolation(f"Q_min must be positive, got Q_min={qmin}")
        if self.g.shape != (self.m,) + self.grid.shape:
            raise GridMismatch("boundary data does not match grid and m")
        if np.any(self.g < 0):
            raise ConstraintViolation("boundary data g must be nonnegative")

    @property
    def dim(self) -> int:
        return self.grid.ndim

    @property
    def Q_min(self) -> float:
        return float(min(self.Q_nodes.min(), self.Q_cells.min()))

    @property
    def Q_max(self) -> float:
        return float(max(self.Q_nodes.max(), self.Q_cells.max()))

    @property
    def boundary(self) -> np.ndarray:
        return self.grid.boundary_mask()

    @property
    def interior(self) -> np.ndarray:
        return ~self.grid.boundary_mask()

    def Q_at(self, x) -> float:
        """Q at an arbitrary point: exact when an expression is known, else interpolated."""
        x = np.asarray(x, dtype=float)
        if self.Q_func is not None:
            return float(np.asarray(self.Q_func(*[np.asarray(xi) for xi in x])))
        rgi = RegularGridInterpolator([self.grid.axis(d) for d in range(self.dim)], self.Q_nodes)
        return float(rgi(x[None])[0])

    def data_scale(self) -> float:
        s = float(self.g.max())
        return s if s > 0 else 1.0

    def initial_state(self) -> VectorState:
        """Boundary data on the boundary, zero inside."""
        return VectorState(self.grid, self.g.copy(), copy=False)

    def hash(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(repr((self.grid.lo, self.grid.h, self.grid.shape, float(self.p), self.m)).encode())
        for arr in (self.Q_nodes, self.Q_cells, self.g):
            hsh.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return hsh.hexdigest()


def interpolate(state: VectorState, x) -> np.ndarray:
    """Multilinear interpolation of every channel.

    ``x`` is one point (shape ``(n,)``) or a batch (shape ``(k, n)``).  The
    result has shape ``(m,)`` or ``(k, m)`` and is clamped below at 0.
    """
    grid = state.grid
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != grid.ndim:
        raise ValueError(f"points must have {grid.ndim} coordinates")
    lo = np.asarray(grid.lo)
    hi = np.asarray(grid.hi)
    slack = 1e-12 * grid.h
    if np.any(pts < lo - slack) or np.any(pts > hi + slack):
        raise OutOfDomain("interpolation point outside the box")
    pts = np.clip(pts, lo, hi)
    axes = [grid.axis(d) for d in range(grid.ndim)]
    out = np.empty((pts.shape[0], state.m))
    for i in range(state.m):
        rgi = RegularGridInterpolator(axes, state.values[i], method="linear")
        out[:, i] = rgi(pts)
    np.maximum(out, 0.0, out=out)
    return out[0] if single else out


def _as_field(f, coords, shape) -> np.ndarray:
    if callable(f):
        val = f(*coords)
    else:
        val = f
    return np.array(np.broadcast_to(np.asarray(val, dtype=float), shape), dtype=float)


def make_problem(lo, hi, h: float, p: float, Q, g, q_smooth: bool = True, config: Optional[dict] = None) -> Problem:
    """Problem from callables (or constants) of the coordinates.

    ``g`` is one callable/constant per channel; it is sampled on boundary
    nodes only.
    """
    grid = Grid.from_box(lo, hi, h)
    if callable(g) or np.isscalar(g):
        g = [g]
    bnd = grid.boundary_mask()
    gv = np.zeros((len(g),) + grid.shape)
    for i, gi in enumerate(g):
        gv[i][bnd] = _as_field(gi, grid.coords(), grid.shape)[bnd]
    Qn = _as_field(Q, grid.coords(), grid.shape)
    Qc = _as_field(Q, grid.cell_coords(), grid.cell_shape)
    Qf = Q if callable(Q) else None
    return Problem(grid, float(p), len(g), Qn, Qc, gv, Q_func=Qf, q_smooth=q_smooth, config=config or {})
