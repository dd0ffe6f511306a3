"""The objective J, its frozen-coefficient version J0, the measures lambda^i
and the domain-variation residual.

All integrals use the corner quadrature of :mod:`fbplap.stencil`; a cell
counts as occupied when any of its corners is positive.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import stencil
from .core import GridMismatch, Grid, OutOfDomain, Problem, VectorState
from .geometry import ball_cell_fractions


class SupportError(ValueError):
    """A test function reaches the boundary of the box."""


@dataclass
class EnergyBreakdown:
    dirichlet: tuple
    volume: float
    total: float

    def as_dict(self) -> dict:
        return {"dirichlet": list(self.dirichlet), "volume": self.volume, "total": self.total}


def _check_grid(state: VectorState, problem: Problem) -> None:
    if state.grid != problem.grid or state.m != problem.m:
        raise GridMismatch("state and problem live on different grids")


def _breakdown(values, h, p, Qp_cells, weights=None) -> EnergyBreakdown:
    n = values.ndim - 1
    vol = h ** n
    parts = []
    for u in values:
        d = stencil.power_energy_density(u, h, p)
        if weights is not None:
            d = d * weights
        parts.append(float(np.sum(d)) * vol)
    occ = stencil.occupied_cells(np.any(values > 0, axis=0))
    q = Qp_cells * occ
    if weights is not None:
        q = q * weights
    volume = float(np.sum(q)) * vol
    return EnergyBreakdown(tuple(parts), volume, float(sum(parts) + volume))


def evaluate_J(state: VectorState, problem: Problem) -> EnergyBreakdown:
    """Discrete J with the occupied-cell rule."""
    _check_grid(state, problem)
    return _breakdown(state.values, problem.grid.h, problem.p, problem.Q_cells ** problem.p)


def local_energy(values: np.ndarray, problem: Problem, box: tuple) -> float:
    """J restricted to the cells inside the node box ``box`` (a tuple of slices).

    Differences of this quantity between two states that agree outside the
    box equal differences of the full J.
    """
    sub = values[(slice(None),) + box]
    cbox = tuple(slice(b.start, b.stop - 1) for b in box)
    return _breakdown(sub, problem.grid.h, problem.p, problem.Q_cells[cbox] ** problem.p).total


def evaluate_J0(state: VectorState, x0, R: float, problem: Problem) -> EnergyBreakdown:
    """J over B_R(x0) with Q frozen at Q(x0); cut cells enter with their volume fraction."""
    _check_grid(state, problem)
    if not problem.grid.ball_inside(x0, R):
        raise OutOfDomain("B_R(x0) leaves the domain")
    return frozen_energy(state, x0, R, problem.Q_at(x0), problem.p)


def frozen_energy(state: VectorState, x0, R: float, Q0: float, p: float) -> EnergyBreakdown:
    frac = ball_cell_fractions(state.grid, x0, R)
    Qp = np.full(state.grid.cell_shape, Q0 ** p)
    return _breakdown(state.values, state.grid.h, p, Qp, weights=frac)


class TestFunction:
    """Nodal test function; gradients are the discrete corner gradients.

    Using the nodal interpolant keeps discrete integration by parts exact,
    so the pairing with lambda^i is a finite sum of nodal residuals.
    """

    __test__ = False  # not a pytest class

    def __init__(self, grid: Grid, values: np.ndarray, kind: str = "table"):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatch("test function does not match the grid")
        self.grid = grid
        self.values = values
        self.kind = kind

    def check_support(self) -> None:
        if np.any(self.values[self.grid.boundary_mask()] != 0):
            raise SupportError("test function support touches the boundary")

    def gradients(self) -> np.ndarray:
        return stencil.corner_gradients(self.values, self.grid.h)

    @classmethod
    def node_hat(cls, grid: Grid, index) -> "TestFunction":
        v = np.zeros(grid.shape)
        v[tuple(index)] = 1.0
        return cls(grid, v, "node_hat")

    @classmethod
    def hat(cls, grid: Grid, center, radius: float) -> "TestFunction":
        """Radial tent max(0, 1 - |x-center|/radius)."""
        d = np.sqrt(sum((c - x) ** 2 for c, x in zip(grid.coords(), center)))
        return cls(grid, np.maximum(0.0, 1.0 - d / radius), "hat")

    @classmethod
    def smoothed_indicator(cls, grid: Grid, center, r: float, width: Optional[float] = None) -> "TestFunction":
        """1 on B_r, linear ramp to 0 over ``width`` (default 2h) outside."""
        w = 2 * grid.h if width is None else width
        d = np.sqrt(sum((c - x) ** 2 for c, x in zip(grid.coords(), center)))
        return cls(grid, np.clip((r + w - d) / w, 0.0, 1.0), "indicator")

    @classmethod
    def plateau(cls, grid: Grid, x0, r: float, R: float = 1.0, axis: int = -1) -> "TestFunction":
        """r-scaled min(1, max(0, 2 - |x_n|)) eta(x') about x0, eta a bump of radius R."""
        xs = grid.coords()
        n = grid.ndim
        axis = axis % n
        t = np.abs(xs[axis] - x0[axis]) / r
        v = np.minimum(1.0, np.maximum(0.0, 2.0 - t))
        if n > 1:
            rho2 = sum(((xs[d] - x0[d]) / r) ** 2 for d in range(n) if d != axis)
            v = v * np.maximum(0.0, 1.0 - rho2 / (R * R)) ** 2
        return cls(grid, v, "plateau")


def subharmonic_measure(state: VectorState, i: int, zeta: TestFunction, p: float) -> float:
    """lambda^i(zeta) = -int |grad u^i|^(p-2) grad u^i . grad zeta."""
    if zeta.grid != state.grid:
        raise GridMismatch("test function and state grids differ")
    zeta.check_support()
    support = stencil.occupied_cells(zeta.values != 0)
    if not support.any():
        return 0.0
    box = _cell_box(support)
    nbox = tuple(slice(b.start, b.stop + 1) for b in box)
    h = state.grid.h
    G = stencil.corner_gradients(state.values[i][nbox], h)
    F = stencil.flux(G, p)
    Gz = stencil.corner_gradients(zeta.values[nbox], h)
    w = h ** state.grid.ndim / 2 ** state.grid.ndim
    return float(-w * np.sum(F * Gz))


def nodal_measure(values: np.ndarray, h: float, p: float) -> np.ndarray:
    """lambda^i paired with every nodal hat function at once."""
    G = stencil.corner_gradients(values, h)
    w = h ** values.ndim / 2 ** values.ndim
    return -w * stencil.adjoint(stencil.flux(G, p), h, values.shape)


def _cell_box(cells: np.ndarray) -> tuple:
    idx = np.nonzero(cells)
    return tuple(slice(int(i.min()), int(i.max()) + 1) for i in idx)


def _psi_at_cells(psi, grid: Grid) -> np.ndarray:
    if callable(psi):
        out = psi(*grid.cell_coords())
    else:
        out = psi
    out = np.asarray([np.broadcast_to(np.asarray(c, dtype=float), grid.cell_shape) for c in out])
    if out.shape != (grid.ndim,) + grid.cell_shape:
        raise ValueError("psi must have one component per axis")
    return out


def domain_variation_residual(state: VectorState, psi, problem: Problem) -> float:
    """Discrete left side of the domain-variation identity.

    With F = sum_i (|grad u^i|^p Psi - p |grad u^i|^(p-2) (grad u^i . Psi) grad u^i) + Q^p Psi,
    the integral of div F over the positivity set is evaluated as
    -sum F . grad(chi) with chi the nodal indicator of {|u| > 0} and the
    discrete gradient's adjoint playing the divergence.  ``psi`` is a
    callable of the cell-centre coordinates or an array of shape (n, *cells).
    """
    _check_grid(state, problem)
    if not problem.q_smooth:
        raise ValueError("domain variation needs a differentiable Q (q_smooth = false)")
    grid = problem.grid
    P = _psi_at_cells(psi, grid)
    edge = ~stencil.all_corners(~grid.boundary_mask())
    if np.any(P[:, edge] != 0):
        raise SupportError("psi must vanish on cells touching the boundary")
    p, h, n = problem.p, grid.h, grid.ndim
    w = h ** n / 2 ** n
    chi = state.mask.astype(float)
    Gchi = stencil.corner_gradients(chi, h)
    Qp = problem.Q_cells ** p
    total = 0.0
    F = Qp[None, None] * P[None]
    for u in state.values:
        G = stencil.corner_gradients(u, h)
        s = np.sum(G * G, axis=1)
        Gp = s ** (0.5 * p)
        flux = stencil.flux(G, p)
        dot = np.sum(G * P[None], axis=1)
        F = F + Gp[:, None] * P[None] - p * dot[:, None] * flux
    total = -w * float(np.sum(F * Gchi))
    return total
