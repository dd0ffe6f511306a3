"""p-Laplace Dirichlet solves on arbitrary node masks.

The discrete problem minimises the regularised energy

    E_eps(u) = sum over cells and corners of w * (|G|^2 + eps^2)^(p/2),
    w = h^n / 2^n,

over the masked nodes with all other nodes held fixed.  Each value of eps
along a halving schedule is solved by damped Newton; a lagged-coefficient
(Picard) step is used whenever the Newton direction fails the line search.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla
from scipy import ndimage

from . import stencil
from .core import BallQuery, OutOfDomain, VectorState

log = logging.getLogger(__name__)

EPS_FINAL_REL = 1e-8


class SolverError(RuntimeError):
    pass


class IslandError(SolverError):
    """Some connected part of the mask never meets a Dirichlet node."""


class NonConvergence(SolverError):
    def __init__(self, message: str, residual: float, u: Optional[np.ndarray] = None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.u = u


@dataclass
class PLaplaceJob:
    """One Dirichlet problem.

    values : nodal array; entries outside ``mask`` are the Dirichlet data,
        entries inside are the initial guess.
    mask : boolean array of unknown nodes; may not touch the array edge.
    eps_schedule : decreasing regularisation widths in gradient units.  When
        omitted a halving schedule from the data gradient scale down to
        ``1e-8`` of it is used.
    tol : bound on the scaled max-norm residual.
    """

    values: np.ndarray
    mask: np.ndarray
    h: float
    p: float
    eps_schedule: Optional[Sequence[float]] = None
    tol: float = 1e-8
    max_iters: int = 100
    grad_scale: Optional[float] = None
    warm: bool = False


@dataclass
class SolveInfo:
    residual: float
    newton_steps: int
    picard_steps: int
    stages: int
    eps_final: float
    history: list = field(default_factory=list)


def _crop(mask: np.ndarray):
    idx = np.nonzero(mask)
    lo = [max(int(i.min()) - 1, 0) for i in idx]
    hi = [min(int(i.max()) + 2, s) for i, s in zip(idx, mask.shape)]
    return tuple(slice(a, b) for a, b in zip(lo, hi))


def check_mask(mask: np.ndarray) -> None:
    if not mask.any():
        raise SolverError("empty mask")
    n = mask.ndim
    for d in range(n):
        idx = [slice(None)] * n
        idx[d] = 0
        if mask[tuple(idx)].any():
            raise SolverError("mask touches the array edge; only Dirichlet problems are supported")
        idx[d] = -1
        if mask[tuple(idx)].any():
            raise SolverError("mask touches the array edge; only Dirichlet problems are supported")
    labels, count = ndimage.label(mask)
    if count == 0:
        return
    # a component is determined when some axis neighbour lies outside the mask
    touched = ndimage.binary_dilation(~mask, structure=ndimage.generate_binary_structure(n, 1))
    seen = np.unique(labels[touched & mask])
    if len(seen[seen > 0]) < count:
        raise IslandError("mask contains a component without Dirichlet neighbours")


def default_schedule(grad_scale: float, warm: bool = False, factor: float = 2.0) -> list:
    eps_final = EPS_FINAL_REL * grad_scale
    eps0 = eps_final * factor ** 6 if warm else grad_scale
    out = [eps0]
    while out[-1] > eps_final * (1 + 1e-12):
        out.append(max(out[-1] / factor, eps_final))
    return out


def _energy(u, h, p, eps, w):
    G = stencil.corner_gradients(u, h)
    s = np.sum(G * G, axis=1) + eps * eps
    return w * float(np.sum(s if p == 2 else s ** (0.5 * p)))


def _gradient(u, h, p, eps, w):
    G = stencil.corner_gradients(u, h)
    F = stencil.flux(G, p, eps)
    return G, p * w * stencil.adjoint(F, h, u.shape)


def solve_p_dirichlet_info(job: PLaplaceJob):
    """Solve ``job`` and return ``(u, SolveInfo)`` on the full array."""
    mask = np.asarray(job.mask, dtype=bool)
    check_mask(mask)
    if not job.p > 1:
        raise SolverError("p must exceed 1")
    box = _crop(mask)
    u = np.array(job.values, dtype=float)[box].copy()
    m = mask[box]
    h, p = float(job.h), float(job.p)
    n = u.ndim
    w = h ** n / 2 ** n
    # nodes sharing no cell with an unknown never enter the problem
    near = ndimage.binary_dilation(m, structure=np.ones((3,) * n, dtype=bool))
    u[~near] = 0.0
    if not np.all(np.isfinite(u[near & ~m])):
        raise SolverError("non-finite Dirichlet data next to the mask")
    if not job.warm or not np.all(np.isfinite(u[m])):
        u[m] = 0.0

    data = u[~m]
    S = float(np.max(np.abs(data))) if data.size else 0.0
    out = np.array(job.values, dtype=float)
    out[mask] = 0.0
    if S == 0.0:
        return out, SolveInfo(0.0, 0, 0, 0, 0.0)
    L = h * (max(u.shape) - 1)
    sigma = job.grad_scale if job.grad_scale else S / L
    res_scale = p * h ** (n - 1) * sigma ** (p - 1)

    if job.eps_schedule is not None:
        schedule = list(job.eps_schedule)
    else:
        schedule = default_schedule(sigma, warm=job.warm)
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise SolverError("eps_schedule must be strictly decreasing")

    cols = np.flatnonzero(m.ravel())
    if p == 2:
        # one linear solve with the cached stiffness matrix
        K = stencil.stiffness_matrix(u.shape, h)
        H = (K[cols][:, cols] * (2 * w)).tocsc()
        G, grad = _gradient(u, h, p, 0.0, w)
        u[m] -= spla.spsolve(H, grad[m])
        G, grad = _gradient(u, h, p, 0.0, w)
        res = float(np.max(np.abs(grad[m]))) / res_scale
        info = SolveInfo(res, 1, 0, 1, 0.0, [(0.0, res)])
        out[box][m] = u[m]
        if res > job.tol:
            raise NonConvergence("linear solve inaccurate", res, out)
        return out, info
    D = stencil.gradient_matrix(u.shape, h)
    Dm = D[:, cols]
    if not job.warm:
        # harmonic start: one linear solve
        K = stencil.stiffness_matrix(u.shape, h)
        G, grad = _gradient(u, h, 2.0, 0.0, w)
        u[m] -= spla.spsolve((K[cols][:, cols] * (2 * w)).tocsc(), grad[m])
    info = SolveInfo(np.inf, 0, 0, len(schedule), schedule[-1])
    res = np.inf
    for k, eps in enumerate(schedule):
        last = k == len(schedule) - 1
        target = job.tol if last else max(job.tol, 1e-3)
        for _ in range(job.max_iters):
            G, grad = _gradient(u, h, p, eps, w)
            gm = grad[m]
            res = float(np.max(np.abs(gm))) / res_scale
            info.history.append((eps, res))
            if res <= target:
                break
            K = stencil.hessian_blocks(G, p, eps)
            H = (Dm.T @ stencil.block_matrix(K, p * w) @ Dm).tocsc()
            step = spla.spsolve(H, -gm)
            if _line_search(u, m, step, gm, h, p, eps, w):
                info.newton_steps += 1
                continue
            # lagged coefficients: drop the (p-2) G G^T term
            s = np.sum(G * G, axis=1) + eps * eps
            a = s ** (0.5 * p - 1.0)
            Kp = np.zeros_like(K)
            for d in range(n):
                Kp[:, d, d] = a
            Hp = (Dm.T @ stencil.block_matrix(Kp, p * w) @ Dm).tocsc()
            step = spla.spsolve(Hp, -gm)
            info.picard_steps += 1
            if not _line_search(u, m, step, gm, h, p, eps, w):
                break
        else:
            if last:
                info.residual = res
                out[box][m] = u[m]
                raise NonConvergence("p-Laplace solve did not converge", res, out)
    info.residual = res
    if res > job.tol:
        out[box][m] = u[m]
        raise NonConvergence("p-Laplace solve stalled", res, out)
    out[box][m] = u[m]
    return out, info


def _line_search(u, m, step, gm, h, p, eps, w) -> bool:
    slope = float(gm @ step)
    if not slope < 0:
        return False
    x0 = u[m].copy()
    E0 = _energy(u, h, p, eps, w)
    t = 1.0
    while t > 1e-10:
        u[m] = x0 + t * step
        E1 = _energy(u, h, p, eps, w)
        if E1 <= E0 + 1e-4 * t * slope:
            return True
        # at round-off level the energy cannot resolve the decrease
        if abs(t * slope) < 1e-13 * abs(E0) and E1 - E0 <= 1e-13 * abs(E0):
            return True
        t *= 0.5
    u[m] = x0
    return False


def solve_p_dirichlet(job: PLaplaceJob) -> np.ndarray:
    """Discrete p-harmonic function on ``job.mask`` with the given data."""
    return solve_p_dirichlet_info(job)[0]


def dirichlet_energy(u: np.ndarray, h: float, p: float, cells: Optional[np.ndarray] = None) -> float:
    """Exact (unregularised) discrete integral of |grad u|^p."""
    dens = stencil.power_energy_density(u, h, p)
    if cells is not None:
        dens = dens[cells]
    return float(np.sum(dens)) * h ** u.ndim


@dataclass
class RadialProfile:
    """Radial p-harmonic function vanishing on |x| = kappa, one on |x| = sqrt(kappa)."""

    kappa: float
    p: float
    n: int
    r: np.ndarray
    values: np.ndarray

    @property
    def outer(self) -> float:
        return float(np.sqrt(self.kappa))

    def __call__(self, r) -> np.ndarray:
        return radial_profile_value(np.asarray(r, dtype=float), self.kappa, self.p, self.n)

    def derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        k, p, n = self.kappa, self.p, self.n
        if np.isclose(p, n):
            return 1.0 / (r * np.log(k ** -0.5))
        gam = (p - n) / (p - 1)
        return gam * r ** (gam - 1) / (k ** (gam / 2) - k ** gam)


def radial_profile_value(r, kappa, p, n):
    if np.isclose(p, n):
        return np.log(r / kappa) / np.log(kappa ** -0.5)
    gam = (p - n) / (p - 1)
    return (r ** gam - kappa ** gam) / (kappa ** (gam / 2) - kappa ** gam)


def radial_p_harmonic_profile(kappa: float, p: float, n: int, samples: int = 257) -> RadialProfile:
    """Comparison profile used in the nondegeneracy argument."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    if not p > 1:
        raise ValueError("p must exceed 1")
    if n < 2:
        raise ValueError("n must be at least 2")
    r = np.linspace(kappa, np.sqrt(kappa), samples)
    vals = radial_profile_value(r, kappa, p, n)
    vals[0], vals[-1] = 0.0, 1.0
    return RadialProfile(kappa, p, n, r, vals)


def ball_unknowns(ball: BallQuery) -> np.ndarray:
    if not ball.inside():
        raise OutOfDomain("ball leaves the domain")
    inner = ball.node_mask()
    inner &= ~ball.grid.boundary_mask()
    return inner


def p_harmonic_replacement(state: VectorState, ball: BallQuery, i: int, p: float, tol: float = 1e-8):
    """Replace channel ``i`` by its p-harmonic extension inside ``ball``.

    Returns ``(v, gap)`` where ``v`` is the full nodal array and ``gap`` is
    the drop in Dirichlet energy over the cells the ball touches.
    """
    inner = ball_unknowns(ball)
    u = state.values[i]
    if not inner.any():
        return u.copy(), 0.0
    v = solve_p_dirichlet(PLaplaceJob(u, inner, state.grid.h, p, tol=tol))
    cells = stencil.occupied_cells(inner)
    gap = dirichlet_energy(u, state.grid.h, p, cells) - dirichlet_energy(v, state.grid.h, p, cells)
    return v, gap


def replacement_gap_terms(state: VectorState, ball: BallQuery, i: int, p: float, v: np.ndarray):
    """Pieces of the harmonic-replacement inequality on the cells of ``ball``.

    Returns ``(int |grad(u-v)|^p, |{|u|=0} cap B|, int |grad u|^p)``.
    """
    h = state.grid.h
    inner = ball_unknowns(ball)
    cells = stencil.occupied_cells(inner)
    u = state.values[i]
    diff = dirichlet_energy(u - v, h, p, cells)
    zero = ~stencil.occupied_cells(state.mask)
    zero_vol = float(np.sum(zero & cells)) * h ** state.grid.ndim
    du = dirichlet_energy(u, h, p, cells)
    return diff, zero_vol, du
