"""Blow-ups, half-plane fits, one-sided linear fits and the ACF quantity."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .. import stencil
from ..core import Grid, OutOfDomain, VectorState, interpolate
from ..geometry import ball_cell_fractions
from .freeboundary import FreeBoundary, extract_free_boundary


class NotFreeBoundaryPoint(ValueError):
    pass


class UnsupportedExponent(ValueError):
    pass


@dataclass
class BlowupState:
    """v(y) = u(x0 + r y) / r on [-1, 1]^n with spacing h / r."""

    grid: Grid
    values: np.ndarray
    x0: tuple
    r: float
    nu: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None
    flatness: Optional[float] = None

    @property
    def state(self) -> VectorState:
        return VectorState(self.grid, self.values, copy=False)


@dataclass
class HalfplaneFit:
    nu: np.ndarray
    a: np.ndarray
    flatness: float
    slope_residual: float
    degenerate: bool = False
    rms: float = 0.0

    def as_dict(self) -> dict:
        return {"nu": self.nu.tolist(), "a": self.a.tolist(), "flatness": self.flatness,
                "slope_residual": self.slope_residual, "degenerate": self.degenerate, "rms": self.rms}


def blowup_rescale(state: VectorState, x0, r: float, fb: Optional[FreeBoundary] = None,
                   check_point: bool = True) -> BlowupState:
    grid = state.grid
    x0 = np.asarray(x0, dtype=float)
    if not grid.ball_inside(x0, r):
        raise OutOfDomain("blow-up box leaves the domain")
    if check_point:
        fb = extract_free_boundary(state) if fb is None else fb
        if fb.empty or fb.distance(x0)[0] > 0.5 * grid.h:
            raise NotFreeBoundaryPoint("x0 is not a free-boundary point")
    k = int(round(r / grid.h))
    bgrid = Grid((-1.0,) * grid.ndim, 1.0 / k, (2 * k + 1,) * grid.ndim)
    pts = x0 + r * bgrid.node_points()
    vals = interpolate(state, pts).T.reshape((state.m,) + bgrid.shape) / r
    return BlowupState(bgrid, vals, tuple(x0), r)


def _unit(theta: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.array([theta[0]])
    if n == 2:
        return np.array([np.cos(theta[0]), np.sin(theta[0])])
    t, f = theta
    return np.array([np.sin(t) * np.cos(f), np.sin(t) * np.sin(f), np.cos(t)])


def _fit_a(Y, V, nu):
    phi = np.maximum(-(Y @ nu), 0.0)
    den = float(phi @ phi)
    if den == 0:
        return np.zeros(V.shape[1]), phi
    return np.maximum(phi @ V / den, 0.0), phi


def _sse(Y, V, nu):
    a, phi = _fit_a(Y, V, nu)
    R = V - phi[:, None] * a[None]
    return float(np.sum(R * R))


def halfplane_fit(blow: BlowupState, p: float, Qx0: float) -> HalfplaneFit:
    """Least-squares fit of (-y.nu)_+ a over unit-ball samples; a >= 0, |nu| = 1."""
    g = blow.grid
    n = g.ndim
    Y = g.node_points()
    inside = np.sum(Y * Y, axis=1) <= 1.0 + 1e-12
    Y = Y[inside]
    V = blow.values.reshape(blow.values.shape[0], -1).T[inside]
    target = Qx0 ** p / (p - 1)
    if not np.any(V > 0):
        fit = HalfplaneFit(np.eye(n)[0], np.zeros(V.shape[1]), 0.0, 1.0, degenerate=True)
        blow.nu, blow.a, blow.flatness = fit.nu, fit.a, fit.flatness
        return fit
    if n == 1:
        cands = [np.array([1.0]), np.array([-1.0])]
        nu = min(cands, key=lambda c: _sse(Y, V, c))
    elif n == 2:
        th = np.linspace(-np.pi, np.pi, 361)[:-1]
        errs = [_sse(Y, V, _unit([t], 2)) for t in th]
        t0 = th[int(np.argmin(errs))]
        step = th[1] - th[0]
        res = optimize.minimize_scalar(lambda t: _sse(Y, V, _unit([t], 2)), bounds=(t0 - step, t0 + step),
                                       method="bounded", options={"xatol": 1e-10})
        nu = _unit([res.x], 2)
    else:
        best = None
        for t in np.linspace(0, np.pi, 19):
            for f in np.linspace(-np.pi, np.pi, 37)[:-1]:
                e = _sse(Y, V, _unit([t, f], 3))
                if best is None or e < best[0]:
                    best = (e, t, f)
        res = optimize.minimize(lambda x: _sse(Y, V, _unit(x, 3)), [best[1], best[2]], method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-16})
        nu = _unit(res.x, 3)
    a, phi = _fit_a(Y, V, nu)
    R = V - phi[:, None] * a[None]
    resid = np.sqrt(np.sum(R * R, axis=1))
    flat = float(resid.max())
    slope = float(np.sum(a ** p))
    fit = HalfplaneFit(nu, a, flat, abs(slope - target) / target, False, float(np.sqrt(np.mean(resid ** 2))))
    blow.nu, blow.a, blow.flatness = fit.nu, fit.a, fit.flatness
    return fit


def regular_points(state: VectorState, p: float, Q_at, r: float, threshold: float = 0.2, count: int = 10,
                   fb: Optional[FreeBoundary] = None, candidates: int = 80, reach: Optional[float] = None) -> list:
    """FB points whose blow-up at radius r has flatness below ``threshold``.

    Up to ``candidates`` FB points are screened (evenly spread); ``count``
    of the accepted points are returned, also evenly spread.  ``reach``
    (default r) is the largest radius the caller will blow up at.
    """
    fb = extract_free_boundary(state) if fb is None else fb
    fb.require()
    grid = state.grid
    order = np.lexsort(fb.points.T[::-1])
    reach = max(r, reach or r)
    ok = [i for i in order if grid.ball_inside(fb.points[i], reach)]
    if not ok:
        return []
    pick = np.unique(np.linspace(0, len(ok) - 1, min(candidates, len(ok))).round().astype(int))
    good = []
    for j in pick:
        x0 = fb.points[ok[j]]
        blow = blowup_rescale(state, x0, r, fb=fb)
        fit = halfplane_fit(blow, p, Q_at(x0))
        if not fit.degenerate and fit.flatness < threshold:
            good.append(x0)
    if len(good) <= count:
        return good
    sel = np.linspace(0, len(good) - 1, count).round().astype(int)
    return [good[k] for k in sel]


def linear_asymptotics_fit(state: VectorState, x0, radii: Sequence[float], p: float, Qx0: float = 1.0,
                           fb: Optional[FreeBoundary] = None) -> dict:
    """One-sided linear fit at decreasing radii, with a graph-likeness check."""
    fb = extract_free_boundary(state) if fb is None else fb
    fb.require()
    x0 = np.asarray(x0, dtype=float)
    trace = []
    graph_like = True
    for r in radii:
        near = np.linalg.norm(fb.points - x0, axis=1) < r
        mean_normal = fb.normals[near].mean(axis=0) if near.any() else np.zeros(state.grid.ndim)
        consistent = float(np.linalg.norm(mean_normal)) >= 0.5
        graph_like &= consistent
        blow = blowup_rescale(state, x0, r, fb=fb)
        fit = halfplane_fit(blow, p, Qx0)
        trace.append({"r": r, "alpha": fit.a.tolist(), "alpha_p": float(np.sum(fit.a ** p) ** (1 / p)),
                      "nu": fit.nu.tolist(), "residual": fit.rms, "flatness": fit.flatness,
                      "orientation": float(np.linalg.norm(mean_normal))})
    return {"x0": x0.tolist(), "trace": trace, "graph_like": bool(graph_like)}


@dataclass
class AcfTrace:
    radii: list
    phi: list
    factors: list = field(default_factory=list)

    def relative_spread(self) -> float:
        v = np.asarray(self.phi)
        return float((v.max() - v.min()) / abs(v).max()) if v.size and abs(v).max() > 0 else 0.0

    def nondecreasing(self, tol: float = 0.05) -> bool:
        v = self.phi
        return all(b >= a * (1 - tol) for a, b in zip(v, v[1:]))


def _weight_cell_average(grid: Grid, center, n_sub: int = 4) -> np.ndarray:
    """Cell averages of |x - center|^(2-n)."""
    n = grid.ndim
    if n == 2:
        return np.ones(grid.cell_shape)
    t = (np.arange(n_sub) + 0.5) / n_sub
    acc = np.zeros(grid.cell_shape)
    cc = grid.cell_coords()
    import itertools

    for off in itertools.product(t, repeat=n):
        d = np.sqrt(sum((c - 0.5 * grid.h + o * grid.h - x) ** 2 for c, o, x in zip(cc, off, center)))
        acc += np.where(d > 0, d, 0.5 * grid.h / n_sub) ** (2 - n)
    return acc / n_sub ** n


def acf_phi(v1: VectorState, v2: VectorState, center, radii: Sequence[float], p: float = 2.0) -> AcfTrace:
    """Phi(r) = r^-4 prod_j int_{B_r} |grad v_j|^2 |x|^(2-n), p = 2 only."""
    if p != 2:
        raise UnsupportedExponent("the ACF monotonicity quantity is defined for p = 2 only")
    if v1.grid != v2.grid:
        raise ValueError("fields must share a grid")
    if np.any(v1.mask & v2.mask):
        raise ValueError("supports must be disjoint")
    grid = v1.grid
    wgt = _weight_cell_average(grid, center)
    dens = [sum(stencil.power_energy_density(u, grid.h, 2.0) for u in v.values) for v in (v1, v2)]
    phis, facs = [], []
    for r in radii:
        frac = ball_cell_fractions(grid, center, r)
        f = [float(np.sum(d * wgt * frac)) * grid.h ** grid.ndim / r ** 2 for d in dens]
        facs.append(f)
        phis.append(f[0] * f[1])
    return AcfTrace(list(radii), phis, facs)
