"""Minimisation of the discrete J and the exhaustive small-instance oracle.

Phase 1 relaxes the indicator to beta_delta(|u|) = min(1, |u|/delta) and
runs a bound-constrained quasi-Newton descent (L-BFGS-B keeps u >= 0) for a
decreasing sequence of widths.  Phase 2 works on the exact functional: the
positivity set is edited by discrete moves, every candidate is re-solved
p-harmonically on its support and accepted only when J drops.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, optimize

from . import stencil
from .core import Grid, Problem, VectorState
from .functional import EnergyBreakdown, _breakdown, evaluate_J, local_energy
from .plap import NonConvergence, PLaplaceJob, solve_p_dirichlet

log = logging.getLogger(__name__)


class InstanceTooLarge(ValueError):
    pass


@dataclass
class SolveSchedule:
    """Knobs of :func:`minimize`.

    delta_schedule is given in units of the data scale max(g).
    """

    delta_schedule: Optional[Sequence[float]] = None
    sweep_count: int = 50
    kappa: float = 0.5
    c_trunc: Optional[float] = None
    tol_energy: float = 1e-12
    seed: int = 0
    probes: int = 8
    phase1_iters: int = 300
    phase1_max_nodes: int = 5000
    solver_tol: float = 1e-8
    patch: int = 3
    exhaustive_nodes: int = 4096
    multistart_nodes: int = 64

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if self.delta_schedule is not None:
            d = [float(x) for x in self.delta_schedule]
            if not d or any(x <= 0 for x in d) or any(b >= a for a, b in zip(d, d[1:])):
                raise ValueError("delta_schedule must be positive and strictly decreasing")
        if self.sweep_count < 1:
            raise ValueError("sweep_count must be positive")

    def deltas(self) -> list:
        if self.delta_schedule is None:
            return [2.0 ** -k for k in range(11)]
        return [float(x) for x in self.delta_schedule]


@dataclass
class MinimizeResult:
    state: VectorState
    energy: EnergyBreakdown
    history: list = field(default_factory=list)
    certificate: dict = field(default_factory=dict)
    certified: bool = False
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "energy": self.energy.as_dict(),
            "certified": self.certified,
            "converged": self.converged,
            "certificate": self.certificate,
            "history": self.history,
        }


# ---------------------------------------------------------------- helpers

def _J(values, problem) -> float:
    return _breakdown(values, problem.grid.h, problem.p, problem.Q_cells ** problem.p).total


def _positive(values) -> np.ndarray:
    return np.any(values > 0, axis=0)


def _cross(n):
    return ndimage.generate_binary_structure(n, 1)


def resolve(values: np.ndarray, mask: np.ndarray, problem: Problem, tol: float = 1e-8) -> np.ndarray:
    """Channelwise p-harmonic extension of the boundary data into ``mask``."""
    out = problem.g.copy()
    inner = mask & problem.interior
    if not inner.any():
        return out
    for i in range(problem.m):
        job = PLaplaceJob(out[i], inner, problem.grid.h, problem.p, tol=tol)
        try:
            out[i] = solve_p_dirichlet(job)
        except NonConvergence as exc:
            log.warning("inner solve: %s", exc)
            out[i] = exc.u
    np.maximum(out, 0.0, out=out)
    return out


def _patch_box(idx, R, shape):
    return tuple(slice(max(i - R, 0), min(i + R + 1, s)) for i, s in zip(idx, shape))


def _patch_resolve(values, mask, problem, box, tol):
    """Re-solve only the unknowns strictly inside ``box``; returns new values."""
    out = values.copy()
    sub_mask = np.zeros(tuple(b.stop - b.start for b in box), dtype=bool)
    core = tuple(slice(1, -1) for _ in box)
    sub_mask[core] = (mask & problem.interior)[box][core]
    free = np.zeros_like(sub_mask)
    free[core] = problem.interior[box][core]
    for i in range(problem.m):
        sub = out[i][box]
        sub[free & ~sub_mask] = 0.0
        if sub_mask.any():
            job = PLaplaceJob(sub, sub_mask, problem.grid.h, problem.p, tol=tol)
            try:
                sub = solve_p_dirichlet(job)
            except NonConvergence as exc:
                sub = exc.u
        out[i][box] = np.maximum(sub, 0.0)
    return out


def frontier(mask: np.ndarray, interior: np.ndarray):
    """Positive nodes next to zero nodes, and zero nodes next to positive ones."""
    st = _cross(mask.ndim)
    inner = mask & interior & ndimage.binary_dilation(~mask, st)
    outer = ~mask & interior & ndimage.binary_dilation(mask, st)
    return inner, outer


def dichotomy_violations(state: VectorState) -> list:
    """Components of the positivity set on which some channel is neither 0 nor > 0."""
    labels, count = ndimage.label(state.mask, _cross(state.grid.ndim))
    bad = []
    for k in range(1, count + 1):
        sel = labels == k
        for i in range(state.m):
            v = state.values[i][sel]
            if v.max() > 0 and v.min() <= 0:
                bad.append({"component": k, "channel": i, "nodes": int(sel.sum())})
    return bad


# ---------------------------------------------------------------- phase 1

def _coarsen(problem: Problem) -> Optional[Problem]:
    grid = problem.grid
    if any((s - 1) % 2 for s in grid.shape) or min(grid.shape) < 9:
        return None
    cg = Grid(grid.lo, 2 * grid.h, tuple((s - 1) // 2 + 1 for s in grid.shape))
    sl = (slice(None, None, 2),) * grid.ndim
    if problem.Q_func is not None:
        Qc = np.broadcast_to(np.asarray(problem.Q_func(*cg.cell_coords()), dtype=float), cg.cell_shape).copy()
    else:
        q = problem.Q_cells
        for d in range(grid.ndim):
            q = 0.5 * (np.take(q, range(0, q.shape[d], 2), axis=d) + np.take(q, range(1, q.shape[d], 2), axis=d))
        Qc = q
    g = problem.g[(slice(None),) + sl].copy()
    bnd = cg.boundary_mask()
    g[:, ~bnd] = 0.0
    return Problem(cg, problem.p, problem.m, problem.Q_nodes[sl].copy(), Qc, g, Q_func=problem.Q_func,
                   q_smooth=problem.q_smooth)


class _Smoothed:
    """Relaxed functional with beta_delta(|u|_2) in place of the indicator."""

    def __init__(self, problem: Problem, eps: float):
        self.pr = problem
        self.free = problem.interior
        self.eps = eps
        g = problem.grid
        self.w = g.h ** g.ndim / 2 ** g.ndim
        self.cellvol = g.h ** g.ndim
        self.Qp = problem.Q_cells ** problem.p
        self.delta = 1.0

    def unpack(self, x):
        v = self.pr.g.copy()
        v[:, self.free] = x.reshape(self.pr.m, -1)
        return v

    def __call__(self, x):
        pr = self.pr
        v = self.unpack(x)
        h, p, n = pr.grid.h, pr.p, pr.grid.ndim
        E = 0.0
        grad = np.zeros_like(v)
        for i in range(pr.m):
            G = stencil.corner_gradients(v[i], h)
            s = np.sum(G * G, axis=1) + self.eps ** 2
            E += self.w * float(np.sum(s ** (0.5 * p)))
            F = (s ** (0.5 * p - 1.0))[:, None] * G
            grad[i] = p * self.w * stencil.adjoint(F, h, v[i].shape)
        t = np.sqrt(np.sum(v * v, axis=0))
        d = self.delta
        om = 1.0 - np.minimum(1.0, t / d)
        cs = stencil.corners(n)
        shape = t.shape
        facs = [om[stencil.node_slice(c, shape)] for c in cs]
        prod = np.prod(facs, axis=0)
        E += self.cellvol * float(np.sum(self.Qp * (1.0 - prod)))
        dVdt = np.zeros(shape)
        slope = np.where(t < d, 1.0 / d, 0.0)
        for k, c in enumerate(cs):
            others = np.ones_like(prod)
            for j, f in enumerate(facs):
                if j != k:
                    others = others * f
            dVdt[stencil.node_slice(c, shape)] += self.cellvol * self.Qp * others
        dVdt *= slope
        safe = np.where(t > 0, t, 1.0)
        dir_ = np.where(t > 0, v / safe, 1.0)
        grad += dVdt[None] * dir_
        return E, grad[:, self.free].ravel()


def _harmonic_start(problem: Problem) -> np.ndarray:
    mask = problem.interior
    out = problem.g.copy()
    for i in range(problem.m):
        out[i] = solve_p_dirichlet(PLaplaceJob(out[i], mask, problem.grid.h, 2.0))
    return np.maximum(out, 0.0)


def _phase1(problem: Problem, sched: SolveSchedule, history: list) -> np.ndarray:
    if problem.grid.size > sched.phase1_max_nodes:
        coarse = _coarsen(problem)
        if coarse is not None:
            vc = _phase1(coarse, sched, history)
            st = VectorState(coarse.grid, vc)
            from .core import interpolate

            fine = interpolate(st, problem.grid.node_points()).T.reshape((problem.m,) + problem.grid.shape)
            fine[:, problem.boundary] = problem.g[:, problem.boundary]
            return fine
    S = problem.data_scale()
    L = problem.grid.h * (max(problem.grid.shape) - 1)
    fun = _Smoothed(problem, 1e-3 * S / L)
    v = _harmonic_start(problem)
    x = v[:, fun.free].ravel()
    for delta in sched.deltas():
        fun.delta = delta * S
        res = optimize.minimize(fun, x, jac=True, method="L-BFGS-B",
                                bounds=optimize.Bounds(0.0, np.inf),
                                options={"maxiter": sched.phase1_iters, "ftol": 1e-13, "gtol": 1e-12})
        x = res.x
        history.append({"phase": 1, "delta": fun.delta, "objective": float(res.fun),
                        "iterations": int(res.nit), "grid": list(problem.grid.shape)})
    v = fun.unpack(x)
    t = np.sqrt(np.sum(v * v, axis=0))
    v[:, (t < 0.5 * fun.delta) & problem.interior] = 0.0
    return v


# ---------------------------------------------------------------- phase 2

class _Polisher:
    def __init__(self, problem: Problem, sched: SolveSchedule, history: list):
        self.pr = problem
        self.sched = sched
        self.history = history
        self.small = problem.grid.size <= sched.exhaustive_nodes
        self.tol = sched.solver_tol
        self.components = True

    def record(self, values, sweep, move):
        e = _breakdown(values, self.pr.grid.h, self.pr.p, self.pr.Q_cells ** self.pr.p)
        self.history.append({"phase": 2, "sweep": sweep, "move": move, "dirichlet": list(e.dirichlet),
                             "volume": e.volume, "total": e.total})
        return e.total

    def tiny(self, J):
        return self.sched.tol_energy * max(J, 0.0)

    def global_try(self, values, J, mask):
        cand = resolve(values, mask, self.pr, self.tol)
        return cand, _J(cand, self.pr)

    def run(self, values, label="start"):
        pr = self.pr
        values = resolve(values, _positive(values), pr, self.tol)
        J = self.record(values, 0, label)
        converged = False
        for sweep in range(1, self.sched.sweep_count + 1):
            J_start = J
            values, J = self.sweep(values, J, sweep)
            if not J < J_start - self.tiny(J_start):
                converged = True
                break
        # leave the state p-harmonic on its own support
        cand, Jc = self.global_try(values, J, _positive(values))
        if Jc <= J + self.tiny(J):
            values, J = cand, Jc
        return values, J, converged

    def sweep(self, values, J, sweep):
        pr = self.pr
        st = _cross(pr.dim)
        # (a) replacement on the current positivity set
        cand, Jc = self.global_try(values, J, _positive(values))
        if Jc <= J:
            values, J = cand, Jc
            J = self.record(values, sweep, "replace")
        # (b) truncation
        trunc = truncation_step(VectorState(pr.grid, values, copy=False), pr, self.sched.kappa,
                                self.sched.c_trunc)
        if not np.array_equal(trunc.values, values):
            cand, Jc = self.global_try(trunc.values, J, trunc.mask)
            if Jc <= J:
                values, J = cand, Jc
                J = self.record(values, sweep, "truncate")
        if self.small:
            return self.steepest(values, J, sweep)
        # whole-layer moves
        for name in ("dilate", "erode"):
            while True:
                mask = _positive(values)
                if name == "dilate":
                    new = (ndimage.binary_dilation(mask, st) & pr.interior) | (mask & pr.boundary)
                else:
                    new = mask & ~(ndimage.binary_dilation(~mask, st) & pr.interior)
                if np.array_equal(new, mask):
                    break
                cand, Jc = self.global_try(values, J, new)
                if Jc < J - self.tiny(J):
                    values, J = cand, Jc
                    J = self.record(values, sweep, name)
                else:
                    break
        values, J = self.component_moves(values, J, sweep)
        values, J = self.node_moves(values, J, sweep)
        return values, J

    def candidate_masks(self, mask):
        """All support edits tried in one steepest-descent step."""
        pr = self.pr
        st = _cross(pr.dim)
        out = [("dilate", (ndimage.binary_dilation(mask, st) & pr.interior) | (mask & pr.boundary)),
               ("erode", mask & ~(ndimage.binary_dilation(~mask, st) & pr.interior))]
        for kind in ("fill", "delete") if self.components else ():
            base = (~mask if kind == "fill" else mask) & pr.interior
            labels, count = ndimage.label(base, st)
            for k in range(1, min(count, 16) + 1):
                comp = labels == k
                out.append((kind, mask | comp if kind == "fill" else mask & ~comp))
        inner, outer = frontier(mask, pr.interior)
        for idx in map(tuple, np.argwhere(inner | outer)):
            new = mask.copy()
            new[idx] = not mask[idx]
            out.append(("node", new))
        return out

    def steepest(self, values, J, sweep):
        """Best-improvement descent over all candidate supports (small grids)."""
        while True:
            mask = _positive(values)
            best = None
            seen = set()
            for name, new in self.candidate_masks(mask):
                key = new.tobytes()
                if key in seen or np.array_equal(new, mask):
                    continue
                seen.add(key)
                cand, Jc = self.global_try(values, J, new)
                if best is None or Jc < best[2]:
                    best = (name, cand, Jc)
            if best is None or not best[2] < J - self.tiny(J):
                return values, J
            values, J = best[1], best[2]
            J = self.record(values, sweep, best[0])
            if best[0] in ("dilate", "erode"):
                # keep marching while the same layer move still pays
                while True:
                    new = dict(self.candidate_masks(_positive(values))[:2])[best[0]]
                    if np.array_equal(new, _positive(values)):
                        break
                    cand, Jc = self.global_try(values, J, new)
                    if not Jc < J - self.tiny(J):
                        break
                    values, J = cand, Jc
                    J = self.record(values, sweep, best[0])

    def component_moves(self, values, J, sweep):
        pr = self.pr
        st = _cross(pr.dim)
        for kind in ("fill", "delete"):
            mask = _positive(values)
            base = (~mask if kind == "fill" else mask) & pr.interior
            labels, count = ndimage.label(base, st)
            if count > 16:
                continue
            for k in range(1, count + 1):
                comp = labels == k
                mask = _positive(values)
                new = mask | comp if kind == "fill" else mask & ~comp
                if np.array_equal(new, mask):
                    continue
                cand, Jc = self.global_try(values, J, new)
                if Jc < J - self.tiny(J):
                    values, J = cand, Jc
                    J = self.record(values, sweep, kind)
        return values, J

    def node_moves(self, values, J, sweep):
        pr = self.pr
        inner, outer = frontier(_positive(values), pr.interior)
        nodes = np.argwhere(inner | outer)
        R = self.sched.patch
        for idx in map(tuple, nodes):
            mask = _positive(values)
            new = mask.copy()
            new[idx] = not mask[idx]
            if self.small:
                cand, Jc = self.global_try(values, J, new)
                dJ = Jc - J
            else:
                box = _patch_box(idx, R, mask.shape)
                cand = _patch_resolve(values, new, pr, box, self.tol)
                dJ = local_energy(cand, pr, box) - local_energy(values, pr, box)
            if dJ < -self.tiny(J):
                values = cand
                J = self.record(values, sweep, "node")
        return values, J


def truncation_step(state: VectorState, problem: Problem, kappa: float = 0.5, c_trunc: Optional[float] = None,
                    radii: Optional[Sequence[float]] = None) -> VectorState:
    """Zero B_{kappa r} wherever sup over B_r of |u| stays below c_trunc * r.

    Balls are swept by increasing dyadic radius, centres in lexicographic
    order.  A zeroing is kept when J does not increase (ties keep it).
    """
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    grid = problem.grid
    h = grid.h
    c = 0.05 * problem.Q_min if c_trunc is None else float(c_trunc)
    values = state.values.copy()
    if radii is None:
        side = min(h * (s - 1) for s in grid.shape)
        radii = []
        r = 2 * h
        while r <= 0.5 * side:
            radii.append(r)
            r *= 2
    interior = problem.interior
    n = grid.ndim
    for r in radii:
        norm = np.sqrt(np.sum(values ** 2, axis=0))
        if not (norm > 0).any():
            break
        kr = int(np.ceil(r / h))
        # cube filters give a superset of the qualifying centres; each
        # candidate is then checked on the exact ball
        k_in = int(np.floor(r / (h * np.sqrt(n)) - 1e-9))
        sup = ndimage.maximum_filter(norm, size=2 * k_in + 1, mode="constant", cval=0.0)
        k_near = int(np.ceil(kappa * r / h))
        near = ndimage.maximum_filter((norm > 0).astype(np.int8), size=2 * k_near + 1, mode="constant", cval=0) > 0
        ok = np.zeros(grid.shape, dtype=bool)
        lim = int(np.ceil(r / h - 1e-9))
        ok[tuple(slice(lim, s - lim) for s in grid.shape)] = True
        cand = (sup < c * r) & near & ok
        for idx in map(tuple, np.argwhere(cand)):
            box = _patch_box(idx, kr + 1, grid.shape)
            dd = np.sqrt(sum(((np.arange(b.start, b.stop) - i) * h).reshape([-1 if a == k else 1 for a in range(n)]) ** 2
                             for k, (b, i) in enumerate(zip(box, idx))))
            local = np.sqrt(np.sum(values[(slice(None),) + box] ** 2, axis=0))
            if local[dd < r].max() >= c * r:
                continue
            zone = (dd < kappa * r) & interior[box] & (local > 0)
            if not zone.any():
                continue
            old = values[(slice(None),) + box].copy()
            E0 = local_energy(values, problem, box)
            values[(slice(None),) + box][:, zone] = 0.0
            if local_energy(values, problem, box) > E0:
                values[(slice(None),) + box] = old
    return VectorState(grid, values, copy=False)


def _certificate(problem: Problem, values: np.ndarray, sched: SolveSchedule) -> dict:
    pr = problem
    st = _cross(pr.dim)
    J = _J(values, pr)
    tiny = max(sched.tol_energy, 1e-10) * max(J, 0.0)
    probes = []
    mask = _positive(values)
    for name in ("dilate", "erode"):
        if name == "dilate":
            new = (ndimage.binary_dilation(mask, st) & pr.interior) | (mask & pr.boundary)
        else:
            new = mask & ~(ndimage.binary_dilation(~mask, st) & pr.interior)
        if np.array_equal(new, mask):
            continue
        Jc = _J(resolve(values, new, pr, sched.solver_tol), pr)
        probes.append({"probe": name, "dJ": Jc - J, "passed": bool(Jc >= J - tiny)})
    rng = np.random.default_rng(sched.seed)
    inner, outer = frontier(mask, pr.interior)
    cands = np.argwhere(inner | outer)
    grid = pr.grid
    for _ in range(sched.probes if len(cands) else 0):
        idx = tuple(cands[rng.integers(len(cands))])
        k = int(rng.choice([2, 3, 4, 6, 8]))
        center = np.array([grid.axis(d)[i] for d, i in enumerate(idx)])
        r = k * grid.h
        if not grid.ball_inside(center, r):
            continue
        box = _patch_box(idx, k + 1, grid.shape)
        cand = values.copy()
        sub_coords = np.meshgrid(*[grid.axis(d)[b] for d, b in enumerate(box)], indexing="ij")
        ball = sum((x - c) ** 2 for x, c in zip(sub_coords, center)) < r * r
        ball &= pr.interior[box]
        for i in range(pr.m):
            sub = cand[i][box]
            try:
                sub = solve_p_dirichlet(PLaplaceJob(sub, ball, grid.h, pr.p, tol=sched.solver_tol))
            except NonConvergence as exc:
                sub = exc.u
            cand[i][box] = np.maximum(sub, 0.0)
        dJ = local_energy(cand, pr, box) - local_energy(values, pr, box)
        probes.append({"probe": "replace", "center": center.tolist(), "r": r, "dJ": dJ,
                       "passed": bool(dJ >= -tiny)})
    return {"probes": probes, "passed": all(q["passed"] for q in probes)}


def minimize(problem: Problem, schedule: Optional[SolveSchedule] = None) -> MinimizeResult:
    """Local minimiser of the discrete J (see module docstring)."""
    sched = schedule or SolveSchedule()
    history: list = []
    if problem.g.max() <= 0:
        state = VectorState.zeros(problem.grid, problem.m)
        return MinimizeResult(state, evaluate_J(state, problem), history,
                              {"probes": [], "passed": True}, True, True)
    v1 = _phase1(problem, sched, history)
    pol = _Polisher(problem, sched, history)
    starts = [("phase1", v1)]
    if problem.grid.size <= sched.multistart_nodes:
        starts.append(("full", resolve(problem.g, problem.interior, problem, sched.solver_tol)))
        starts.append(("empty", problem.g.copy()))
    best = None
    for label, v in starts:
        sub_hist: list = []
        pol.history = sub_hist
        if label == "empty":
            # grow by local moves first so whole-component fills cannot
            # jump straight into the merged support
            pol.components = False
            v, _, _ = pol.run(v, label)
            pol.components = True
        vals, J, conv = pol.run(v, label)
        if best is None or J < best[1]:
            best = (vals, J, conv, sub_hist)
    values, J, converged, hist2 = best
    history.extend(hist2)
    totals = [r["total"] for r in hist2]
    monotone = all(b <= a + sched.tol_energy * abs(a) + 1e-300 for a, b in zip(totals, totals[1:]))
    cert = _certificate(problem, values, sched)
    cert["monotone"] = monotone
    cert["dichotomy_violations"] = dichotomy_violations(VectorState(problem.grid, values))
    state = VectorState(problem.grid, values)
    energy = evaluate_J(state, problem)
    certified = converged and monotone and cert["passed"] and not cert["dichotomy_violations"]
    return MinimizeResult(state, energy, history, cert, certified, converged)


# ---------------------------------------------------------------- oracle

def brute_force_oracle(problem: Problem, max_nodes: int = 14, tol: float = 1e-8) -> MinimizeResult:
    """Exhaustive search over all positivity patterns of the interior nodes.

    Each connected component of a pattern is solved once per channel and
    cached; J is evaluated on the assembled state.  The lowest pattern
    index wins ties.
    """
    interior = problem.interior
    nodes = np.argwhere(interior)
    N = len(nodes)
    if N > max_nodes:
        raise InstanceTooLarge(f"{N} interior nodes exceed the oracle limit {max_nodes}")
    st = _cross(problem.dim)
    cache: dict = {}
    best = None
    for code in range(2 ** N):
        mask = np.zeros(problem.grid.shape, dtype=bool)
        for b in range(N):
            if code >> b & 1:
                mask[tuple(nodes[b])] = True
        values = problem.g.copy()
        labels, count = ndimage.label(mask, st)
        for k in range(1, count + 1):
            comp = labels == k
            key = frozenset(map(tuple, np.argwhere(comp)))
            for i in range(problem.m):
                if (key, i) not in cache:
                    sol = solve_p_dirichlet(PLaplaceJob(problem.g[i], comp, problem.grid.h, problem.p, tol=tol))
                    cache[(key, i)] = np.maximum(sol[comp], 0.0)
                values[i][comp] = cache[(key, i)]
        J = _J(values, problem)
        if best is None or J < best[1]:
            best = (values, J, code)
    values, J, code = best
    state = VectorState(problem.grid, values)
    cert = {"exhaustive": True, "patterns": 2 ** N, "best_pattern": int(code), "passed": True}
    return MinimizeResult(state, evaluate_J(state, problem), [], cert, True, True)
