"""Corkscrew, Harnack-chain, growth-step and component nondegeneracy diagnostics."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from ..core import VectorState, interpolate
from .freeboundary import FreeBoundary, extract_free_boundary, select_points
from .reports import ScanReport


def _node_graph(allowed: np.ndarray, h: float):
    """Sparse graph on allowed nodes with full (king-move) connectivity."""
    n = allowed.ndim
    ids = -np.ones(allowed.shape, dtype=np.int64)
    ids[allowed] = np.arange(int(allowed.sum()))
    rows, cols, w = [], [], []
    import itertools

    for off in itertools.product((-1, 0, 1), repeat=n):
        if all(o <= 0 for o in off):
            # each undirected edge once: keep offsets whose first nonzero entry is positive
            continue
        first = next(o for o in off if o != 0)
        if first < 0:
            continue
        src = tuple(slice(max(0, -o), s - max(0, o)) for o, s in zip(off, allowed.shape))
        dst = tuple(slice(max(0, o), s - max(0, -o)) for o, s in zip(off, allowed.shape))
        a = ids[src]
        b = ids[dst]
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
        w.append(np.full(int(ok.sum()), h * np.sqrt(sum(o * o for o in off))))
    N = int(allowed.sum())
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        ww = np.concatenate(w)
    else:
        r = c = np.zeros(0, int)
        ww = np.zeros(0)
    G = sp.coo_matrix((ww, (r, c)), shape=(N, N)).tocsr()
    return G, ids


def nta_diagnostics(state: VectorState, scales: Sequence[float], M_max: float = 10.0, policy: str = "stride:4",
                    pairs: int = 20, C_tilde: float = 4.0, sigma: float = 0.5, ell_max: int = 50,
                    growth_points: int = 20, seed: int = 0, fb: Optional[FreeBoundary] = None) -> ScanReport:
    """(i)/(ii) corkscrew constants, (iii) Harnack chains, (iv) growth step,
    (v) component nondegeneracy.

    Corkscrew: for an FB point x0 and radius r, M = r / max_a min(dist(a, FB),
    r - |a - x0|) over nodes a of the phase inside B_r(x0); a flat interface
    gives M = 2.  Harnack chain for a pair at distance <= C_tilde*eps from
    each other and >= eps from the FB: shortest path through nodes at
    distance >= sigma*eps, with length ell = ceil(path / (sigma*eps)) + 1.
    """
    grid = state.grid
    fb = extract_free_boundary(state) if fb is None else fb
    rep = ScanReport("nta")
    if fb.empty:
        rep.aggregates = {"note": "no free boundary"}
        return rep
    nodes = grid.node_points()
    mask = state.mask.ravel()
    dist = fb.distance(nodes)
    tree_all = cKDTree(nodes)
    centers = fb.points[select_points(fb, policy)]
    worst = {"positive": 0.0, "zero": 0.0}
    for phase, sel in (("positive", mask), ("zero", ~mask)):
        for x0 in centers:
            for r in scales:
                if not grid.ball_inside(x0, r):
                    continue
                idx = np.array(tree_all.query_ball_point(x0, r), dtype=int)
                idx = idx[sel[idx]]
                if not len(idx):
                    M = float("inf")
                else:
                    depth = np.minimum(dist[idx], r - np.linalg.norm(nodes[idx] - x0, axis=1))
                    best = float(depth.max())
                    M = r / best if best > 0 else float("inf")
                worst[phase] = max(worst[phase], M)
                rep.records.append({"kind": "corkscrew", "phase": phase, "center": x0.tolist(), "r": r, "M": M})
    rng = np.random.default_rng(seed)
    chains = []
    for eps in scales:
        allowed = state.mask & (dist.reshape(grid.shape) >= sigma * eps)
        G, ids = _node_graph(allowed, grid.h)
        cand = np.flatnonzero(mask & (dist >= eps) & (dist <= 2 * eps))
        far = np.flatnonzero(mask & (dist >= eps))
        if not len(cand) or not len(far):
            continue
        tree_far = cKDTree(nodes[far])
        for _ in range(pairs):
            a = int(cand[rng.integers(len(cand))])
            near = tree_far.query_ball_point(nodes[a], C_tilde * eps)
            near = [far[j] for j in near if far[j] != a]
            if not near:
                continue
            b = int(near[rng.integers(len(near))])
            ia = ids.ravel()[a]
            ib = ids.ravel()[b]
            d = dijkstra(G, directed=False, indices=int(ia), limit=C_tilde * eps * 20)[int(ib)]
            ok = bool(np.isfinite(d))
            ell = int(np.ceil(d / (sigma * eps))) + 1 if ok else None
            chains.append(ell if ok else np.inf)
            rep.records.append({"kind": "harnack", "eps": eps, "a": nodes[a].tolist(), "b": nodes[b].tolist(),
                                "path": float(d) if ok else None, "ell": ell, "ok": ok})
    # growth step at positive points
    pos = np.flatnonzero(mask & grid.boundary_mask().ravel().__invert__())
    sup_inf = state.values.reshape(state.m, -1).max(axis=0)
    norm2 = state.norm().ravel()
    ratios = []
    if len(pos):
        for _ in range(growth_points):
            j = int(pos[rng.integers(len(pos))])
            x0 = nodes[j]
            delta = float(dist[j])
            level = 0.5 * sup_inf[j]
            low = np.flatnonzero(norm2 <= level)
            if not len(low):
                continue
            d1 = float(cKDTree(nodes[low]).query(x0)[0])
            if d1 <= 0 or not grid.ball_inside(x0, d1):
                continue
            s = interpolate(state, _sphere(grid.ndim, 64) * d1 + x0).max()
            ratio = float(s / sup_inf[j])
            ratios.append(ratio)
            rep.records.append({"kind": "growth", "x0": x0.tolist(), "delta": delta, "delta1": d1,
                                "sigma": d1 / delta if delta > 0 else None, "ratio": ratio})
    # component nondegeneracy
    labels, count = ndimage.label(state.mask, ndimage.generate_binary_structure(grid.ndim, 1))
    comp_min = []
    lab = labels.ravel()
    for x0 in centers:
        for r in scales:
            if not grid.ball_inside(x0, r):
                continue
            idx = np.array(tree_all.query_ball_point(x0, r), dtype=int)
            comps = set(lab[idx]) - {0}
            for k in comps:
                sub = idx[lab[idx] == k]
                v = float(norm2[sub].max()) / r
                comp_min.append(v)
                rep.records.append({"kind": "component", "center": x0.tolist(), "r": r, "component": int(k),
                                    "ratio": v})
    finite = [c for c in chains if np.isfinite(c)]
    rep.aggregates = {
        "M_positive": worst["positive"],
        "M_zero": worst["zero"],
        "harnack_queries": len(chains),
        "harnack_failures": int(sum(1 for c in chains if not np.isfinite(c))),
        "ell_max": int(max(finite)) if finite else None,
        "growth_min_ratio": float(min(ratios)) if ratios else None,
        "growth_median_ratio": float(np.median(ratios)) if ratios else None,
        "component_min_ratio": float(min(comp_min)) if comp_min else None,
        "components": int(count),
    }
    rep.passed = True
    if worst["positive"] > M_max or worst["zero"] > M_max:
        rep.fail(f"corkscrew M exceeds {M_max}")
    if rep.aggregates["harnack_failures"]:
        rep.fail("some Harnack chain query failed")
    if finite and max(finite) > ell_max:
        rep.fail(f"Harnack chain longer than {ell_max}")
    return rep


def _sphere(n: int, k: int) -> np.ndarray:
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        t = np.linspace(0, 2 * np.pi, k, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    # Fibonacci sphere
    i = np.arange(k) + 0.5
    phi = np.arccos(1 - 2 * i / k)
    th = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
