"""Ball scans on computed states: nondegeneracy, density, measure,
viscosity gradient, p-subharmonicity and the harmonic-replacement gap."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .. import stencil
from ..core import BallQuery, Problem, VectorState, interpolate, pnorm_field
from ..functional import nodal_measure
from ..geometry import ball_cell_fractions_local, ball_volume
from ..plap import p_harmonic_replacement, replacement_gap_terms
from .freeboundary import FreeBoundary, NoFreeBoundary, extract_free_boundary, select_points, smoothed_normals
from .reports import ScanReport


def _fb(state, fb):
    fb = extract_free_boundary(state) if fb is None else fb
    fb.require()
    return fb


def _centers(fb: FreeBoundary, points, policy):
    if points is not None:
        return np.atleast_2d(np.asarray(points, dtype=float))
    return fb.points[select_points(fb, policy)]


def lipschitz_sup(state: VectorState) -> float:
    """Largest corner gradient norm over channels and cells."""
    tot = 0.0
    for u in state.values:
        G = stencil.corner_gradients(u, state.grid.h)
        tot = tot + np.sum(G * G, axis=1)
    return float(np.sqrt(np.max(tot)))


def nondegeneracy_scan(state: VectorState, radii: Sequence[float], points=None, policy: str = "all",
                       fb: Optional[FreeBoundary] = None) -> ScanReport:
    """sup over the closed ball B_r(x0) of |u|_2 divided by r, at FB points."""
    grid = state.grid
    if any(r < 3 * grid.h - 1e-12 for r in radii):
        raise ValueError("radii must be at least 3h")
    fb = _fb(state, fb)
    centers = _centers(fb, points, policy)
    norm = state.norm().ravel()
    tree = cKDTree(grid.node_points())
    rep = ScanReport("nondegeneracy")
    skipped = 0
    for x0 in centers:
        for r in radii:
            if not grid.ball_inside(x0, r):
                skipped += 1
                continue
            idx = tree.query_ball_point(x0, r * (1 + 1e-12))
            ratio = float(norm[idx].max()) / r
            rep.records.append({"center": x0.tolist(), "r": r, "nodes": len(idx), "ratio": ratio})
    ratios = np.array([rec["ratio"] for rec in rep.records])
    rep.aggregates = {"skipped": skipped, "lipschitz": lipschitz_sup(state)}
    if len(ratios):
        rep.aggregates.update(c0=float(ratios.min()), C0=float(ratios.max()), median=float(np.median(ratios)))
        per_r = {}
        for rec in rep.records:
            per_r.setdefault(rec["r"], []).append(rec["ratio"])
        med = [float(np.median(v)) for _, v in sorted(per_r.items())]
        rep.aggregates["median_by_radius"] = med
        rep.aggregates["radius_spread"] = max(med) / min(med) if min(med) > 0 else float("inf")
        rep.passed = bool(ratios.min() > 0)
        if not rep.passed:
            rep.fail("c0 is not positive")
    return rep


def density_scan(state: VectorState, radii: Sequence[float], points=None, policy: str = "all",
                 margin: float = 0.05, fb: Optional[FreeBoundary] = None) -> ScanReport:
    """Occupied volume fraction of B_r(x0) at FB points."""
    grid = state.grid
    fb = _fb(state, fb)
    centers = _centers(fb, points, policy)
    occ = stencil.occupied_cells(state.mask)
    vol = grid.h ** grid.ndim
    rep = ScanReport("density")
    skipped = 0
    for x0 in centers:
        for r in radii:
            if not grid.ball_inside(x0, r):
                skipped += 1
                continue
            box, frac = ball_cell_fractions_local(grid, x0, r)
            f = float(np.sum(frac * occ[box])) * vol / ball_volume(grid.ndim, r)
            rep.records.append({"center": x0.tolist(), "r": r, "fraction": f})
    fr = np.array([rec["fraction"] for rec in rep.records])
    rep.aggregates = {"skipped": skipped, "margin": margin}
    if len(fr):
        rep.aggregates.update(min=float(fr.min()), max=float(fr.max()), median=float(np.median(fr)))
        rep.passed = bool(fr.min() >= margin and fr.max() <= 1 - margin)
        if not rep.passed:
            rep.fail(f"density band [{fr.min():.4f}, {fr.max():.4f}] leaves [{margin}, {1 - margin}]")
    return rep


def _plateau_weights(points, center, r, width):
    d = np.linalg.norm(points - center, axis=1)
    return np.clip((r + width - d) / width, 0.0, 1.0)


def measure_scan(state: VectorState, problem: Problem, radii: Sequence[float], centers=None,
                 policy: str = "all", width: Optional[float] = None, band_ratio: float = 10.0,
                 fb: Optional[FreeBoundary] = None) -> ScanReport:
    """lambda^i(B_r), Lambda(B_r), an H^{n-1} estimate and q^i = lambda^i / H^{n-1}.

    The ball indicator is smoothed by a linear ramp of ``width`` (default
    2h).  Two H^{n-1} estimates are reported: the raw face count times
    h^{n-1}, and the count weighted by |nu . e_face| with nu from the
    smoothed occupancy, which removes the staircase overcount.
    """
    grid = state.grid
    fb = _fb(state, fb)
    w = 2 * grid.h if width is None else width
    centers = _centers(fb, centers, policy)
    n = grid.ndim
    lam_nodal = [nodal_measure(u, grid.h, problem.p).ravel() for u in state.values]
    nodes = grid.node_points()
    tree = cKDTree(nodes)
    nu = smoothed_normals(state, fb)
    corr = np.abs(nu[np.arange(fb.count), fb.axes])
    area = fb.area_weight
    rep = ScanReport("measure")
    skipped = 0
    for x0 in centers:
        for r in radii:
            if not grid.ball_inside(x0, r + w + grid.h):
                skipped += 1
                continue
            idx = np.array(tree.query_ball_point(x0, r + w), dtype=int)
            z = _plateau_weights(nodes[idx], x0, r, w)
            lam = [float(np.dot(z, ln[idx])) for ln in lam_nodal]
            zf = _plateau_weights(fb.points, x0, r, w)
            H_raw = float(np.sum(np.linalg.norm(fb.points - x0, axis=1) < r)) * area
            H = float(np.sum(zf * corr)) * area
            Lam = float(sum(lam))
            q = [l / H if H > 0 else float("nan") for l in lam]
            rep.records.append({"center": x0.tolist(), "r": r, "lambda": lam, "Lambda": Lam,
                                "Lambda_scaled": Lam / r ** (n - 1), "H": H, "H_raw": H_raw, "q": q,
                                "q_sum": float(np.nansum(q)), "Q": problem.Q_at(x0)})
    rep.aggregates = {"skipped": skipped, "width": w}
    if rep.records:
        sc = np.array([rec["Lambda_scaled"] for rec in rep.records])
        qs = np.array([rec["q_sum"] for rec in rep.records])
        rep.aggregates.update(Lambda_scaled_min=float(sc.min()), Lambda_scaled_max=float(sc.max()),
                              band=float(sc.max() / sc.min()) if sc.min() > 0 else float("inf"),
                              q_min=float(qs.min()), q_max=float(qs.max()))
        rep.passed = bool(sc.min() > 0 and sc.max() / sc.min() <= band_ratio and qs.min() > 0)
        if not rep.passed:
            rep.fail(f"Lambda(B_r)/r^(n-1) band {sc.min():.4g}..{sc.max():.4g} exceeds ratio {band_ratio}")
    return rep


def viscosity_gradient_check(state: VectorState, problem: Problem, points=None, policy: str = "all",
                             tol: float = 0.05, fb: Optional[FreeBoundary] = None) -> ScanReport:
    """One-sided derivative of |u|_p into the positivity set at FB points.

    slope = (|u|_p(x0 - 4h nu) - |u|_p(x0 - 2h nu)) / (2h), compared with
    Q(x0)/(p-1)^(1/p).  Differencing two interior probes cancels the offset
    between the face midpoint x0 and the true interface.
    """
    grid = state.grid
    p = problem.p
    fb = _fb(state, fb)
    sel = select_points(fb, policy) if points is None else None
    nu_all = smoothed_normals(state, fb)
    if points is None:
        pts, nus = fb.points[sel], nu_all[sel]
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        nus = nu_all[fb.tree.query(pts)[1]]
    rep = ScanReport("viscosity")
    for x0, nu in zip(pts, nus):
        probes = [x0 - t * grid.h * nu for t in (2, 4)]
        if not all(grid.contains(y) for y in probes):
            continue
        vals = pnorm_field(interpolate(state, np.array(probes)).T, p)
        slope = (vals[1] - vals[0]) / (2 * grid.h)
        target = problem.Q_at(x0) / (p - 1) ** (1.0 / p)
        rep.records.append({"center": x0.tolist(), "nu": nu.tolist(), "u2h": vals[0], "u4h": vals[1],
                            "slope": slope, "target": target, "ratio": slope / target})
    if rep.records:
        ratios = np.array([r["ratio"] for r in rep.records])
        med = float(np.median(ratios))
        rep.aggregates = {"median_ratio": med, "min_ratio": float(ratios.min()), "max_ratio": float(ratios.max()),
                          "points": len(ratios), "tol": tol}
        rep.passed = bool(abs(med - 1) <= tol)
        if not rep.passed:
            rep.fail(f"median ratio {med:.4f} outside 1 +/- {tol}")
    return rep


def subharmonic_check(state: VectorState, p: float, tol_rel: float = 1e-6) -> ScanReport:
    """lambda^i(zeta) for every interior nodal hat zeta; all must be >= -tol."""
    grid = state.grid
    interior = ~grid.boundary_mask()
    scale = max(state.sup(), 1e-300)
    rep = ScanReport("subharmonic")
    worst = []
    for i, u in enumerate(state.values):
        lam = nodal_measure(u, grid.h, p)[interior]
        k = int(np.argmin(lam)) if lam.size else 0
        worst.append(float(lam[k]) if lam.size else 0.0)
        rep.records.append({"channel": i, "min_lambda": worst[-1], "hats": int(lam.size)})
    m = min(worst) if worst else 0.0
    rep.aggregates = {"min_lambda": m, "threshold": -tol_rel * scale, "scale": scale}
    rep.passed = bool(m >= -tol_rel * scale)
    if not rep.passed:
        rep.fail(f"lambda(hat) = {m:.3e} below -{tol_rel}*|u|")
    return rep


def replacement_scan(state: VectorState, problem: Problem, balls: int = 50, radii_h=(4, 6, 8, 12, 16),
                     seed: int = 0, C_max: float = 100.0, fb: Optional[FreeBoundary] = None) -> ScanReport:
    """Harmonic-replacement gap against the zero-set volume in balls meeting {u = 0}.

    p >= 2:      int_B |grad(u-v)|^p <= C Q_max^p |{u=0} cap B|
    1 < p <= 2:  int_B |grad(u-v)|^p <= C Q_max^(p^2/2) |{u=0} cap B|^(p/2) (int_B |grad u|^p)^(1-p/2)
    The smallest admissible C over all sampled balls and channels is reported.
    """
    grid = state.grid
    p = problem.p
    fb = _fb(state, fb)
    rng = np.random.default_rng(seed)
    Qm = problem.Q_max
    rep = ScanReport("replacement")
    tries = 0
    while len(rep.records) < balls and tries < 20 * balls:
        tries += 1
        k = int(rng.integers(fb.count))
        r = float(rng.choice(radii_h)) * grid.h
        # jitter the centre so balls are not all aligned with faces
        x0 = fb.points[k] + rng.uniform(-0.5, 0.5, grid.ndim) * r
        ball = BallQuery(tuple(x0), r, grid)
        if not ball.inside():
            continue
        for i in range(state.m):
            v, gap = p_harmonic_replacement(state, ball, i, p)
            diff, zero, du = replacement_gap_terms(state, ball, i, p, v)
            if zero <= 0:
                continue
            if p >= 2:
                rhs = Qm ** p * zero
                branch = "p>=2"
            else:
                rhs = Qm ** (p * p / 2) * zero ** (p / 2) * du ** (1 - p / 2)
                branch = "p<=2"
            C = diff / rhs if rhs > 0 else (0.0 if diff == 0 else float("inf"))
            rep.records.append({"center": x0.tolist(), "r": r, "channel": i, "gap": gap, "lhs": diff,
                                "zero_volume": zero, "dirichlet": du, "rhs_unit": rhs, "C": C, "branch": branch})
    Cs = np.array([rec["C"] for rec in rep.records])
    rep.aggregates = {"balls": len(rep.records), "C_max_allowed": C_max}
    if len(Cs):
        gaps = np.array([rec["gap"] for rec in rep.records])
        rep.aggregates.update(C=float(Cs.max()), C_median=float(np.median(Cs)), min_gap=float(gaps.min()))
        rep.passed = bool(Cs.max() <= C_max)
        if not rep.passed:
            rep.fail(f"smallest admissible C = {Cs.max():.3g} exceeds {C_max}")
    return rep
