"""Command-line front end: solve, oracle, verify, blowup, sweep, report.

Every artifact carries the resolved config, so rerunning with
``config.resolved.ini`` reproduces it.  Exit status: 0 when every asserted
invariant passed, 1 on invariant failures, 2 on usage, config or missing
artifact errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (NoFreeBoundary, ScanReport, blowup_rescale, bundle, density_scan, dump_json,
                       extract_free_boundary, halfplane_fit, measure_scan, nondegeneracy_scan, nta_diagnostics,
                       regular_points, replacement_scan, subharmonic_check, viscosity_gradient_check)
from .analysis.reports import rows_to_csv, summary_rows
from .config import ConfigError, RunConfig, build_problem, build_schedule, load_config
from .core import GridMismatch, Problem, VectorState
from .fieldio import FieldFormatError, read_field, write_field
from .functional import SupportError, domain_variation_residual
from .minimizer import InstanceTooLarge, brute_force_oracle, minimize

FIELD = "field.fbfield"
SOLVE = "solve.json"
ORACLE = "oracle.json"
VERIFY = "verify.json"
BLOWUP = "blowup.json"
SCANS = ("subharmonic", "nondegeneracy", "density", "measure", "viscosity", "nta", "domain_variation",
         "replacement")


class ArtifactError(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def _header(cfg: RunConfig, problem: Problem, command: str) -> dict:
    return {"tool": "fbplap", "version": __version__, "command": command, "problem_hash": problem.hash(),
            "config": cfg.resolved()}


def _prepare(args) -> tuple:
    cfg = load_config(Path(args.config))
    if args.seed is not None:
        cfg.schedule["seed"] = str(args.seed)
    if args.strict:
        cfg.analysis["strict"] = "true"
    out = Path(args.out or cfg.output["dir"])
    cfg.output["dir"] = str(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.ini").write_text(cfg.to_ini())
    return cfg, build_problem(cfg), out


def _strict(cfg: RunConfig) -> bool:
    return str(cfg.analysis.get("strict", "false")).strip().lower() in ("1", "true", "yes", "on")


def _load_state(out: Path, problem: Problem) -> VectorState:
    path = out / FIELD
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run 'solve' first")
    state = read_field(path)
    g = problem.grid
    if state.grid.shape != g.shape or state.m != problem.m or abs(state.grid.h - g.h) > 1e-12 * g.h \
            or not np.allclose(state.grid.lo, g.lo):
        raise GridMismatch(f"{path} does not match the configured grid")
    return VectorState(g, state.values, copy=False)


def _finish(doc: dict, path: Path, failures: list) -> int:
    doc["failures"] = list(failures)
    doc["passed"] = not failures
    dump_json(doc, path)
    print(json.dumps({"artifact": str(path), "passed": not failures, "failures": failures}))
    return 0 if not failures else 1


# ---------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    cfg, problem, out = _prepare(args)
    res = minimize(problem, build_schedule(cfg))
    write_field(out / FIELD, res.state)
    doc = _header(cfg, problem, "solve")
    doc["result"] = res.to_dict()
    failures = []
    if not res.certificate.get("passed", True):
        failures.append("local-minimality certificate failed")
    if not res.certificate.get("monotone", True):
        failures.append("energy history is not monotone")
    if res.certificate.get("dichotomy_violations"):
        failures.append("component dichotomy violated")
    if not res.converged:
        doc.setdefault("warnings", []).append("sweep budget exhausted before convergence")
        if _strict(cfg):
            failures.append("sweep budget exhausted before convergence")
    return _finish(doc, out / SOLVE, failures)


def cmd_oracle(args) -> int:
    cfg, problem, out = _prepare(args)
    orc = brute_force_oracle(problem)
    doc = _header(cfg, problem, "oracle")
    doc["oracle"] = {"energy": orc.energy.as_dict(), "support": np.argwhere(orc.state.mask).tolist()}
    failures = []
    if (out / FIELD).exists():
        state = _load_state(out, problem)
        from .functional import evaluate_J

        J = evaluate_J(state, problem).total
        J0 = orc.energy.total
        gap = (J - J0) / max(abs(J0), 1e-300)
        diff = int(np.sum(state.mask ^ orc.state.mask))
        doc["comparison"] = {"solve_energy": J, "oracle_energy": J0, "relative_gap": gap, "support_diff": diff}
        if abs(gap) > 1e-6:
            failures.append(f"relative energy gap {gap:.3e} exceeds 1e-6")
        if diff > 1:
            failures.append(f"support patterns differ in {diff} nodes")
    return _finish(doc, out / ORACLE, failures)


def _bump_fields(problem: Problem, centers, R: float) -> list:
    """Smooth compactly supported vector fields for the domain variation."""
    out = []
    for x0 in centers:
        for d in range(problem.dim):
            def psi(*xs, x0=x0, d=d):
                r2 = sum((x - c) ** 2 for x, c in zip(xs, x0)) / (R * R)
                b = np.where(r2 < 1, np.exp(-1.0 / np.maximum(1 - r2, 1e-300)) * np.e, 0.0)
                return [b if k == d else np.zeros_like(b) for k in range(problem.dim)]
            out.append((x0, d, psi))
    return out


def domain_variation_scan(state: VectorState, problem: Problem, centers, R: float) -> ScanReport:
    rep = ScanReport("domain_variation")
    for x0, d, psi in _bump_fields(problem, centers, R):
        if not problem.grid.ball_inside(x0, R + problem.grid.h):
            continue
        try:
            res = domain_variation_residual(state, psi, problem)
        except SupportError:
            continue
        rep.records.append({"center": list(map(float, x0)), "axis": d, "R": R, "residual": res})
    if rep.records:
        vals = np.abs([r["residual"] for r in rep.records])
        rep.aggregates = {"max_abs": float(vals.max()), "median_abs": float(np.median(vals)), "R": R}
    return rep


def run_scans(state: VectorState, problem: Problem, cfg: RunConfig) -> list:
    an = cfg.analysis
    names = [s.strip() for s in an["scans"].split(",") if s.strip()]
    bad = [s for s in names if s not in SCANS]
    if bad:
        raise ConfigError(f"analysis.scans: unknown scan(s) {bad}")
    h = problem.grid.h
    radii = [k * h for k in cfg.floats("analysis", "radii")]
    mradii = [k * h for k in cfg.floats("analysis", "measure_radii")]
    policy = an["centers"].strip()
    seed = int(cfg.schedule["seed"])
    fb = extract_free_boundary(state)
    reports = []
    for name in names:
        if name == "subharmonic":
            reports.append(subharmonic_check(state, problem.p))
            continue
        if fb.empty:
            reports.append(ScanReport(name, records=[{"note": "no free boundary"}],
                                      aggregates={"note": "no free boundary"}))
            continue
        if name == "nondegeneracy":
            rep = nondegeneracy_scan(state, [r for r in radii if r >= 3 * h], policy=policy, fb=fb)
        elif name == "density":
            rep = density_scan(state, radii, policy=policy, fb=fb)
        elif name == "measure":
            rep = measure_scan(state, problem, mradii, policy=policy, fb=fb)
        elif name == "viscosity":
            rep = viscosity_gradient_check(state, problem, policy=policy, fb=fb)
        elif name == "nta":
            rep = nta_diagnostics(state, [k * h for k in cfg.floats("analysis", "nta_scales")],
                                  pairs=int(an["harnack_pairs"]), C_tilde=float(an["harnack_c"]), seed=seed,
                                  policy=policy, fb=fb)
        elif name == "replacement":
            rep = replacement_scan(state, problem, seed=seed, fb=fb)
        else:
            if not problem.q_smooth:
                reports.append(ScanReport(name, aggregates={"note": "Q is not smooth; skipped"}))
                continue
            from .analysis.freeboundary import select_points

            centers = fb.points[select_points(fb, policy)]
            rep = domain_variation_scan(state, problem, centers, max(radii))
        reports.append(rep)
    return reports


def cmd_verify(args) -> int:
    cfg, problem, out = _prepare(args)
    state = _load_state(out, problem)
    reports = run_scans(state, problem, cfg)
    doc = bundle(reports, problem.hash(), {"command": "verify", "config": cfg.resolved()})
    failures = list(doc["failures"])
    fb_exists = not extract_free_boundary(state).empty
    empty = [r.name for r in reports if fb_exists and not r.records and r.name != "subharmonic"]
    if empty:
        doc["warnings"] = [f"{n}: no admissible balls" for n in empty]
        if _strict(cfg):
            failures += doc["warnings"]
    return _finish(doc, out / VERIFY, failures)


def cmd_blowup(args) -> int:
    cfg, problem, out = _prepare(args)
    state = _load_state(out, problem)
    h = problem.grid.h
    radii = sorted((k * h for k in cfg.floats("analysis", "blowup_radii")), reverse=True)
    fb = extract_free_boundary(state)
    doc = _header(cfg, problem, "blowup")
    failures = []
    if fb.empty:
        doc["points"] = []
        doc["note"] = "no free boundary"
        return _finish(doc, out / BLOWUP, failures)
    pts = regular_points(state, problem.p, problem.Q_at, 32 * h, count=int(cfg.analysis["blowup_points"]),
                         fb=fb, reach=radii[0])
    traces = []
    bdir = out / "blowups"
    bdir.mkdir(exist_ok=True)
    for k, x0 in enumerate(pts):
        rows = []
        for r in radii:
            blow = blowup_rescale(state, x0, r, fb=fb)
            fit = halfplane_fit(blow, problem.p, problem.Q_at(x0))
            write_field(bdir / f"point{k}_r{int(round(r / h))}h.fbfield", blow.state)
            rows.append({"r": r, "r_over_h": r / h, **fit.as_dict()})
        traces.append({"x0": list(map(float, x0)), "fits": rows})
        fl = [row["flatness"] for row in rows]
        if fl[-1] > max(1.1 * fl[0], 1e-9):
            failures.append(f"point {k}: flatness grows from {fl[0]:.3g} to {fl[-1]:.3g}")
        if rows[-1]["slope_residual"] > 0.05:
            failures.append(f"point {k}: slope residual {rows[-1]['slope_residual']:.3g} above 5%")
    if not pts:
        doc["warnings"] = ["no regular points found"]
        if _strict(cfg):
            failures.append("no regular points found")
    doc["points"] = traces
    return _finish(doc, out / BLOWUP, failures)


def _sweep_one(job) -> dict:
    text, sub, seed, strict = job
    ns = argparse.Namespace(config=str(sub / "config.in.ini"), out=str(sub), seed=seed, strict=strict)
    (sub / "config.in.ini").write_text(text)
    rc_solve = cmd_solve(ns)
    rc_verify = cmd_verify(ns)
    return {"dir": str(sub), "solve": rc_solve, "verify": rc_verify}


def cmd_sweep(args) -> int:
    cfg, problem, out = _prepare(args)
    if not args.param or not args.values:
        raise ConfigError("sweep needs --param and --values")
    sec, _, key = args.param.rpartition(".")
    sec = sec or "problem"
    if sec not in ("problem", "schedule"):
        raise ConfigError(f"--param: cannot sweep section {sec!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    jobs = []
    for k, v in enumerate(values):
        c = RunConfig(dict(cfg.problem), dict(cfg.schedule), dict(cfg.analysis), dict(cfg.output))
        getattr(c, sec)[key] = v
        sub = out / f"run{k:02d}"
        sub.mkdir(exist_ok=True)
        c.output["dir"] = str(sub)
        build_problem(c)  # validate before fanning out
        jobs.append((c.to_ini(), sub, args.seed, args.strict))
    if args.threads and args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            runs = list(ex.map(_sweep_one, jobs))
    else:
        runs = [_sweep_one(j) for j in jobs]
    for r, v in zip(runs, values):
        r["value"] = v
    docs = [(str(Path(r["dir"]) / VERIFY), json.loads((Path(r["dir"]) / VERIFY).read_text())) for r in runs]
    (out / "summary.csv").write_text(rows_to_csv(summary_rows(docs)))
    doc = _header(cfg, problem, "sweep")
    doc.update(param=f"{sec}.{key}", runs=runs)
    failures = [f"{r['dir']}: exit {max(r['solve'], r['verify'])}" for r in runs if max(r["solve"], r["verify"])]
    return _finish(doc, out / "sweep.json", failures)


def cmd_report(args) -> int:
    out = Path(args.out or ".")
    paths = [Path(p) for p in args.inputs] if args.inputs else sorted(out.rglob("*.json"))
    docs = []
    for p in paths:
        if not p.exists():
            raise ArtifactError(f"missing report {p}")
        d = json.loads(p.read_text())
        if isinstance(d, dict) and d.get("tool") == "fbplap":
            docs.append((str(p), d))
    if not docs:
        raise ArtifactError("no reports found")
    rows = summary_rows(docs)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(rows_to_csv(rows))
    failures = [f"{src}: {f}" for src, d in docs for f in d.get("failures", [])]
    print(json.dumps({"artifact": str(out / "summary.csv"), "rows": len(rows), "passed": not failures,
                      "failures": failures}))
    return 0 if not failures else 1


COMMANDS = {"solve": cmd_solve, "oracle": cmd_oracle, "verify": cmd_verify, "blowup": cmd_blowup,
            "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbplap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fbplap {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("inputs", nargs="*", help="report files (report command only)")
    ap.add_argument("--config", help="run configuration (INI)")
    ap.add_argument("--out", help="artifact directory (default: output.dir of the config)")
    ap.add_argument("--threads", type=int, default=1, help="parallel runs for sweep")
    ap.add_argument("--seed", type=int, default=None, help="overrides schedule.seed")
    ap.add_argument("--strict", action="store_true", help="warnings become failures")
    ap.add_argument("--param", help="sweep parameter, e.g. p or schedule.kappa")
    ap.add_argument("--values", help="comma-separated sweep values")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    if args.command != "report" and not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ArtifactError, GridMismatch, FieldFormatError, InstanceTooLarge, NoFreeBoundary,
            FileNotFoundError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
