"""Run configuration: INI sections, arithmetic expressions, problem assembly.

Example::

    [problem]
    dim = 1
    lo = 0
    hi = 2
    h = 1/256
    m = 1
    p = 2
    Q = 1
    g1 = max(0, 1 - x1)

Expressions use x1..xn, numbers, + - * / ^, and min, max, abs, exp, log.
A key such as ``g1.x2_hi`` overrides ``g1`` on the face x2 = hi; overrides
are applied in axis order, lo before hi, so later faces win on corners.
"""
from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .core import ConstraintViolation, Grid, Problem
from .minimizer import SolveSchedule


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ expressions

_FUNCS = {
    "min": lambda *a: _reduce(np.minimum, a),
    "max": lambda *a: _reduce(np.maximum, a),
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
}
_CONSTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


def _reduce(f, args):
    if not args:
        raise ConfigError("min/max need at least one argument")
    out = args[0]
    for a in args[1:]:
        out = f(out, a)
    return out


def compile_expr(text: str, ndim: int) -> Callable:
    """Compile an expression of x1..xn into a vectorised callable."""
    src = str(text).strip().replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    names = {f"x{k + 1}": k for k in range(ndim)}

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"operator not allowed in {text!r}")
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ConfigError(f"operator not allowed in {text!r}")
            check(node.operand)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"only numeric constants allowed in {text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in names and node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"function not allowed in {text!r}")
            for a in node.args:
                check(a)
        else:
            raise ConfigError(f"syntax not allowed in {text!r}: {type(node).__name__}")

    check(tree)

    def ev(node, xs):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, xs), ev(node.right, xs))
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand, xs)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return xs[names[node.id]] if node.id in names else _CONSTS[node.id]
        return _FUNCS[node.func.id](*[ev(a, xs) for a in node.args])

    body = tree.body

    def f(*xs):
        if len(xs) != ndim:
            raise ConfigError(f"expression expects {ndim} coordinates")
        with np.errstate(all="ignore"):
            val = ev(body, [np.asarray(x, dtype=float) for x in xs])
        shape = np.broadcast(*[np.asarray(x) for x in xs]).shape if xs else ()
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    f.source = str(text).strip()
    return f


def eval_number(text: str) -> float:
    return float(compile_expr(text, 0)())


# ------------------------------------------------------------ schema

PROBLEM_KEYS = {"dim", "lo", "hi", "h", "m", "p", "q", "q_smooth"}
SCHEDULE_DEFAULTS = {
    "delta_schedule": "default",
    "sweep_count": "50",
    "kappa": "0.5",
    "c_trunc": "auto",
    "tol_energy": "1e-12",
    "seed": "0",
    "probes": "8",
    "phase1_iters": "300",
    "phase1_max_nodes": "5000",
    "solver_tol": "1e-8",
    "patch": "3",
    "exhaustive_nodes": "4096",
    "multistart_nodes": "64",
}
ANALYSIS_DEFAULTS = {
    "scans": "subharmonic, nondegeneracy, density, measure, viscosity, nta, domain_variation",
    "radii": "4, 8, 16",
    "measure_radii": "4, 8, 16, 32",
    "centers": "stride:8",
    "blowup_radii": "64, 32, 16",
    "blowup_points": "10",
    "nta_scales": "4, 8, 16",
    "harnack_pairs": "20",
    "harnack_c": "4",
    "strict": "false",
}
OUTPUT_DEFAULTS = {"dir": "out", "formats": "json, csv, fbfield"}


@dataclass
class RunConfig:
    problem: dict
    schedule: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Every key with its effective value, as strings."""
        return {"problem": dict(self.problem), "schedule": dict(self.schedule),
                "analysis": dict(self.analysis), "output": dict(self.output)}

    def to_ini(self) -> str:
        lines = []
        for sec, body in self.resolved().items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in body.items()]
            lines.append("")
        return "\n".join(lines)

    def ints(self, section: str, key: str) -> list:
        return [int(s) for s in _split(getattr(self, section)[key])]

    def floats(self, section: str, key: str) -> list:
        return [eval_number(s) for s in _split(getattr(self, section)[key])]


def _split(text: str) -> list:
    return [s.strip() for s in str(text).split(",") if s.strip()]


def load_config(source: Union[str, Path]) -> RunConfig:
    """Parse a config file (path) or config text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    text = Path(source).read_text() if isinstance(source, Path) or (
        "\n" not in str(source) and Path(str(source)).exists()) else str(source)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - {"problem", "schedule", "analysis", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    if not cp.has_section("problem"):
        raise ConfigError("missing [problem] section")
    problem = {k: v for k, v in cp["problem"].items()}
    for k in problem:
        base = k.split(".")[0]
        if base.lower() not in PROBLEM_KEYS and not (base.startswith("g") and base[1:].isdigit()):
            raise ConfigError(f"unknown key problem.{k}")
    for req in ("dim", "lo", "hi", "h", "p", "Q"):
        if req not in problem:
            raise ConfigError(f"missing key problem.{req}")
    problem.setdefault("m", "1")
    problem.setdefault("q_smooth", "true")

    def section(name, defaults):
        body = dict(defaults)
        if cp.has_section(name):
            for k, v in cp[name].items():
                if k not in defaults:
                    raise ConfigError(f"unknown key {name}.{k}")
                body[k] = v
        return body

    return RunConfig(problem, section("schedule", SCHEDULE_DEFAULTS), section("analysis", ANALYSIS_DEFAULTS),
                     section("output", OUTPUT_DEFAULTS))


def _num(cfg: dict, key: str) -> float:
    try:
        return eval_number(cfg[key])
    except ConfigError as exc:
        raise ConfigError(f"problem.{key}: {exc}") from None


def _axis_list(cfg, key, dim):
    vals = [eval_number(s) for s in _split(cfg[key])]
    if len(vals) == 1:
        vals = vals * dim
    if len(vals) != dim:
        raise ConfigError(f"problem.{key}: expected {dim} values")
    return vals


def build_problem(cfg: Union[RunConfig, str, Path]) -> Problem:
    """Materialise Q and g on the grid; deterministic in the config text."""
    if not isinstance(cfg, RunConfig):
        cfg = load_config(cfg)
    pc = cfg.problem
    dim = int(_num(pc, "dim"))
    if dim not in (1, 2, 3):
        raise ConfigError("problem.dim: dim must be 1, 2 or 3")
    m = int(_num(pc, "m"))
    if m < 1:
        raise ConfigError("problem.m: m must be at least 1")
    p = _num(pc, "p")
    if not p > 1:
        raise ConfigError(f"problem.p: p must exceed 1 (got {p})")
    h = _num(pc, "h")
    if not h > 0:
        raise ConfigError("problem.h: h must be positive")
    lo = _axis_list(pc, "lo", dim)
    hi = _axis_list(pc, "hi", dim)
    try:
        grid = Grid.from_box(lo, hi, h)
    except ValueError as exc:
        raise ConfigError(f"problem.h: {exc}") from None
    Qf = compile_expr(pc["Q"], dim)
    Qn = Qf(*grid.coords())
    Qc = Qf(*grid.cell_coords())
    qmin = float(min(np.nanmin(Qn), np.nanmin(Qc)))
    if not np.all(np.isfinite(Qn)) or not np.all(np.isfinite(Qc)):
        raise ConfigError("problem.Q: Q is not finite everywhere")
    if not qmin > 0:
        raise ConfigError(f"problem.Q: Q_min must be positive, got Q_min={qmin}")
    bnd = grid.boundary_mask()
    g = np.zeros((m,) + grid.shape)
    coords = grid.coords()
    for i in range(m):
        key = f"g{i + 1}"
        base = compile_expr(pc.get(key, "0"), dim)(*coords)
        for d in range(dim):
            for side in ("lo", "hi"):
                okey = f"{key}.x{d + 1}_{side}"
                if okey in pc:
                    face = np.zeros(grid.shape, dtype=bool)
                    idx = [slice(None)] * dim
                    idx[d] = 0 if side == "lo" else -1
                    face[tuple(idx)] = True
                    base = np.where(face, compile_expr(pc[okey], dim)(*coords), base)
        vals = base[bnd]
        if not np.all(np.isfinite(vals)):
            raise ConfigError(f"problem.{key}: boundary data is not finite")
        if np.any(vals < 0):
            raise ConfigError(f"problem.{key}: boundary data must be nonnegative (min {vals.min()})")
        g[i][bnd] = vals
    for k in pc:
        if k.startswith("g") and k.split(".")[0][1:].isdigit() and int(k.split(".")[0][1:]) > m:
            raise ConfigError(f"problem.{k}: channel index exceeds m={m}")
    q_smooth = str(pc.get("q_smooth", "true")).strip().lower() in ("1", "true", "yes", "on")
    try:
        return Problem(grid, p, m, Qn, Qc, g, Q_func=Qf, q_smooth=q_smooth, config=cfg.resolved())
    except ConstraintViolation as exc:
        raise ConfigError(str(exc)) from None


def build_schedule(cfg: RunConfig, seed=None) -> SolveSchedule:
    sc = cfg.schedule
    ds = sc["delta_schedule"].strip()
    kw = dict(
        delta_schedule=None if ds in ("", "default") else [eval_number(s) for s in _split(ds)],
        sweep_count=int(sc["sweep_count"]),
        kappa=eval_number(sc["kappa"]),
        c_trunc=None if sc["c_trunc"].strip() == "auto" else eval_number(sc["c_trunc"]),
        tol_energy=eval_number(sc["tol_energy"]),
        seed=int(sc["seed"]) if seed is None else int(seed),
        probes=int(sc["probes"]),
        phase1_iters=int(sc["phase1_iters"]),
        phase1_max_nodes=int(sc["phase1_max_nodes"]),
        solver_tol=eval_number(sc["solver_tol"]),
        patch=int(sc["patch"]),
        exhaustive_nodes=int(sc["exhaustive_nodes"]),
        multistart_nodes=int(sc["multistart_nodes"]),
    )
    try:
        return SolveSchedule(**kw)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None
