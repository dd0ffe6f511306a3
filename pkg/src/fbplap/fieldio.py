"""FBFIELD v1 text dumps.

Header line::

    FBFIELD v1 n=<dim> dims=<d1,...> h=<h> m=<m> [lo=<l1,...>]

followed by one line per node in C order with m values.  Values are
written with 17 significant digits, so a round trip is bit exact.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import Grid, VectorState


class FieldFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return "%.17g" % x


def dumps(state: VectorState) -> str:
    g = state.grid
    head = (f"FBFIELD v1 n={g.ndim} dims={','.join(map(str, g.shape))} h={_fmt(g.h)} m={state.m} "
            f"lo={','.join(_fmt(a) for a in g.lo)}")
    flat = state.values.reshape(state.m, -1).T
    body = "\n".join(" ".join(_fmt(v) for v in row) for row in flat)
    return head + "\n" + body + "\n"


def write_field(path, state: VectorState) -> None:
    Path(path).write_text(dumps(state))


def loads(text: str) -> VectorState:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("FBFIELD v1"):
        raise FieldFormatError("missing 'FBFIELD v1' header")
    kv = {}
    for tok in lines[0].split()[2:]:
        if "=" not in tok:
            raise FieldFormatError(f"bad header token {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    try:
        n = int(kv["n"])
        dims = tuple(int(s) for s in kv["dims"].split(","))
        h = float(kv["h"])
        m = int(kv["m"])
        lo = tuple(float(s) for s in kv["lo"].split(",")) if "lo" in kv else (0.0,) * n
    except (KeyError, ValueError) as exc:
        raise FieldFormatError(f"bad header: {exc}") from None
    if len(dims) != n or len(lo) != n:
        raise FieldFormatError("header dimension mismatch")
    rows = [ln for ln in lines[1:] if ln.strip()]
    count = int(np.prod(dims))
    if len(rows) != count:
        raise FieldFormatError(f"expected {count} node lines, found {len(rows)}")
    data = np.array([[float(t) for t in ln.split()] for ln in rows])
    if data.shape != (count, m):
        raise FieldFormatError("wrong number of values per line")
    return VectorState(Grid(lo, h, dims), data.T.reshape((m,) + dims))


def read_field(path) -> VectorState:
    return loads(Path(path).read_text())
