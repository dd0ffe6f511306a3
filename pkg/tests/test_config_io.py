import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fbplap.config import ConfigError, build_problem, build_schedule, compile_expr, load_config
from fbplap.core import Grid, VectorState
from fbplap.fieldio import FieldFormatError, dumps, loads, read_field, write_field

BASE = """
[problem]
dim = 1
lo = 0
hi = 2
h = 0.5
p = 2
Q = 1
g1 = 1
g1.x1_hi = 0
"""


def test_build_problem_grid_and_data():
    pr = build_problem(load_config(BASE))
    assert pr.grid.shape == (5,)
    assert pr.g[0].tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert pr.Q_min == 1.0


def test_build_problem_deterministic():
    a = build_problem(load_config(BASE))
    b = build_problem(load_config(BASE))
    assert a.hash() == b.hash()


@pytest.mark.parametrize("edit, needle", [
    (("p = 2", "p = 1"), "p must exceed 1"),
    (("Q = 1", "Q = 0"), "Q_min"),
    (("Q = 1", "Q = 1 - x1"), "Q_min"),
    (("g1 = 1", "g1 = -1"), "problem.g1"),
    (("h = 0.5", "h = 0.3"), "problem.h"),
])
def test_build_problem_rejections_name_the_key(edit, needle):
    with pytest.raises(ConfigError, match=needle):
        build_problem(load_config(BASE.replace(*edit)))


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError, match="problem.colour"):
        load_config(BASE + "colour = red\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(BASE + "[extra]\na = 1\n")
    with pytest.raises(ConfigError, match="schedule.speed"):
        load_config(BASE + "[schedule]\nspeed = 3\n")


def test_missing_key():
    with pytest.raises(ConfigError, match="problem.p"):
        load_config(BASE.replace("p = 2\n", ""))


def test_resolved_config_roundtrip():
    cfg = load_config(BASE)
    again = load_config(cfg.to_ini())
    assert again.resolved() == cfg.resolved()
    assert cfg.schedule["kappa"] == "0.5"
    assert build_problem(again).hash() == build_problem(cfg).hash()


def test_schedule_from_config():
    cfg = load_config(BASE + "[schedule]\nkappa = 0.25\ndelta_schedule = 1, 0.5, 0.25\n")
    sc = build_schedule(cfg, seed=7)
    assert sc.kappa == 0.25 and sc.seed == 7 and sc.deltas() == [1.0, 0.5, 0.25]
    with pytest.raises(ConfigError):
        build_schedule(load_config(BASE + "[schedule]\nkappa = 1.5\n"))


def test_expressions():
    f = compile_expr("max(0, 1 - x1)^2 + min(x2, 3) * abs(-2) + exp(0) + log(1) + pi*0", 2)
    x1 = np.array([0.0, 0.5, 2.0])
    x2 = np.array([1.0, 5.0, 0.0])
    assert f(x1, x2).tolist() == pytest.approx([4.0, 7.25, 1.0])
    for bad in ("__import__('os')", "x3", "x1 if x1 else 0", "sin(x1)", "x1 < 2", "'a'"):
        with pytest.raises(ConfigError):
            compile_expr(bad, 2)


def test_face_override_order():
    text = BASE.replace("dim = 1", "dim = 2").replace("lo = 0", "lo = 0, 0").replace("hi = 2", "hi = 2, 2")
    text = text.replace("g1.x1_hi = 0", "g1.x1_hi = 0\ng1.x2_hi = 5")
    pr = build_problem(load_config(text))
    g = pr.g[0]
    assert g[0, 1] == 1.0 and g[-1, 1] == 0.0 and g[2, -1] == 5.0
    assert g[-1, -1] == 5.0  # later face wins on the corner
    assert g[2, 2] == 0.0  # interior untouched


def test_field_roundtrip_bit_exact(tmp_path):
    g = Grid.from_box((0.0, -1.0), (1.0, 1.0), 0.25)
    rng = np.random.default_rng(3)
    vals = rng.uniform(0, 1, size=(2,) + g.shape) ** 3 * np.pi
    s = VectorState(g, vals)
    write_field(tmp_path / "a.fbfield", s)
    t = read_field(tmp_path / "a.fbfield")
    assert t.grid == g
    assert np.array_equal(t.values, s.values)
    head = dumps(s).splitlines()[0]
    assert head.startswith("FBFIELD v1 n=2 dims=5,9 h=0.25 m=2")


@settings(max_examples=25)
@given(arrays(np.float64, (3, 4), elements=st.floats(0, 1e300, allow_nan=False, allow_infinity=False)))
def test_field_roundtrip_property(a):
    g = Grid((0.5, 0.0), 0.1, (3, 4))
    s = VectorState(g, a)
    assert np.array_equal(loads(dumps(s)).values, s.values)


def test_field_header_without_lo():
    s = loads("FBFIELD v1 n=1 dims=3 h=0.5 m=1\n0\n1\n0\n")
    assert s.grid.lo == (0.0,)
    assert s.values[0].tolist() == [0.0, 1.0, 0.0]


@pytest.mark.parametrize("text", [
    "FBFIELD v2 n=1 dims=3 h=0.5 m=1\n0\n1\n0\n",
    "FBFIELD v1 n=1 dims=3 h=0.5 m=1\n0\n1\n",
    "FBFIELD v1 n=1 dims=3 h=0.5 m=2\n0\n1\n0\n",
    "FBFIELD v1 n=2 dims=3 h=0.5 m=1\n0\n1\n0\n",
])
def test_field_format_errors(text):
    with pytest.raises(FieldFormatError):
        loads(text)
