"""Named benchmark instances with closed-form answers."""
from __future__ import annotations

import numpy as np

from .core import Problem, make_problem


def slope(p: float, Q: float = 1.0) -> float:
    """Interface slope Q / (p-1)^(1/p) of the one-dimensional optimum."""
    return Q / (p - 1) ** (1.0 / p)


def fb_location_1d(g, p: float, Q: float = 1.0) -> float:
    """Free-boundary position for data g at x = 0 (scalar or per channel)."""
    g = np.atleast_1d(np.asarray(g, dtype=float))
    return float(((p - 1) * np.sum(g ** p)) ** (1.0 / p) / Q)


def profile_1d(x, g, p: float, Q: float = 1.0) -> np.ndarray:
    """Channels of the one-dimensional minimizer, shape (m, len(x))."""
    g = np.atleast_1d(np.asarray(g, dtype=float))
    s = fb_location_1d(g, p, Q)
    x = np.asarray(x, dtype=float)
    return g[:, None] * np.clip(1 - x / s, 0.0, None)[None]


def scalar_1d(p: float, h: float = 1 / 256, Q: float = 1.0, g0: float = 1.0) -> Problem:
    """Box [0, 2], g(0) = g0, g(2) = 0."""
    return make_problem((0.0,), (2.0,), h, p, Q, lambda x: np.where(x < 1, g0, 0.0))


def vector_1d(p: float, g=(1.0, 0.5, 0.25), h: float = 1 / 256, Q: float = 1.0) -> Problem:
    return make_problem((0.0,), (2.0,), h, p, Q, [lambda x, a=a: np.where(x < 1, a, 0.0) for a in g])


def strip_2d(h: float = 1 / 128, p: float = 2.0) -> Problem:
    """Box [0, 2]^2 with the one-dimensional profile as boundary data."""
    s = fb_location_1d(1.0, p)
    return make_problem((0.0, 0.0), (2.0, 2.0), h, p, 1.0, lambda x1, x2: np.maximum(0.0, 1 - x1 / s))


def varying_q_2d(h: float = 1 / 128, beta: float = 0.25) -> Problem:
    """p = 2, Q = 1 + beta x2, data vanishing at x1 = 1/Q(x2) on the boundary."""
    Q = lambda x1, x2: 1.0 + beta * x2
    return make_problem((0.0, 0.0), (2.0, 2.0), h, 2.0, Q,
                        lambda x1, x2: np.maximum(0.0, 1 - (1.0 + beta * x2) * x1))


def random_oracle_instance(rng: np.random.Generator, max_interior: int = 12) -> Problem:
    """Random one-dimensional instance small enough for exhaustive enumeration."""
    N = int(rng.integers(3, max_interior + 1))
    h = 2.0 / (N + 1)
    p = float(rng.choice([1.5, 2.0, 3.0]))
    m = int(rng.integers(1, 3))
    Q = float(rng.uniform(0.5, 2.0))
    ends = rng.uniform(0.0, 2.0, size=(m, 2))
    gs = [lambda x, a=a, b=b: np.where(x < 1, a, b) for a, b in ends]
    return make_problem((0.0,), (2.0,), h, p, Q, gs)
