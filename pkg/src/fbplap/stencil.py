"""Cellwise discrete gradients shared by the solver and the functionals.

Each grid cell carries 2^n corner gradients.  The gradient at a corner is
built from the n cell edges that meet at that corner, i.e. it is the exact
gradient of the affine interpolant on the corner simplex.  A cell integral
of f(grad u) is the average of f over the corners times h^n.  For p = 2 this
reproduces the standard (2n+1)-point Laplacian, so the discrete problem
satisfies a maximum principle and has no checkerboard null modes.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


@lru_cache(maxsize=None)
def corners(ndim: int) -> tuple:
    return tuple(itertools.product((0, 1), repeat=ndim))


def node_slice(offset, shape) -> tuple:
    """Slice of a node array aligned with the cell array, shifted by ``offset``."""
    return tuple(slice(o, o + s - 1) for o, s in zip(offset, shape))


def _edge_offsets(c, d):
    lo = list(c)
    hi = list(c)
    lo[d] = 0
    hi[d] = 1
    return tuple(lo), tuple(hi)


def corner_gradients(u: np.ndarray, h: float) -> np.ndarray:
    """Corner gradients of a nodal array.

    Returns shape ``(2**n, n, *cell_shape)``.
    """
    n = u.ndim
    shape = u.shape
    cs = corners(n)
    out = np.empty((len(cs), n) + tuple(s - 1 for s in shape))
    for k, c in enumerate(cs):
        for d in range(n):
            lo, hi = _edge_offsets(c, d)
            out[k, d] = (u[node_slice(hi, shape)] - u[node_slice(lo, shape)]) / h
    return out


def adjoint(F: np.ndarray, h: float, shape: tuple) -> np.ndarray:
    """Transpose of :func:`corner_gradients`.

    For corner vector fields ``F`` returns the nodal array R with
    ``sum(F * corner_gradients(u)) == sum(R * u)`` for every u.
    """
    n = len(shape)
    out = np.zeros(shape)
    for k, c in enumerate(corners(n)):
        for d in range(n):
            lo, hi = _edge_offsets(c, d)
            out[node_slice(hi, shape)] += F[k, d] / h
            out[node_slice(lo, shape)] -= F[k, d] / h
    return out


def occupied_cells(mask: np.ndarray) -> np.ndarray:
    """A cell is occupied when any of its corner nodes is in ``mask``."""
    shape = mask.shape
    occ = np.zeros(tuple(s - 1 for s in shape), dtype=bool)
    for c in corners(mask.ndim):
        occ |= mask[node_slice(c, shape)]
    return occ


def all_corners(mask: np.ndarray) -> np.ndarray:
    shape = mask.shape
    out = np.ones(tuple(s - 1 for s in shape), dtype=bool)
    for c in corners(mask.ndim):
        out &= mask[node_slice(c, shape)]
    return out


def cells_touching(nodes: np.ndarray) -> np.ndarray:
    return occupied_cells(nodes)


def power_energy_density(u: np.ndarray, h: float, p: float, eps: float = 0.0) -> np.ndarray:
    """Cell average of (|grad u|^2 + eps^2)^(p/2) over corners."""
    G = corner_gradients(u, h)
    s = np.sum(G * G, axis=1)
    if eps:
        s = s + eps * eps
    if p == 2:
        e = s
    else:
        e = s ** (0.5 * p)
    return e.mean(axis=0)


def flux(G: np.ndarray, p: float, eps: float = 0.0) -> np.ndarray:
    """(|G|^2 + eps^2)^((p-2)/2) G, corner by corner."""
    s = np.sum(G * G, axis=1)
    if eps:
        s = s + eps * eps
    if p == 2:
        return G.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(s > 0, s ** (0.5 * p - 1.0), 0.0)
    return a[:, None] * G


@lru_cache(maxsize=32)
def gradient_matrix(shape: tuple, h: float) -> sp.csc_matrix:
    """Sparse matrix of :func:`corner_gradients` acting on raveled nodes.

    Row order is (corner, axis, cell) in C order, matching
    ``corner_gradients(u, h).ravel()``.
    """
    n = len(shape)
    cell_shape = tuple(s - 1 for s in shape)
    ncell = int(np.prod(cell_shape))
    node_ids = np.arange(int(np.prod(shape))).reshape(shape)
    rows, cols, vals = [], [], []
    r0 = 0
    for c in corners(n):
        for d in range(n):
            lo, hi = _edge_offsets(c, d)
            r = np.arange(r0, r0 + ncell)
            rows += [r, r]
            cols += [node_ids[node_slice(hi, shape)].ravel(), node_ids[node_slice(lo, shape)].ravel()]
            vals += [np.full(ncell, 1.0 / h), np.full(ncell, -1.0 / h)]
            r0 += ncell
    D = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(r0, int(np.prod(shape))),
    )
    return D.tocsc()


@lru_cache(maxsize=8)
def stiffness_matrix(shape: tuple, h: float) -> sp.csr_matrix:
    """D^T D for the gradient matrix D; the p = 2 Hessian up to the weight."""
    D = gradient_matrix(shape, h)
    return (D.T @ D).tocsr()


def hessian_blocks(G: np.ndarray, p: float, eps: float) -> np.ndarray:
    """Per-corner n x n Hessians of (|G|^2+eps^2)^(p/2) (without the factor p).

    Returns shape ``(2**n, n, n, *cell_shape)``.
    """
    n = G.shape[1]
    s = np.sum(G * G, axis=1) + eps * eps
    a = s ** (0.5 * p - 1.0)
    b = (p - 2.0) * s ** (0.5 * p - 2.0)
    K = b[:, None, None] * G[:, :, None] * G[:, None, :]
    for d in range(n):
        K[:, d, d] += a
    return K


def block_matrix(K: np.ndarray, weights: float) -> sp.csr_matrix:
    """Sparse block-diagonal operator in the row order of :func:`gradient_matrix`."""
    nc, n = K.shape[0], K.shape[1]
    ncell = int(np.prod(K.shape[3:]))
    base = np.arange(ncell)
    rows, cols, vals = [], [], []
    for k in range(nc):
        for d in range(n):
            for e in range(n):
                rows.append((k * n + d) * ncell + base)
                cols.append((k * n + e) * ncell + base)
                vals.append(weights * K[k, d, e].ravel())
    size = nc * n * ncell
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
