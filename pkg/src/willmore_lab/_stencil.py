"""Finite-difference stencils: grid fields and refined off-grid evaluation.

Two derivative paths coexist.  Sampled-mode lifts differentiate grid
fields with 4th-order stencils at the grid spacing (periodic wrap or
one-sided at boundaries).  Analytic-mode pipelines differentiate
pointwise-evaluable fields on a refined local stencil whose spacing is
independent of the grid, so outer derivatives never dominate residuals.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

META_H = 0.005  # refined stencil spacing for analytic-mode outer derivatives


@lru_cache(maxsize=None)
def fd_weights(offsets, deriv):
    """Finite-difference weights for integer offsets approximating d^deriv.

    Solves the Taylor-moment system; the approximation order is
    len(offsets) - deriv.
    """
    offs = np.array(offsets, dtype=float)
    m = len(offs)
    A = np.vander(offs, m, increasing=True).T
    b = np.zeros(m)
    b[deriv] = math.factorial(deriv)
    return tuple(np.linalg.solve(A, b))


def central_offsets(deriv, order=4):
    """Smallest symmetric stencil for d^deriv at the given order."""
    npts = deriv + order
    if npts % 2 == 0:
        npts += 1
    half = npts // 2
    return tuple(range(-half, half + 1))


def grid_deriv(field, axis, h, deriv=1, periodic=True, order=4):
    """Differentiate a grid field along axis with 4th-order stencils.

    Periodic axes wrap; non-periodic axes switch to one-sided stencils of
    the same point count near the boundary.
    """
    field = np.asarray(field)
    n = field.shape[axis]
    offs = central_offsets(deriv, order)
    w = fd_weights(offs, deriv)
    if periodic:
        out = np.zeros(field.shape, dtype=field.dtype)
        for o, c in zip(offs, w):
            out = out + c * np.roll(field, -o, axis=axis)
        return out / h**deriv
    half = max(-offs[0], offs[-1])
    npts = len(offs)
    if n < npts:
        raise ValueError("grid too small for the stencil")
    moved = np.moveaxis(field, axis, 0)
    res = np.zeros(moved.shape, dtype=field.dtype)
    interior = np.arange(half, n - half)
    for o, c in zip(offs, w):
        res[interior] += c * moved[interior + o]
    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - half, 0), n - npts)
        offs_b = tuple(range(start - i, start - i + npts))
        wb = fd_weights(offs_b, deriv)
        acc = np.zeros(moved.shape[1:], dtype=field.dtype)
        for o, c in zip(offs_b, wb):
            acc = acc + c * moved[i + o]
        res[i] = acc
    return np.moveaxis(res, 0, axis) / h**deriv


def meta_deriv(f, U, V, du, dv, h=META_H):
    """Derivative d^du_u d^dv_v of a pointwise-evaluable field at points U, V.

    f(U, V) must be vectorized over leading point axes.  Mixed derivatives
    use the tensor product of one-dimensional 4th-order stencils; all
    stencil evaluations happen in one batched call.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    offs_u = central_offsets(du) if du else (0,)
    offs_v = central_offsets(dv) if dv else (0,)
    wu = fd_weights(offs_u, du) if du else (1.0,)
    wv = fd_weights(offs_v, dv) if dv else (1.0,)
    ou = np.array(offs_u, dtype=float) * h
    ov = np.array(offs_v, dtype=float) * h
    pad = (None,) * U.ndim
    UU = U[(None, None) + (Ellipsis,)] + ou[(slice(None), None) + pad]
    VV = V[(None, None) + (Ellipsis,)] + ov[(None, slice(None)) + pad]
    UU, VV = np.broadcast_arrays(UU, VV)
    vals = f(UU, VV)
    acc = None
    for i, cu in enumerate(wu):
        for k, cv in enumerate(wv):
            term = (cu * cv) * vals[i, k]
            acc = term if acc is None else acc + term
    return acc / (h**du * h**dv)


class GridInterpolator:
    """Quintic Lagrange interpolation of grid fields, periodic-aware.

    Interpolates arrays shaped (nx, ny, ...) at arbitrary points; used to
    evaluate derived-surface fields between grid nodes.
    """

    def __init__(self, grid, field, k=6):
        self.grid = grid
        self.field = np.asarray(field)
        self.k = k

    def _axis_stencil(self, t, t0, h, n, periodic):
        k = self.k
        idx = np.floor((t - t0) / h).astype(int)
        base = idx - (k // 2 - 1)
        if not periodic:
            base = np.clip(base, 0, n - k)
        offs = np.arange(k)
        cols = base[..., None] + offs
        xs = t0 + cols * h
        tt = t[..., None]
        w = np.ones(cols.shape)
        for i in range(k):
            num = np.ones(cols.shape[:-1])
            den = 1.0
            for j in range(k):
                if j == i:
                    continue
                num = num * (tt[..., 0] - xs[..., j])
                den = den * (xs[..., i] - xs[..., j])
            w[..., i] = num / den
        if periodic:
            cols = np.mod(cols, n)
        return cols, w

    def __call__(self, U, V):
        g = self.grid
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        ci, wi = self._axis_stencil(U, g.x0, g.hx, g.nx, g.periodic_x)
        cj, wj = self._axis_stencil(V, g.y0, g.hy, g.ny, g.periodic_y)
        vals = self.field[ci[..., :, None], cj[..., None, :]]
        w2 = wi[..., :, None] * wj[..., None, :]
        w2 = w2.reshape(w2.shape + (1,) * (vals.ndim - w2.ndim))
        return np.sum(vals * w2, axis=(U.ndim, U.ndim + 1))
