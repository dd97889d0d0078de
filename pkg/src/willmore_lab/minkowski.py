"""Exact-signature linear algebra on R^(n+1,1) and its complexification.

Vectors are numpy arrays whose last axis has length n+2; the last
coordinate is time-like.  All operations broadcast over leading axes.
The complex bilinear extension is used throughout: no Hermitian
conjugation enters any pairing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, EmptyIntersection, NotTransverse

TOL_NULL = 1e-10
TOL_ORTHO = 1e-10
TOL_RANK = 1e-8
RANK_GAP = 1e3


def metric_matrix(n):
    """Gram matrix diag(1,...,1,-1) of the standard basis of R^(n+1,1)."""
    g = np.ones(n + 2)
    g[-1] = -1.0
    return np.diag(g)


def metric_signs(n):
    g = np.ones(n + 2)
    g[-1] = -1.0
    return g


def inner(u, v):
    """Signature-(n+1,1) inner product, complex bilinear, broadcasting."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionMismatch(f"dim {u.shape[-1]} vs {v.shape[-1]}")
    s = np.sum(u[..., :-1] * v[..., :-1], axis=-1)
    return s - u[..., -1] * v[..., -1]


def norm2(v):
    """Euclidean coordinate norm squared (positive definite, for tolerances)."""
    v = np.asarray(v)
    return np.sum(np.abs(v) ** 2, axis=-1)


def is_lightlike(v, tol=TOL_NULL):
    return np.abs(inner(v, v)) < tol * np.maximum(norm2(v), 1e-300)


def wedge(v1, v2):
    """Skew endomorphism w -> (w,v1) v2 - (w,v2) v1 of v1 ^ v2.

    Returns the (n+2)x(n+2) matrix in the standard basis; broadcasts over
    leading axes of v1, v2.
    """
    v1 = np.asarray(v1)
    v2 = np.asarray(v2)
    if v1.shape[-1] != v2.shape[-1]:
        raise DimensionMismatch("wedge: mismatched dimensions")
    n = v1.shape[-1] - 2
    g = metric_signs(n)
    gv1 = v1 * g
    gv2 = v2 * g
    return v2[..., :, None] * gv1[..., None, :] - v1[..., :, None] * gv2[..., None, :]


def bracket(A, B):
    """Lie bracket AB - BA."""
    return A @ B - B @ A


def ad(T, A):
    """Adjoint action T A T^(-1)."""
    return T @ A @ np.linalg.inv(T)


def skew_residual(A, n=None):
    """Max |(Av,w) + (v,Aw)| over the standard basis, normalized by |A|."""
    A = np.asarray(A)
    if n is None:
        n = A.shape[-1] - 2
    g = metric_matrix(n)
    r = A.swapaxes(-1, -2) @ g + g @ A
    scale = np.maximum(np.abs(A).max(axis=(-1, -2)), 1e-300)
    return np.abs(r).max(axis=(-1, -2)) / scale


def orthogonality_residual(T, n=None):
    """Max |(Tv,Tw) - (v,w)| over the standard basis."""
    T = np.asarray(T)
    if n is None:
        n = T.shape[-1] - 2
    g = metric_matrix(n)
    r = T.swapaxes(-1, -2) @ g @ T - g
    return np.abs(r).max(axis=(-1, -2))


def random_skew(n, rng, scale=1.0):
    """Random element of o(R^(n+1,1)): g C with C antisymmetric."""
    C = rng.standard_normal((n + 2, n + 2))
    C = C - C.T
    return metric_matrix(n) @ (scale * C)


def random_mobius(n, seed, scale=0.3):
    """Pseudo-random element of O(n+1,1) by exponentiating a bounded skew map.

    Deterministic in the seed; orthogonality residual < 1e-12.
    """
    rng = np.random.default_rng(seed)
    B = random_skew(n, rng, scale=scale)
    return expm(B)


def _unit_rows(B):
    nr = np.linalg.norm(B, axis=-1, keepdims=True)
    return B / np.maximum(nr, 1e-300)


def plane_rank(B, tol=TOL_RANK):
    """Numerical rank of the rowspace of B (rows spanning the plane)."""
    s = np.linalg.svd(_unit_rows(np.asarray(B)), compute_uv=False)
    return int(np.sum(s > tol * s[0]))


def intersect_planes(P, Q, tol_rank=TOL_RANK, gap=RANK_GAP):
    """Intersection line of two 2-planes in C^(n+2).

    P, Q: (2, n+2) arrays of spanning rows.  Returns a unit-coordinate-norm
    vector spanning P cap Q when the intersection is one-dimensional.
    Dimension is decided by the singular-value spectrum of the stacked
    system [P^T | -Q^T]: a null vector (a, b) gives the common point P^T a.

    Raises EmptyIntersection when dim 0 and NotTransverse when dim >= 2.
    """
    P = _unit_rows(np.asarray(P, dtype=complex))
    Q = _unit_rows(np.asarray(Q, dtype=complex))
    if plane_rank(P, tol_rank) != 2 or plane_rank(Q, tol_rank) != 2:
        raise NotTransverse("input basis is rank-deficient")
    M = np.concatenate([P.T, -Q.T], axis=1)  # (n+2, 4)
    u, s, vh = np.linalg.svd(M)
    # Singular values sorted descending; count the near-zero tail.
    small = s < s[0] / gap
    ndim = int(np.sum(small))
    if ndim == 0:
        raise EmptyIntersection(f"planes do not meet (smallest s = {s[-1]:.3e})")
    if ndim >= 2:
        raise NotTransverse(f"intersection dimension >= 2 (s = {s})")
    ab = vh[-1].conj()
    x = P.T @ ab[:2]
    nx = np.linalg.norm(x)
    if nx < tol_rank:
        # The null vector may sit almost entirely on the Q side; use it.
        x = Q.T @ ab[2:]
        nx = np.linalg.norm(x)
    return x / nx


def batched_intersect_planes(P, Q, tol_rank=TOL_RANK, gap=RANK_GAP):
    """Vectorized plane intersection: P, Q shaped (..., 2, n+2).

    Returns (lines (..., n+2), ok mask, gap ratio field).  Points failing the
    rank-1 test are flagged in the mask rather than raising.
    """
    P = _unit_rows(np.asarray(P, dtype=complex))
    Q = _unit_rows(np.asarray(Q, dtype=complex))
    M = np.concatenate([np.swapaxes(P, -1, -2), -np.swapaxes(Q, -1, -2)], axis=-1)
    u, s, vh = np.linalg.svd(M)
    ratio = s[..., -1] / np.maximum(s[..., -2], 1e-300)
    ok = (s[..., -1] < s[..., 0] / gap) & (s[..., -2] > s[..., 0] / gap)
    ab = vh[..., -1, :].conj()
    x = np.einsum("...ij,...i->...j", P, ab[..., :2])
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    x = x / np.maximum(nx, 1e-300)
    return x, ok, ratio


def signature_gram_schmidt(B, n):
    """Signature-aware Gram-Schmidt on the columns of B (near-orthonormal input).

    Columns 0..n are treated as space-like and processed first; the final
    column is the time-like one, so no intermediate vector divides by a
    near-null norm.  Projection uses the signed pairing c_j = (v, u_j) / s_j
    with s_j the unit norm sign of column j.  Broadcasts over leading axes.
    Returns (B_orth, drift) with drift the largest correction applied.
    """
    B = np.array(B, copy=True)
    g = metric_signs(n)
    m = B.shape[-1]
    drift = 0.0
    signs = []
    for k in range(m):
        v = B[..., k].copy()
        for jj in range(k):
            u = B[..., jj]
            c = np.einsum("...i,i,...i->...", v, g, u) / signs[jj]
            v = v - c[..., None] * u
            drift = max(drift, float(np.max(np.abs(c))))
        nv = np.einsum("...i,i,...i->...", v, g, v)
        s = np.where(nv.real >= 0, 1.0, -1.0)
        drift = max(drift, float(np.max(np.abs(np.sqrt(np.abs(nv)) - 1.0))))
        v = v / np.sqrt(np.abs(nv))[..., None]
        B[..., k] = v
        signs.append(s)
    return B, drift


@dataclass(frozen=True)
class LightVec:
    """Real (n+2)-vector in R^(n+1,1)."""

    coords: tuple
    dim_n: int

    def __post_init__(self):
        if len(self.coords) != self.dim_n + 2:
            raise DimensionMismatch("LightVec: len(coords) must be dim_n + 2")

    @property
    def array(self):
        return np.asarray(self.coords, dtype=float)

    def inner(self, other):
        return float(inner(self.array, np.asarray(other.coords)))

    def is_lightlike(self, tol=TOL_NULL):
        return bool(is_lightlike(self.array, tol))


@dataclass(frozen=True)
class CLightVec:
    """Complexified (n+2)-vector; pairings stay complex bilinear."""

    coords: tuple
    dim_n: int

    @property
    def array(self):
        return np.asarray(self.coords, dtype=complex)

    def inner(self, other):
        return complex(inner(self.array, np.asarray(other.coords)))

    def conj(self):
        return CLightVec(tuple(np.conj(self.array)), self.dim_n)
