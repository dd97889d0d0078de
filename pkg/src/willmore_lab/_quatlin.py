"""Linear algebra of the HP^1 model: C^4 with quaternionic structure j,
the Plucker metric on wedge^2 C^4, and the identification with R^(5,1).

Conventions: H = C + Cj via q = z1 + z2 j, so left multiplication by j
acts on C^2 as (z1, z2) -> (-conj z2, conj z1).  On C^4 = H^2 the map j
pairs components (0,1) and (2,3).  The metric on wedge^2 C^4 is
(a^b, c^d) = -det[a, b, c, d], the sign that gives Fix(wedge^2 j)
signature (5,1) for this j.
"""

from __future__ import annotations

import numpy as np

# index pairs of the wedge^2 coordinate order
PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_PAIR_INDEX = {p: i for i, p in enumerate(PAIRS)}


def jmap(z):
    """Left multiplication by j on C^4 (antilinear), batched on the last axis."""
    z = np.asarray(z)
    w = np.empty_like(z)
    zc = np.conj(z)
    w[..., 0] = -zc[..., 1]
    w[..., 1] = zc[..., 0]
    w[..., 2] = -zc[..., 3]
    w[..., 3] = zc[..., 2]
    return w


def wedge6(u, v):
    """Plucker coordinates of u ^ v in the PAIRS order."""
    u = np.asarray(u)
    v = np.asarray(v)
    out = np.empty(u.shape[:-1] + (6,), dtype=np.result_type(u, v))
    for m, (k, l) in enumerate(PAIRS):
        out[..., m] = u[..., k] * v[..., l] - u[..., l] * v[..., k]
    return out


def _metric6_matrix():
    # (p, q) = -(p01 q23 - p02 q13 + p03 q12 + p12 q03 - p13 q02 + p23 q01)
    M = np.zeros((6, 6))
    terms = {
        ((0, 1), (2, 3)): 1.0,
        ((0, 2), (1, 3)): -1.0,
        ((0, 3), (1, 2)): 1.0,
    }
    for (pa, pb), s in terms.items():
        ia, ib = _PAIR_INDEX[pa], _PAIR_INDEX[pb]
        M[ia, ib] = -s
        M[ib, ia] = -s
    return M


METRIC6 = _metric6_matrix()


def inner6(p, q):
    """Plucker metric (p, q) = -det; vanishes iff p is decomposable when p = q."""
    return np.einsum("...i,ij,...j->...", p, METRIC6, q)


def _wedge2j_matrix():
    # wedge^2 j acts antilinearly: (w2j)(p) = J6 conj(p)
    J = np.zeros((6, 6))
    e = np.eye(4)
    for m, (k, l) in enumerate(PAIRS):
        img = wedge6(jmap(e[k]), jmap(e[l]))
        J[:, m] = img.real
    return J


J6 = _wedge2j_matrix()


def wedge2j(p):
    return np.einsum("ij,...j->...i", J6, np.conj(p))


def _real_basis():
    """Orthogonal real basis of Fix(wedge^2 j) with Gram diag(1,1,1,1,1,-1)."""
    b = np.zeros((6, 6), dtype=complex)

    def unit(pair, val=1.0):
        v = np.zeros(6, dtype=complex)
        v[_PAIR_INDEX[pair]] = val
        return v

    b[0] = unit((0, 2)) + unit((1, 3))
    b[1] = 1j * (unit((0, 2)) - unit((1, 3)))
    b[2] = unit((0, 3)) - unit((1, 2))
    b[3] = 1j * (unit((0, 3)) + unit((1, 2)))
    b[4] = unit((0, 1)) - unit((2, 3))
    b[5] = unit((0, 1)) + unit((2, 3))
    basis = b / np.sqrt(2.0)
    gram = np.array([[inner6(basis[i], basis[k]) for k in range(6)] for i in range(6)])
    assert np.allclose(gram.real, np.diag([1, 1, 1, 1, 1, -1]), atol=1e-12)
    for v in basis:
        assert np.allclose(wedge2j(v), v, atol=1e-12)
    return basis


EBASIS = _real_basis()  # rows: E_1..E_5 space-like, E_6 time-like
_SIGNS51 = np.array([1.0, 1.0, 1.0, 1.0, 1.0, -1.0])


def to_r51(p):
    """Coordinates of p in the real basis: x_k = eps_k (p, E_k)."""
    coords = np.einsum("...i,ij,kj->...k", np.asarray(p), METRIC6, EBASIS)
    return coords * _SIGNS51


def from_r51(x):
    """Inverse of to_r51 on real coordinates (complex allowed, bilinear)."""
    return np.einsum("...k,kj->...j", np.asarray(x), EBASIS)


def hat_matrix():
    """Matrix of sl(C^4) -> o(wedge^2 C^4), f -> (x^y -> fx^y + x^fy), as a
    (36, 16) complex map on flattened matrices, plus its pseudo-inverse."""
    rows = []
    e = np.eye(4)
    for a in range(16):
        F = np.zeros((4, 4), dtype=complex)
        F[a // 4, a % 4] = 1.0
        H = np.zeros((6, 6), dtype=complex)
        for m, (k, l) in enumerate(PAIRS):
            img = wedge6(F @ e[k], e[l]) + wedge6(e[k], F @ e[l])
            H[:, m] = img
        rows.append(H.reshape(36))
    M = np.array(rows).T  # (36, 16)
    return M, np.linalg.pinv(M)


HAT_M, HAT_PINV = hat_matrix()


def hat(f):
    """o(wedge^2 C^4) image of f in sl(C^4); batched."""
    f = np.asarray(f)
    flat = f.reshape(f.shape[:-2] + (16,))
    out = np.einsum("ha,...a->...h", HAT_M, flat)
    return out.reshape(f.shape[:-2] + (6, 6))


def unhat(H):
    """Least-squares inverse of hat (exact on the image)."""
    H = np.asarray(H)
    flat = H.reshape(H.shape[:-2] + (36,))
    out = np.einsum("ah,...h->...a", HAT_PINV, flat)
    return out.reshape(H.shape[:-2] + (4, 4))


def hat_o51(f):
    """hat(f) expressed as an endomorphism of R^(5,1) coordinates."""
    Hf = hat(f)
    B = EBASIS.T  # columns are basis vectors in pair coords
    Binv = _SIGNS51[:, None] * (EBASIS @ METRIC6)
    return np.einsum("ki,...ij,jl->...kl", Binv, Hf, B)


def plane_to_line(basis):
    """Plucker embedding: (..., 2, 4) basis -> unit 6-vector of wedge^2 L."""
    p = wedge6(basis[..., 0, :], basis[..., 1, :])
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def line_to_plane(p, tol=1e-8):
    """Inverse Plucker: decomposable 6-vector -> (..., 2, 4) plane basis.

    Uses the antisymmetric coordinate matrix P = u v^T - v u^T whose column
    space is the plane; top-2 singular vectors recover a basis.
    """
    p = np.asarray(p)
    quad = inner6(p, p)
    scale = np.sum(np.abs(p) ** 2, axis=-1)
    if np.any(np.abs(quad) > tol * np.maximum(scale, 1e-300)):
        raise ValueError("not decomposable: Plucker quadric residual too large")
    P = np.zeros(p.shape[:-1] + (4, 4), dtype=complex)
    for m, (k, l) in enumerate(PAIRS):
        P[..., k, l] = p[..., m]
        P[..., l, k] = -p[..., m]
    u, s, vh = np.linalg.svd(P)
    return np.swapaxes(u[..., :, :2], -1, -2)
