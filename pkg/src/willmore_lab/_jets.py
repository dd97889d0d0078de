"""Two-variable jet arithmetic.

A jet is a dict mapping (a, b) -> numpy array of partial derivatives
d^a_u d^b_v f, for a + b <= order.  Values broadcast over leading axes;
the last axis (if any) is the vector component axis.  Leibniz products,
quotients and square roots are implemented by recursion on total degree,
which keeps every catalog surface's derivative stack in closed form.
"""

from __future__ import annotations

import math

import numpy as np


def jet_keys(order):
    return [(a, b) for a in range(order + 1) for b in range(order + 1 - a)]


def _binom(n, k):
    return math.comb(n, k)


def jconst(value, order, like=None):
    j = {}
    z = np.zeros_like(value)
    for a, b in jet_keys(order):
        j[(a, b)] = value if (a, b) == (0, 0) else z
    return j


def jadd(j1, j2):
    return {k: j1[k] + j2[k] for k in j1}


def jsub(j1, j2):
    return {k: j1[k] - j2[k] for k in j1}


def jscale(j, c):
    return {k: c * v for k, v in j.items()}


def jconj(j):
    return {k: np.conj(v) for k, v in j.items()}


def jmul(j1, j2, order, product=None):
    """Leibniz product of two jets.

    `product` combines values (default: elementwise/broadcast multiply);
    pass e.g. a wedge or matrix product for structured factors.
    """
    if product is None:
        product = lambda x, y: x * y
    out = {}
    for a, b in jet_keys(order):
        acc = None
        for i in range(a + 1):
            for k in range(b + 1):
                c = _binom(a, i) * _binom(b, k)
                term = product(j1[(i, k)], j2[(a - i, b - k)])
                term = c * term
                acc = term if acc is None else acc + term
        out[(a, b)] = acc
    return out


def jdot(j1, j2, order, pairing):
    """Leibniz rule for a bilinear pairing returning scalars."""
    return jmul(j1, j2, order, product=pairing)


def jdiv(jnum, jden, order):
    """Jet of f/s for scalar jet s (den values broadcast against num)."""
    out = {}
    s0 = jden[(0, 0)]
    for a, b in sorted(jet_keys(order), key=lambda k: (k[0] + k[1], k)):
        acc = jnum[(a, b)]
        for i in range(a + 1):
            for k in range(b + 1):
                if (i, k) == (a, b):
                    continue
                c = _binom(a, i) * _binom(b, k)
                acc = acc - c * out[(i, k)] * jden[(a - i, b - k)]
        out[(a, b)] = acc / s0
    return out


def jsqrt(j, order):
    """Jet of sqrt(s) for a scalar jet with s0 bounded away from zero."""
    out = {}
    r0 = np.sqrt(j[(0, 0)])
    for a, b in sorted(jet_keys(order), key=lambda k: (k[0] + k[1], k)):
        if (a, b) == (0, 0):
            out[(a, b)] = r0
            continue
        acc = j[(a, b)]
        for i in range(a + 1):
            for k in range(b + 1):
                if (i, k) in ((0, 0), (a, b)):
                    continue
                c = _binom(a, i) * _binom(b, k)
                acc = acc - c * out[(i, k)] * out[(a - i, b - k)]
        out[(a, b)] = acc / (2.0 * r0)
    return out


def jtrig(phase_jet, order, kind):
    """Jet of cos/sin composed with a phase jet that is AFFINE per variable.

    Valid whenever the phase has vanishing second and higher derivatives
    (phase = c0 + cu*u + cv*v), which covers every trigonometric catalog
    surface.  kind is 'cos' or 'sin'.
    """
    p = phase_jet[(0, 0)]
    cu = phase_jet.get((1, 0), 0.0)
    cv = phase_jet.get((0, 1), 0.0)
    for (a, b), v in phase_jet.items():
        if a + b >= 2 and np.any(v != 0):
            raise ValueError("jtrig needs an affine phase")
    base = {"cos": (np.cos, np.sin), "sin": (np.sin, np.cos)}[kind]
    out = {}
    for a, b in jet_keys(order):
        k = a + b
        # d^k cos(p) cycles cos -> -sin -> -cos -> sin
        if kind == "cos":
            cyc = [np.cos(p), -np.sin(p), -np.cos(p), np.sin(p)][k % 4]
        else:
            cyc = [np.sin(p), np.cos(p), -np.sin(p), -np.cos(p)][k % 4]
        out[(a, b)] = (np.asarray(cu) ** a) * (np.asarray(cv) ** b) * cyc
    return out


def jpoly_v(coeffs, V, order):
    """Jet of a polynomial in v only, coeffs low-to-high."""
    out = {}
    for a, b in jet_keys(order):
        if a > 0:
            out[(a, b)] = np.zeros_like(V)
            continue
        acc = np.zeros_like(V)
        for p, c in enumerate(coeffs):
            if p - b >= 0:
                acc = acc + c * math.perm(p, b) * V ** (p - b)
        out[(a, b)] = acc
    return out


def jstack(jets, order):
    """Stack component jets into a vector jet along a new last axis."""
    return {k: np.stack([j[k] for j in jets], axis=-1) for k in jet_keys(order)}


def japply_matrix(T, j):
    """Apply a constant matrix to a vector jet."""
    return {k: np.einsum("ij,...j->...i", T, v) for k, v in j.items()}


def jet_derivative(j, du, dv):
    """Shift a jet: the jet of d^du_u d^dv_v f, losing du+dv orders."""
    out = {}
    for (a, b), v in j.items():
        if (a + du, b + dv) in j:
            out[(a, b)] = j[(a + du, b + dv)]
    return out
