"""Multipliers via their chart scalar, CMC data and conserved quantities.

A multiplier q is stored by the function q^z of the chart and rebuilt on
demand through q_(d_z) = q^z (sigma^z ^ sigma^z_zbar), the unique real
extension with (1,0)-part valued in Lambda ^ Lambda^(0,1).  CMC surfaces
carry the canonical isothermic form eta = (1/2) sigma_inf ^ dN, the
multiplier family q + t *eta and the conserved quantities p(lambda).
"""

from __future__ import annotations

import numpy as np

from . import minkowski
from ._stencil import META_H, grid_deriv, meta_deriv
from .errors import MinimalAmbiguity, NotCMC
from .immersion import SpaceForm, project_spaceform

TOL_CMC = 1e-8
TOL_CQ = 1e-6
TOL_MINIMAL = 1e-8


class Multiplier:
    """Real 1-form q in Lambda ^ Lambda^(1), encoded by its chart scalar."""

    def __init__(self, qz_fn, field, label="q"):
        self.field = field
        self.label = label
        if callable(qz_fn):
            self._qz = qz_fn
        else:
            const = complex(qz_fn)
            self._qz = lambda U, V: np.full(np.shape(U), const, dtype=complex)

    def qz(self, U, V):
        return self._qz(np.asarray(U, dtype=float), np.asarray(V, dtype=float))

    def pieces(self, U, V):
        """(q^(1,0)_x, q^(0,1)_x) endomorphism values; y-parts are +i/-i multiples."""
        nf = self.field.nframe(U, V)
        qz = self.qz(U, V)[..., None, None]
        q10x = qz * minkowski.wedge(nf["s"], nf["szb"])
        q01x = np.conj(qz) * minkowski.wedge(nf["s"], nf["sz"])
        return q10x, q01x

    def coeffs(self, U, V):
        """(q_x, q_y) of the real form."""
        q10x, q01x = self.pieces(U, V)
        qx = q10x + q01x
        qy = 1j * (q10x - q01x)
        return qx, qy

    def holomorphicity_residual(self, n=64):
        """|d_zbar q^z| over the grid; zero iff d^D q = 0."""
        g = self.field.grid
        U, V = np.meshgrid(g.us, g.vs, indexing="ij")
        if self.field.mode == "analytic":
            qx = meta_deriv(self._qz, U, V, 1, 0)
            qy = meta_deriv(self._qz, U, V, 0, 1)
        else:
            q = self.qz(U, V)
            qx = grid_deriv(q, 0, g.hx, 1, g.periodic_x)
            qy = grid_deriv(q, 1, g.hy, 1, g.periodic_y)
        return np.abs(0.5 * (qx + 1j * qy))

    def __add__(self, other):
        if isinstance(other, StarEta):
            eta = other.eta
            t = other.t

            def qz_fn(U, V):
                return self.qz(U, V) - 1j * t * eta.etaz(U, V)

            return Multiplier(qz_fn, self.field, label=f"{self.label}+{t}*eta")
        return NotImplemented


class StarEta:
    """Helper tag t * (*eta) for building the multiplier affine line."""

    def __init__(self, eta, t):
        self.eta = eta
        self.t = t


def reconstruct_q(m, field, U=None, V=None):
    """Endomorphism coefficients (q_x, q_y) of the multiplier on the grid."""
    if U is None:
        g = field.grid
        U, V = np.meshgrid(g.us, g.vs, indexing="ij")
    return m.coeffs(U, V)


class IsothermicForm:
    """Closed real 1-form eta with values in Lambda ^ Lambda^perp.

    Stored as a pointwise evaluator (eta_x, eta_y); the CMC construction
    supplies eta = (1/2) sigma_inf ^ dN.
    """

    def __init__(self, coeff_fn, field, label="eta"):
        self._fn = coeff_fn
        self.field = field
        self.label = label

    @staticmethod
    def from_grid(ex, ey, field, label="eta"):
        """Grid-backed form with quintic interpolation between nodes."""
        from ._stencil import GridInterpolator

        stack = np.stack([ex, ey], axis=-3)
        interp = GridInterpolator(field.grid, stack)

        def fn(U, V):
            val = interp(U, V)
            return val[..., 0, :, :], val[..., 1, :, :]

        return IsothermicForm(fn, field, label=label)

    def coeffs(self, U, V):
        return self._fn(np.asarray(U, dtype=float), np.asarray(V, dtype=float))

    def star_coeffs(self, U, V):
        ex, ey = self.coeffs(U, V)
        return -ey, ex

    def etaz(self, U, V):
        """Chart scalar: eta_(d_z) sigma^z_z = -(1/2) eta^z sigma^z."""
        ex, ey = self.coeffs(U, V)
        nf = self.field.nframe(U, V)
        edz = 0.5 * (ex - 1j * ey)
        vec = np.einsum("...ij,...j->...i", edz, nf["sz"])
        s = nf["s"]
        coef = np.einsum("...i,...i->...", np.conj(s), vec) / np.einsum(
            "...i,...i->...", np.conj(s), s
        )
        return -2.0 * coef

    def closedness_residual(self):
        """|d eta| = |dx eta_y - dy eta_x| over the grid, frame-normalized."""
        f = self.field
        dey_dx = f.dfield(lambda U, V: self.coeffs(U, V)[1], f"{self.label}_y", 1, 0)
        dex_dy = f.dfield(lambda U, V: self.coeffs(U, V)[0], f"{self.label}_x", 0, 1)
        from .congruence import frobenius

        piS = f.grid_proj["pi_S"]
        scale = np.maximum(1.0, (frobenius(piS) / 2.0) ** 2)
        return frobenius(dey_dx - dex_dy) / scale

    def values_residual(self):
        """eta Lambda = 0 and Im(eta) in Lambda checks."""
        f = self.field
        g = f.grid
        U, V = np.meshgrid(g.us, g.vs, indexing="ij")
        ex, ey = self.coeffs(U, V)
        nf = f.grid_nframe
        s = nf["s"]
        r1 = max(
            np.abs(np.einsum("...ij,...j->...i", ex, s)).max(),
            np.abs(np.einsum("...ij,...j->...i", ey, s)).max(),
        )
        real = max(np.abs(ex.imag).max(), np.abs(ey.imag).max())
        return {"eta_lambda": float(r1), "reality": float(real)}


class ConservedQuantity:
    """Laurent polynomial p(lambda) = lambda^-1 v + v0 + lambda conj(v)."""

    def __init__(self, v_fn, v0_fn, field, label="p"):
        self._v = v_fn
        self._v0 = v0_fn
        self.field = field
        self.label = label

    def v(self, U, V):
        return self._v(np.asarray(U, dtype=float), np.asarray(V, dtype=float))

    def v0(self, U, V):
        return self._v0(np.asarray(U, dtype=float), np.asarray(V, dtype=float))

    def at(self, lam, U, V):
        v = self.v(U, V)
        return v / lam + self.v0(U, V) + lam * np.conj(v)

    def p1(self, U, V):
        return self.at(1.0, U, V)

    def degenerate(self, tol=TOL_MINIMAL):
        """Preconditions p(1) != 0 and (v0 != 0 or mu-combination != 0)."""
        g = self.field.grid
        U, V = np.meshgrid(g.us, g.vs, indexing="ij")
        p1 = self.p1(U, V)
        scale = np.sqrt(minkowski.norm2(p1)).max()
        return bool(scale < tol)


def conserved_residual(p, q, field):
    """The three residuals of the conserved-quantity characterization.

    r1 = |d p(1)|, r2 = |D^(0,1) v|, r3 = |N^(1,0) v + q^(1,0) v0|,
    evaluated pointwise on the grid (d_z components; the conjugates are
    redundant by reality).
    """
    g = field.grid
    U, V = np.meshgrid(g.us, g.vs, indexing="ij")

    dp1_x = field.dfield(lambda a, b: p.p1(a, b), f"{p.label}_p1", 1, 0)
    dp1_y = field.dfield(lambda a, b: p.p1(a, b), f"{p.label}_p1", 0, 1)
    r1 = np.maximum(
        np.linalg.norm(dp1_x, axis=-1), np.linalg.norm(dp1_y, axis=-1)
    )

    dv_x = field.dfield(lambda a, b: p.v(a, b), f"{p.label}_v", 1, 0)
    dv_y = field.dfield(lambda a, b: p.v(a, b), f"{p.label}_v", 0, 1)
    dv_zb = 0.5 * (dv_x + 1j * dv_y)
    piP = field.grid_proj["pi_perp"]
    r2 = np.linalg.norm(np.einsum("...ij,...j->...i", piP, dv_zb), axis=-1)

    Nx, Ny = field.grid_N
    N10x = 0.5 * (Nx - 1j * Ny)
    q10x, _ = q.pieces(U, V)
    vec = np.einsum("...ij,...j->...i", N10x, p.v(U, V)) + np.einsum(
        "...ij,...j->...i", q10x, p.v0(U, V)
    )
    r3 = np.linalg.norm(vec, axis=-1)
    return r1, r2, r3


def dvv_residual(p, field):
    """|d (v, v)| over the grid; vanishes for conserved quantities."""
    dx = field.dfield(lambda a, b: minkowski.inner(p.v(a, b), p.v(a, b)), f"{p.label}_vv", 1, 0)
    dy = field.dfield(lambda a, b: minkowski.inner(p.v(a, b), p.v(a, b)), f"{p.label}_vv", 0, 1)
    return np.maximum(np.abs(dx), np.abs(dy))


def cmc_data(lift, sf, field, tol_cmc=TOL_CMC):
    """CMC package: H_inf, unit normal N, eta_inf, q_inf^t and p_inf^t.

    Requires n = 3 and max |d (v_inf_perp, v_inf_perp)| < tol over the grid.
    H_inf = |v_inf_perp|, v_inf_perp = H_inf N (fixing N's sign), and

        eta_inf = (1/2) sigma_inf ^ dN,
        q_inf^t = H_inf eta_inf + t * (*eta_inf),
        p_inf^t = lambda^-1 (H_inf - i t)/2 N + v_inf^T + lambda (H_inf + i t)/2 N.
    """
    if lift.dim_n != 3:
        raise NotCMC("cmc_data requires n = 3")
    vinf = sf.array
    g = field.grid
    U, V = np.meshgrid(g.us, g.vs, indexing="ij")
    piP = field.grid_proj["pi_perp"]
    vperp = np.einsum("...ij,j->...i", piP, vinf).real
    h2 = minkowski.inner(vperp, vperp).real
    scale = float(minkowski.inner(vinf, vinf).real**2) + 1.0
    varia = float(h2.max() - h2.min())
    if varia > tol_cmc * max(1.0, np.abs(h2).max()):
        raise NotCMC(f"(v_perp, v_perp) varies by {varia:.3e}", variation=varia)
    H = float(np.sqrt(max(h2.mean(), 0.0)))

    minimal = H < TOL_MINIMAL

    if minimal:
        # N defined up to sign: span S_perp smoothly via a fixed probe vector
        probe = np.zeros(lift.dim_n + 2)
        probe[0] = 1.0

        def N_fn(Uq, Vq):
            pp = field.projector_pack(Uq, Vq, derivs=False)["pi_perp"].real
            w = np.einsum("...ij,j->...i", pp, probe)
            nn = np.sqrt(np.abs(minkowski.inner(w, w)))
            return w / nn[..., None]

        # lexicographically-first positive component at the grid origin
        n0 = N_fn(np.array(g.x0), np.array(g.y0))
        idx = int(np.argmax(np.abs(n0) > 1e-8))
        flip = -1.0 if n0[idx] < 0 else 1.0

        def N_eval(Uq, Vq):
            return flip * N_fn(Uq, Vq)

    else:

        def N_eval(Uq, Vq):
            pp = field.projector_pack(Uq, Vq, derivs=False)["pi_perp"].real
            return np.einsum("...ij,j->...i", pp, vinf) / H

    sigma_inf_lift = project_spaceform(lift, sf)

    def eta_fn(Uq, Vq):
        pack = field.projector_pack(Uq, Vq, derivs=True)
        if minimal:
            h = META_H
            dN_x = meta_deriv(N_eval, Uq, Vq, 1, 0, h)
            dN_y = meta_deriv(N_eval, Uq, Vq, 0, 1, h)
        else:
            # d pi_perp = -d pi_S
            dN_x = -np.einsum("...ij,j->...i", pack["dpi_x"].real, vinf) / H
            dN_y = -np.einsum("...ij,j->...i", pack["dpi_y"].real, vinf) / H
        s_inf = sigma_inf_lift.jets(Uq, Vq, 0)[(0, 0)]
        ex = 0.5 * minkowski.wedge(s_inf, dN_x)
        ey = 0.5 * minkowski.wedge(s_inf, dN_y)
        return ex, ey

    eta = IsothermicForm(eta_fn, field, label="eta_inf")

    if minimal:

        def q_t(t):
            if t == 0:
                return Multiplier(0.0, field, label="q_inf")
            return Multiplier(
                lambda Uq, Vq, t=t: -1j * t * eta.etaz(Uq, Vq), field, label=f"q_inf^{t}"
            )

    else:

        def q_t(t):
            return Multiplier((1.0 - 1j * t / H) * H, field, label=f"q_inf^{t}")

    def p_t(t):
        def v_fn(Uq, Vq):
            return 0.5 * (H - 1j * t) * N_eval(Uq, Vq).astype(complex)

        def v0_fn(Uq, Vq):
            N = N_eval(Uq, Vq)
            return np.broadcast_to(vinf, N.shape) - H * N

        return ConservedQuantity(v_fn, v0_fn, field, label=f"p_inf^{t}")

    return {
        "H": H,
        "minimal": minimal,
        "N": N_eval,
        "eta": eta,
        "q_t": q_t,
        "p_t": p_t,
        "spaceform": sf,
    }


def detect_cmc(lift, field, sample=8, tol=1e-7):
    """Search for a constant v_inf making the surface CMC.

    (pi_perp v, pi_perp v) = v^T g pi_perp(p) v must be p-independent; the
    constancy conditions are linear on the symmetric tensor v v^T.  Solves
    the sampled linear system by SVD, extracts rank-1 candidates, verifies
    on the full grid.  Returns a SpaceForm or None.
    """
    if lift.dim_n != 3:
        return None
    g = field.grid
    iu = np.linspace(0, g.nx - 1, min(sample, g.nx)).astype(int)
    iv = np.linspace(0, g.ny - 1, min(sample, g.ny)).astype(int)
    piP = field.grid_proj["pi_perp"].real
    gm = minkowski.metric_matrix(lift.dim_n)
    M = np.einsum("ij,...jk->...ik", gm, piP)  # v^T M v = (pi v, pi v)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    Ms = M[np.ix_(iu, iv)].reshape(-1, lift.dim_n + 2, lift.dim_n + 2)
    C = Ms - Ms[0]
    d = lift.dim_n + 2
    triu = np.triu_indices(d)
    # row per sample point: entries of the symmetric constraint matrix
    rows = C[:, triu[0], triu[1]] * np.where(triu[0] == triu[1], 1.0, 2.0)
    u, s, vh = np.linalg.svd(rows, full_matrices=True)
    candidates = []
    for i in range(len(vh) - 1, -1, -1):
        sv = s[i] if i < len(s) else 0.0
        if sv > 1e-6 * (s[0] if len(s) else 1.0):
            break
        X = np.zeros((d, d))
        X[triu] = vh[i]
        X = X + X.T - np.diag(np.diag(X))
        w, vecs = np.linalg.eigh(X)
        k = int(np.argmax(np.abs(w)))
        if np.abs(w).sum() - np.abs(w[k]) > 0.2 * np.abs(w[k]):
            continue  # not rank-1
        v = vecs[:, k] * np.sqrt(np.abs(w[k]))
        candidates.append(v)
    best = None
    for v in candidates:
        h2 = np.einsum("i,...ij,j->...", v, M, v)
        varia = h2.max() - h2.min()
        rel = varia / max(np.abs(h2).max(), np.sum(v * v))
        if rel < tol and (best is None or rel < best[0]):
            best = (rel, v)
    if best is None:
        return None
    v = best[1]
    v = v / np.sqrt(np.sum(v * v))
    return SpaceForm(tuple(v))
