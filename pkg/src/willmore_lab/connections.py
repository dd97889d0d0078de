"""Flat connection families, parallel transport and the spectral deformations.

Connections are carried by their coefficient 1-form A relative to the
trivial flat connection, with a vectorized pointwise evaluator so RK4
transport and refined-stencil curvature never interpolate on analytic
surfaces.  Deformed surfaces are rebuilt with exact derivative jets via
the gauged-derivative recursion d^k(F^-1 sigma) = F^-1 (d + A)^k sigma.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import logm

from . import minkowski
from ._jets import jet_keys
from ._stencil import META_H, grid_deriv, meta_deriv
from .congruence import frobenius
from .errors import NotFlat, PathDependence, RealityLoss, SphereContained, WillmoreLabError
from .immersion import SpaceForm, SurfaceLift, sphere_containment

TOL_FLAT = 1e-6
TOL_FLAT_SAMPLED = 2e-4  # grid-FD curvature floor for derived surfaces
REORTH_EVERY = 16


def _tol_flat_for(conn, tol_flat):
    if tol_flat is not None:
        return tol_flat
    return TOL_FLAT if conn.mode == "analytic" else TOL_FLAT_SAMPLED


class ConnectionField:
    """lambda- or t-parametrized metric connection nabla = d + A."""

    def __init__(self, field, family, param, A_eval, real=None):
        self.field = field
        self.family = family
        self.param = param
        self.A_eval = A_eval
        self.grid = field.grid
        self.mode = field.mode
        self.dim_n = field.dim_n
        if real is None:
            real = _family_is_real(family, param)
        self.real = real
        self._cache = {}

    def grid_A(self):
        if "A" not in self._cache:
            g = self.grid
            U, V = np.meshgrid(g.us, g.vs, indexing="ij")
            self._cache["A"] = self.A_eval(U, V)
        return self._cache["A"]

    def A_jets(self, U, V, order=2):
        """Jets of the coefficient fields (for the deformation recursion)."""
        out = {}
        for a, b in jet_keys(order):
            if self.mode == "analytic":
                if (a, b) == (0, 0):
                    val = self.A_eval(U, V)
                else:
                    stacked = meta_deriv(
                        lambda p, q: np.stack(self.A_eval(p, q), axis=-3), U, V, a, b
                    )
                    val = (stacked[..., 0, :, :], stacked[..., 1, :, :])
            else:
                Ax, Ay = self.grid_A()
                g = self.grid
                fx, fy = Ax, Ay
                if a:
                    fx = grid_deriv(fx, 0, g.hx, a, g.periodic_x)
                    fy = grid_deriv(fy, 0, g.hx, a, g.periodic_x)
                if b:
                    fx = grid_deriv(fx, 1, g.hy, b, g.periodic_y)
                    fy = grid_deriv(fy, 1, g.hy, b, g.periodic_y)
                val = (fx, fy)
            out[(a, b)] = val
        return out

    def residuals(self):
        """Metric (skew) and reality residuals of the coefficients."""
        Ax, Ay = self.grid_A()
        skew = max(minkowski.skew_residual(Ax).max(), minkowski.skew_residual(Ay).max())
        real = max(np.abs(Ax.imag).max(), np.abs(Ay.imag).max()) if self.real else 0.0
        return {"skew": float(skew), "reality": float(real)}


def _family_is_real(family, param):
    if family in ("trivial", "dt_eta"):
        return True
    if family in ("dlambda_q", "dlambda_cmc"):
        lam = complex(param)
        return abs(abs(lam) - 1.0) < 1e-13
    return False


def _n_pieces(Nx, Ny):
    n10x = 0.5 * (Nx - 1j * Ny)
    n01x = 0.5 * (Nx + 1j * Ny)
    return n10x, n01x


def build_dlambda_q(field, q, lam):
    """d^lambda_q = D + l^-1 N^(1,0) + l N^(0,1) + (l^-2 - 1) q^(1,0) + (l^2 - 1) q^(0,1)."""
    lam = complex(lam)
    if lam == 0:
        raise WillmoreLabError("lambda = 0 is not in the connection family")

    def A_eval(U, V):
        Nx, Ny = field.N_coeffs(U, V)
        n10x, n01x = _n_pieces(Nx, Ny)
        q10x, q01x = q.pieces(U, V)
        cx = (1.0 / lam) * n10x + lam * n01x + (1.0 / lam**2 - 1.0) * q10x + (lam**2 - 1.0) * q01x
        cy = 1j * ((1.0 / lam) * n10x - lam * n01x) + 1j * ((1.0 / lam**2 - 1.0) * q10x - (lam**2 - 1.0) * q01x)
        Ax = -Nx + cx
        Ay = -Ny + cy
        if _family_is_real("dlambda_q", lam):
            Ax = Ax.real
            Ay = Ay.real
        return Ax, Ay

    return ConnectionField(field, "dlambda_q", lam, A_eval)


def build_dt_eta(field, eta, t):
    """Isothermic family d + t eta."""
    t = float(t)

    def A_eval(U, V):
        ex, ey = eta.coeffs(U, V)
        return t * ex, t * ey

    return ConnectionField(field, "dt_eta", t, A_eval, real=True)


def build_dlambda_cmc(field, q_inf, lam):
    """Classical CMC family d^lambda_inf (lambda on the unit circle)."""
    lam = complex(lam)
    if abs(abs(lam) - 1.0) > 1e-10:
        raise WillmoreLabError("d^lambda_inf needs unit lambda")

    def A_eval(U, V):
        Nx, Ny = field.N_coeffs(U, V)
        n10x, n01x = _n_pieces(Nx, Ny)
        q10x, q01x = q_inf.pieces(U, V)
        cx = lam * n10x + (1.0 / lam) * n01x + 2.0 * (lam - 1.0) * q10x + 2.0 * (1.0 / lam - 1.0) * q01x
        cy = 1j * (lam * n10x - (1.0 / lam) * n01x) + 2j * ((lam - 1.0) * q10x - (1.0 / lam - 1.0) * q01x)
        return (-Nx + cx).real, (-Ny + cy).real

    return ConnectionField(field, "dlambda_cmc", lam, A_eval, real=True)


def trivial_connection(field):
    d = field.dim_n + 2

    def A_eval(U, V):
        shape = np.shape(U) + (d, d)
        return np.zeros(shape), np.zeros(shape)

    return ConnectionField(field, "trivial", 0.0, A_eval, real=True)


def build_family_general(field, base_conn, q_pieces_eval, mu):
    """The induced family of a non-trivial flat metric base connection.

    With d~ = d + A, the splitting relative to the same congruence is
    D~ = -N + blockdiag(A), N~ = N + offdiag(A); the family applies the
    usual lambda-weights to N~ and the supplied q-pieces.  Used for the
    group-law check (d^l_q)^(mu, q_l) = d^(l mu)_q.
    """
    mu = complex(mu)

    def A_eval(U, V):
        p = field.projector_pack(U, V, derivs=False)
        piS, piP = p["pi_S"], p["pi_perp"]
        Nx, Ny = field.N_coeffs(U, V)
        Ax, Ay = base_conn.A_eval(U, V)

        def blockdiag(M):
            return piS @ M @ piS + piP @ M @ piP

        Dx = -Nx + blockdiag(Ax)
        Dy = -Ny + blockdiag(Ay)
        Ntx = Nx + (Ax - blockdiag(Ax))
        Nty = Ny + (Ay - blockdiag(Ay))
        n10x = 0.5 * (Ntx - 1j * Nty)
        n01x = 0.5 * (Ntx + 1j * Nty)
        q10x, q01x = q_pieces_eval(U, V)
        cx = (1.0 / mu) * n10x + mu * n01x + (1.0 / mu**2 - 1.0) * q10x + (mu**2 - 1.0) * q01x
        cy = 1j * ((1.0 / mu) * n10x - mu * n01x) + 1j * ((1.0 / mu**2 - 1.0) * q10x - (mu**2 - 1.0) * q01x)
        return Dx + cx, Dy + cy

    return ConnectionField(field, "general", mu, A_eval, real=False)


# ----------------------------------------------------------------------
# curvature and holonomy
# ----------------------------------------------------------------------


def curvature_field(conn):
    """Pointwise ||dx A_y - dy A_x + [A_x, A_y]||, frame-normalized."""
    field = conn.field
    if conn.mode == "analytic":
        g = conn.grid
        U, V = np.meshgrid(g.us, g.vs, indexing="ij")
        dAy_dx = meta_deriv(lambda a, b: conn.A_eval(a, b)[1], U, V, 1, 0)
        dAx_dy = meta_deriv(lambda a, b: conn.A_eval(a, b)[0], U, V, 0, 1)
    else:
        Ax, Ay = conn.grid_A()
        g = conn.grid
        dAy_dx = grid_deriv(Ay, 0, g.hx, 1, g.periodic_x)
        dAx_dy = grid_deriv(Ax, 1, g.hy, 1, g.periodic_y)
    Ax, Ay = conn.grid_A()
    F = dAy_dx - dAx_dy + Ax @ Ay - Ay @ Ax
    piS = field.grid_proj["pi_S"]
    scale = np.maximum(1.0, (frobenius(piS) / 2.0) ** 2)
    return frobenius(F) / scale


def _edge_transport(A_eval, F, p0, direction, length, nsub):
    """RK4 transport of F along a straight chart segment.

    F: (..., d, m) frame/vector stack; p0: (U, V) arrays broadcasting with
    F's leading axes; direction: unit chart vector (du, dv).
    """
    du, dv = direction
    h = length / nsub
    U = np.asarray(p0[0], dtype=float)
    V = np.asarray(p0[1], dtype=float)

    def rhs(Uq, Vq, Fq):
        Ax, Ay = A_eval(Uq, Vq)
        Adir = du * Ax + dv * Ay
        return -np.einsum("...ij,...jm->...im", Adir, Fq)

    for k in range(nsub):
        U0 = U + k * h * du
        V0 = V + k * h * dv
        Um = U0 + 0.5 * h * du
        Vm = V0 + 0.5 * h * dv
        U1 = U0 + h * du
        V1 = V0 + h * dv
        k1 = rhs(U0, V0, F)
        k2 = rhs(Um, Vm, F + 0.5 * h * k1)
        k3 = rhs(Um, Vm, F + 0.5 * h * k2)
        k4 = rhs(U1, V1, F + h * k3)
        F = F + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return F


def transport_sweep(A_eval, F0, start, step_uv, nsteps, nsub=4, reorth_every=0, n=None):
    """Transport along a lattice line, returning the frame at every node.

    All RK4 stage abscissae lie on the half-substep lattice, so the
    connection coefficients for the whole sweep are evaluated in a single
    batched call.  F0: (batch..., d, m); start: (U, V) arrays broadcasting
    with the batch; step_uv: chart increment per node.  Returns a list of
    nsteps+1 frames and the re-orthonormalization drift.
    """
    du, dv = step_uv
    npts = 2 * nsteps * nsub + 1
    ts = np.arange(npts) / (2.0 * nsub)
    U0 = np.asarray(start[0], dtype=float)
    V0 = np.asarray(start[1], dtype=float)
    U = U0[None, ...] + du * ts[(slice(None),) + (None,) * U0.ndim]
    V = V0[None, ...] + dv * ts[(slice(None),) + (None,) * V0.ndim]
    U, V = np.broadcast_arrays(U, V)
    Ax, Ay = A_eval(U, V)
    Adir = du * Ax + dv * Ay  # (npts, batch..., d, d)
    h = 1.0 / nsub
    F = F0
    out = [F0]
    drift = 0.0
    for k in range(nsteps):
        for m in range(nsub):
            i0 = 2 * (k * nsub + m)
            A0, Am, A1 = Adir[i0], Adir[i0 + 1], Adir[i0 + 2]
            k1 = -np.einsum("...ij,...jm->...im", A0, F)
            k2 = -np.einsum("...ij,...jm->...im", Am, F + 0.5 * h * k1)
            k3 = -np.einsum("...ij,...jm->...im", Am, F + 0.5 * h * k2)
            k4 = -np.einsum("...ij,...jm->...im", A1, F + h * k3)
            F = F + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if reorth_every and (k + 1) % reorth_every == 0 and F.shape[-1] == F.shape[-2]:
            F, dr = minkowski.signature_gram_schmidt(F, n)
            drift = max(drift, dr)
        out.append(F)
    return out, drift


def plaquette_holonomy(conn, cell, nsub=8):
    """Path-ordered transport around one grid cell; log-norm/h^2 estimates
    the local curvature."""
    g = conn.grid
    i, j = cell
    if not (0 <= i < g.nx and 0 <= j < g.ny):
        raise WillmoreLabError("cell outside grid")
    u0, v0 = g.us[i], g.vs[j]
    d = conn.dim_n + 2
    F = np.eye(d, dtype=complex)
    pts = [(u0, v0), (u0 + g.hx, v0), (u0 + g.hx, v0 + g.hy), (u0, v0 + g.hy), (u0, v0)]
    for (ua, va), (ub, vb) in zip(pts[:-1], pts[1:]):
        du, dv = ub - ua, vb - va
        ln = float(np.hypot(du, dv))
        F = _edge_transport(conn.A_eval, F, (np.asarray(ua), np.asarray(va)), (du / ln, dv / ln), ln, nsub)
    return F


def plaquette_curvature_estimate(conn, cell, nsub=8):
    H = plaquette_holonomy(conn, cell, nsub)
    L = logm(np.asarray(H, dtype=complex))
    piS = conn.field.projector_pack(
        np.asarray(conn.grid.us[cell[0]]), np.asarray(conn.grid.vs[cell[1]]), derivs=False
    )["pi_S"]
    scale = max(1.0, (frobenius(piS) / 2.0) ** 2)
    return float(np.linalg.norm(L, "fro")) / (conn.grid.hx * conn.grid.hy) / scale


class ParallelFrame:
    """Grid of parallel orthonormal frames F with F(basepoint) = identity.

    Transport runs along the base row and then up/down each column; the
    audit transports column-first and reports the worst difference.
    Periodic monodromy defects are diagnostics, not errors.
    """

    def __init__(self, conn, F, basepoint, diagnostics):
        self.conn = conn
        self.F = F
        self.basepoint = basepoint
        self.diagnostics = diagnostics
        self.grid = conn.grid
        self._interp = None

    def inverse_at_nodes(self):
        return np.linalg.inv(self.F)

    def eval(self, U, V, nsub=8):
        """Frame at arbitrary points: RK4 from the nearest node anchor."""
        g = self.grid
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        i = np.clip(np.rint((U - g.x0) / g.hx).astype(int), 0, g.nx - 1)
        j = np.clip(np.rint((V - g.y0) / g.hy).astype(int), 0, g.ny - 1)
        i = np.mod(i, g.nx) if g.periodic_x else i
        j = np.mod(j, g.ny) if g.periodic_y else j
        Ua = g.x0 + i * g.hx
        Va = g.y0 + j * g.hy
        F = self.F[i, j]
        # two-leg path anchor -> (U, Va) -> (U, V)
        du = U - Ua
        with np.errstate(invalid="ignore"):
            F = _segment(self.conn.A_eval, F, (Ua, Va), (du, np.zeros_like(du)), nsub)
            dv = V - Va
            F = _segment(self.conn.A_eval, F, (U, Va), (np.zeros_like(dv), dv), nsub)
        return F


def _segment(A_eval, F, p0, duv, nsub):
    """Straight transport by a per-point displacement (batched lengths)."""
    du, dv = duv
    U = np.asarray(p0[0], dtype=float)
    V = np.asarray(p0[1], dtype=float)
    h = 1.0 / nsub

    def rhs(t, Fq):
        Uq = U + t * du
        Vq = V + t * dv
        Ax, Ay = A_eval(Uq, Vq)
        Adir = du[..., None, None] * Ax + dv[..., None, None] * Ay
        return -np.einsum("...ij,...jm->...im", Adir, Fq)

    for k in range(nsub):
        t0 = k * h
        k1 = rhs(t0, F)
        k2 = rhs(t0 + 0.5 * h, F + 0.5 * h * k1)
        k3 = rhs(t0 + 0.5 * h, F + 0.5 * h * k2)
        k4 = rhs(t0 + h, F + h * k3)
        F = F + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return F


def parallel_frame(conn, basepoint=None, nsub=4, tol_flat=None, audit=True, check_flat=True):
    """Parallel orthonormal frame field of a flat metric connection.

    Refuses (NotFlat) when the curvature residual exceeds tol_flat; raises
    PathDependence when the column-first audit exceeds 10x the expected
    integrator tolerance.  Signature-aware re-orthonormalization runs
    every REORTH_EVERY transported edges and the accumulated drift is
    reported in the diagnostics.
    """
    g = conn.grid
    if basepoint is None:
        basepoint = (g.nx // 2, g.ny // 2)
    tol_flat = _tol_flat_for(conn, tol_flat)
    if check_flat:
        curv = curvature_field(conn)
        cmax = float(curv.max())
        if cmax > tol_flat:
            raise NotFlat(f"max curvature {cmax:.3e} > {tol_flat:.1e}", max_curvature=cmax)
    else:
        cmax = None
    i0, j0 = basepoint
    d = conn.dim_n + 2
    dtype = float if conn.real else complex
    n = conn.dim_n

    F = np.zeros((g.nx, g.ny, d, d), dtype=dtype)
    eye = np.eye(d, dtype=dtype)
    drift = 0.0
    u0, v0 = g.us[i0], g.vs[j0]

    # base row, both directions
    row = np.zeros((g.nx, d, d), dtype=dtype)
    row[i0] = eye
    for direction in (+1, -1):
        nsteps = (g.nx - 1 - i0) if direction > 0 else i0
        if nsteps == 0:
            continue
        frames, dr = transport_sweep(
            conn.A_eval,
            eye.copy(),
            (np.asarray(u0), np.asarray(v0)),
            (direction * g.hx, 0.0),
            nsteps,
            nsub,
            reorth_every=REORTH_EVERY,
            n=n,
        )
        drift = max(drift, dr)
        idx = i0 + direction * np.arange(1, nsteps + 1)
        for kk, i in enumerate(idx):
            row[i] = frames[kk + 1]
    F[:, j0] = row

    # columns, batched over all i, both directions
    us = g.us
    for direction in (+1, -1):
        nsteps = (g.ny - 1 - j0) if direction > 0 else j0
        if nsteps == 0:
            continue
        frames, dr = transport_sweep(
            conn.A_eval,
            row.copy(),
            (us, np.full_like(us, v0)),
            (0.0, direction * g.hy),
            nsteps,
            nsub,
            reorth_every=REORTH_EVERY,
            n=n,
        )
        drift = max(drift, dr)
        idx = j0 + direction * np.arange(1, nsteps + 1)
        for kk, j in enumerate(idx):
            F[:, j] = frames[kk + 1]

    diagnostics = {"max_curvature": cmax, "reorth_drift": float(drift)}

    if audit:
        # column-first then row to the far corner
        ii, jj = (g.nx - 1, g.ny - 1)
        fa_col, _ = transport_sweep(
            conn.A_eval, eye.copy(), (np.asarray(u0), np.asarray(v0)), (0.0, g.hy), g.ny - 1 - j0, nsub
        )
        fa_row, _ = transport_sweep(
            conn.A_eval,
            fa_col[-1],
            (np.asarray(u0), np.asarray(g.vs[jj])),
            (g.hx, 0.0),
            g.nx - 1 - i0,
            nsub,
        )
        defect = float(np.abs(fa_row[-1] - F[ii, jj]).max())
        diagnostics["path_defect"] = defect

    # periodic closure (monodromy) diagnostics
    if g.periodic_x:
        Fk = _edge_transport(
            conn.A_eval, F[g.nx - 1, j0], (np.asarray(g.us[-1]), np.asarray(v0)), (1.0, 0.0), g.hx, nsub
        )
        M = Fk @ np.linalg.inv(F[0, j0])
        diagnostics["monodromy_x"] = float(np.abs(M - eye).max())
    if g.periodic_y:
        Fk = _edge_transport(
            conn.A_eval, F[i0, g.ny - 1], (np.asarray(u0), np.asarray(g.vs[-1])), (0.0, 1.0), g.hy, nsub
        )
        M = Fk @ np.linalg.inv(F[i0, 0])
        diagnostics["monodromy_y"] = float(np.abs(M - eye).max())

    ortho = minkowski.orthogonality_residual(F[::max(1, g.nx // 8), ::max(1, g.ny // 8)], n).max()
    diagnostics["orthogonality"] = float(ortho)
    return ParallelFrame(conn, F, basepoint, diagnostics)


# ----------------------------------------------------------------------
# deformations
# ----------------------------------------------------------------------


def _gauge_jets(lift, conn, order=3):
    """Jets of T_(a,b) with d^a_x d^b_y (F^-1 sigma) = F^-1 T_(a,b).

    T_(0,0) = sigma and T extends by the gauged derivative
    T_(a+1,b) = (d_x + A_x) T_(a,b); evaluated on the grid.
    """
    g = lift.grid
    U, V = np.meshgrid(g.us, g.vs, indexing="ij")
    sig = lift.jets(U, V, order)
    Aj = conn.A_jets(U, V, order - 1)

    def matv(A, v):
        return np.einsum("...ij,...j->...i", A, v)

    # jet dicts for T_(a,b) as functions of position, tracked to the
    # remaining derivative budget
    def gauged_x(Tjet, budget):
        out = {}
        for a, b in jet_keys(budget):
            term = Tjet[(a + 1, b)]
            from math import comb

            for i in range(a + 1):
                for k in range(b + 1):
                    c = comb(a, i) * comb(b, k)
                    term = term + c * matv(Aj[(i, k)][0], Tjet[(a - i, b - k)])
            out[(a, b)] = term
        return out

    def gauged_y(Tjet, budget):
        out = {}
        for a, b in jet_keys(budget):
            term = Tjet[(a, b + 1)]
            from math import comb

            for i in range(a + 1):
                for k in range(b + 1):
                    c = comb(a, i) * comb(b, k)
                    term = term + c * matv(Aj[(i, k)][1], Tjet[(a - i, b - k)])
            out[(a, b)] = term
        return out

    T = {(0, 0): {k: sig[k].astype(complex) for k in jet_keys(order)}}
    result = {(0, 0): T[(0, 0)][(0, 0)]}
    for total in range(1, order + 1):
        for a in range(total + 1):
            b = total - a
            if a > 0:
                prev = T[(a - 1, b)]
                cur = gauged_x(prev, order - total)
            else:
                prev = T[(a, b - 1)]
                cur = gauged_y(prev, order - total)
            T[(a, b)] = cur
            result[(a, b)] = cur[(0, 0)]
    return result


def _deformed_lift(lift, conn, frame, name, tol_real=1e-7):
    """Assemble the transformed surface F^-1 sigma with exact node jets.

    The output grid loses its periodicity flags: the trivializing frame
    has monodromy, so the transformed lift is a universal-cover patch.
    """
    Tj = _gauge_jets(lift, conn, order=3)
    Finv = frame.inverse_at_nodes()
    jets = {k: np.einsum("...ij,...j->...i", Finv, v) for k, v in Tj.items()}
    if conn.real:
        imax = max(np.abs(v.imag).max() for v in jets.values())
        if imax > tol_real:
            raise RealityLoss(f"deformed lift has imaginary part {imax:.2e}")
        jets = {k: v.real for k, v in jets.items()}
    # unit-sphere-section gauge: bounded frame scales for all downstream work
    from ._jets import jdiv

    last = {k: v[..., -1:] for k, v in jets.items()}
    jets = jdiv(jets, last, 3)
    from dataclasses import replace

    grid = replace(lift.grid, periodic_x=False, periodic_y=False)
    return SurfaceLift(
        lift.dim_n,
        grid,
        mode="sampled",
        name=name,
        params=lift.params,
        spaceform=None,
        grid_jets=jets,
        max_order=3,
    )


def _refuse_degenerate(lift):
    flag, rank = sphere_containment(lift)
    if rank <= 4 and lift.dim_n + 2 > 4:
        raise SphereContained(
            f"surface span rank {rank}: contained in a 2-sphere; transformations refuse it"
        )


def spectral_deform(lift, field, q, lam, nsub=4, tol_flat=None):
    """Constrained Willmore spectral deformation at unit lambda.

    Trivializes d^lambda_q with F(basepoint) = identity and returns the
    canonical Moebius representative sigma_lambda = F^-1 sigma together
    with transport diagnostics.  The conformal class is preserved exactly
    (d^lambda_q sigma = d sigma on sections of Lambda).
    """
    lam = complex(lam)
    if lam == 0:
        raise WillmoreLabError("lambda = 0 rejected")
    _refuse_degenerate(lift)
    if abs(abs(lam) - 1.0) > 1e-12:
        raise RealityLoss("spectral deformation needs |lambda| = 1 for a real surface")
    conn = build_dlambda_q(field, q, lam)
    frame = parallel_frame(conn, nsub=nsub, tol_flat=tol_flat)
    new = _deformed_lift(lift, conn, frame, f"{lift.name}_spec({lam:.3g})")
    return new, {"frame": frame, "connection": conn, **frame.diagnostics}


def isothermic_deform(lift, field, eta, t, nsub=4, tol_flat=None):
    """Isothermic (t, eta)-transformation via the flat family d + t eta."""
    _refuse_degenerate(lift)
    conn = build_dt_eta(field, eta, float(t))
    frame = parallel_frame(conn, nsub=nsub, tol_flat=tol_flat)
    new = _deformed_lift(lift, conn, frame, f"{lift.name}_iso({t:.3g})")
    return new, {"frame": frame, "connection": conn, **frame.diagnostics}


def cmc_classical_deform(lift, field, q_inf, lam, nsub=4, tol_flat=None):
    """Classical CMC spectral deformation (preserves space-form and H)."""
    _refuse_degenerate(lift)
    conn = build_dlambda_cmc(field, q_inf, lam)
    frame = parallel_frame(conn, nsub=nsub, tol_flat=tol_flat)
    new = _deformed_lift(lift, conn, frame, f"{lift.name}_cmc({lam:.3g})")
    return new, {"frame": frame, "connection": conn, **frame.diagnostics}
