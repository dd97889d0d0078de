"""Backlund transformation of constrained Willmore surfaces by dressing.

The two-step factor r*(lambda) = p_(alpha, Ltilde) q_(beta, Lbeta) with the
reality parameters beta = conj(alpha)^-1, L^beta = conj(L^alpha) acts on
the (1,0)/(0,1) plane pair; the transformed surface is the pointwise
intersection of the transformed planes.  All dressing operations run on
the largest axis-aligned subgrid where the non-degeneracy margins hold.
"""

from __future__ import annotations

import numpy as np

from . import minkowski
from ._stencil import central_offsets, fd_weights
from .congruence import CongruenceField, central_sphere_congruence
from .connections import build_dlambda_q, curvature_field, transport_sweep, _segment, _tol_flat_for
from .errors import (
    DegeneracyHit,
    DeterminantImbalance,
    FitResidualTooLarge,
    ImmersionFailure,
    NotFlat,
    PreconditionFail,
    RealityLoss,
    SphereContained,
    WillmoreLabError,
)
from .immersion import ChartGrid, SurfaceLift, sphere_containment
from .multiplier import ConservedQuantity, Multiplier

TOL_DEG = 1e-6
TOL_ORTH_SEED = 1e-9
STENCIL_H = 0.01
STENCIL_ORDER = 6


# ----------------------------------------------------------------------
# seeds
# ----------------------------------------------------------------------


def _real_on_basis(field, u0, v0):
    """Real pseudo-orthonormal basis (E0 timelike; e1, e2, e3 spacelike) of S
    and the unit normal direction(s) of S_perp at the basepoint."""
    U = np.asarray(u0, dtype=float)
    V = np.asarray(v0, dtype=float)
    j = field.lift.jets(U, V, 2)
    f0 = j[(0, 0)]
    f1 = j[(1, 0)]
    f2 = j[(0, 1)]
    f3 = j[(2, 0)] + j[(0, 2)]
    e1 = f1 / np.sqrt(minkowski.inner(f1, f1))
    e2 = f2 - minkowski.inner(f2, e1) * e1
    e2 = e2 / np.sqrt(minkowski.inner(e2, e2))
    # remaining (1,1)-plane spanned by the null sigma and f3 component
    n1 = f0
    n2 = f3 - minkowski.inner(f3, e1) * e1 - minkowski.inner(f3, e2) * e2
    g11 = minkowski.inner(n1, n1)
    g12 = minkowski.inner(n1, n2)
    g22 = minkowski.inner(n2, n2)
    G2 = np.array([[g11, g12], [g12, g22]])
    w, vecs = np.linalg.eigh(G2)
    comb = lambda c: c[0] * n1 + c[1] * n2
    es = comb(vecs[:, 1]) / np.sqrt(abs(w[1]))
    et = comb(vecs[:, 0]) / np.sqrt(abs(w[0]))
    assert w[0] < 0 < w[1]
    return et, e1, e2, es


def seed_null_line(field, alpha, basepoint=None, orthogonal_to=None, cmc=None, t=0.0):
    """Seed vector l = v + w of a dressing null line at the basepoint.

    v in S^C with (v, v) != 0 and (v, conj v) = 0; w in S_perp^C with
    (w, w) = -(v, v); then (rho l, l) = 2 (v, v) != 0.  With `cmc` data
    given, the seed additionally satisfies (p_inf^t(alpha), l) = 0, which
    the conserved-quantity transport requires.
    """
    alpha = complex(alpha)
    if abs(alpha) < 1e-12 or abs(abs(alpha) - 1.0) < 1e-9:
        raise WillmoreLabError("alpha must avoid 0 and the unit circle")
    g = field.grid
    if basepoint is None:
        basepoint = (g.nx // 2, g.ny // 2)
    u0 = np.asarray(g.us[basepoint[0]])
    v0 = np.asarray(g.vs[basepoint[1]])
    et, e1, e2, es = _real_on_basis(field, u0, v0)
    piP = field.projector_pack(u0, v0, derivs=False)["pi_perp"].real
    if cmc is None:
        # generic lemma seed
        v = et + 1j * e1
        probe = np.zeros(field.dim_n + 2)
        probe[0] = 1.0
        xi = piP @ probe
        xi = xi / np.sqrt(minkowski.inner(xi, xi))
        w = np.sqrt(2.0 + 0j) * xi
        l = v + w
        vv = minkowski.inner(v, v)
    else:
        H = cmc["H"]
        if H < 1e-10:
            raise WillmoreLabError("constrained seed needs H != 0")
        N0 = cmc["N"](u0, v0)
        E0 = (cmc["spaceform"].array - H * N0) / H  # v_inf^T / H, timelike unit
        # spacelike units orthogonal to E0
        b1 = e1 - minkowski.inner(e1, E0) * E0 / minkowski.inner(E0, E0)
        b1 = b1 / np.sqrt(minkowski.inner(b1, b1))
        b2 = e2 - minkowski.inner(e2, E0) * E0 / minkowski.inner(E0, E0)
        b2 = b2 - minkowski.inner(b2, b1) * b1
        b2 = b2 / np.sqrt(minkowski.inner(b2, b2))
        gfac = 0.5 * ((H - 1j * t) / alpha + alpha * (H + 1j * t))
        k = (H / gfac) ** 2
        if abs(k.imag) > 1e-12 or not (0 < k.real < 2):
            raise WillmoreLabError(f"constrained seed needs 0 < k < 2 real, got {k}")
        k = k.real
        a = E0 + np.sqrt(1.0 - 0.5 * k) * b1
        b = np.sqrt(0.5 * k) * b2
        v = a + 1j * b
        c = H / gfac
        l = v + c * N0
        vv = minkowski.inner(v, v)
    rho = 2.0 * field.projector_pack(u0, v0, derivs=False)["pi_S"] - np.eye(field.dim_n + 2)
    margin = minkowski.inner(rho @ l, l)
    diag = {
        "nullity": float(abs(minkowski.inner(l, l))),
        "margin": complex(margin),
        "margin_vs_lemma": float(abs(margin - 2 * vv)),
    }
    if orthogonal_to is not None:
        diag["orthogonality"] = float(abs(minkowski.inner(orthogonal_to, l)))
    return l / np.linalg.norm(l), diag


# ----------------------------------------------------------------------
# parallel null line fields
# ----------------------------------------------------------------------


class NullLineField:
    """d^(alpha,q)-parallel null line over the grid, margins monitored."""

    def __init__(self, conn, l_grid, alpha, basepoint, diagnostics):
        self.conn = conn
        self.l = l_grid
        self.alpha = alpha
        self.basepoint = basepoint
        self.diagnostics = diagnostics
        self.grid = conn.grid

    def conj_field(self):
        return np.conj(self.l)

    def eval(self, U, V, nsub=4):
        """Line at arbitrary points by short anchored transport."""
        g = self.grid
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        i = np.clip(np.rint((U - g.x0) / g.hx).astype(int), 0, g.nx - 1)
        j = np.clip(np.rint((V - g.y0) / g.hy).astype(int), 0, g.ny - 1)
        Ua = g.x0 + i * g.hx
        Va = g.y0 + j * g.hy
        l = self.l[i, j][..., None]
        du = U - Ua
        dv = V - Va
        l = _segment(self.conn.A_eval, l, (Ua, Va), (du, np.zeros_like(du)), nsub)
        l = _segment(self.conn.A_eval, l, (U, Va), (np.zeros_like(dv), dv), nsub)
        l = l[..., 0]
        return l / np.linalg.norm(l, axis=-1, keepdims=True)


def transport_null_line(seed, conn, basepoint=None, nsub=8, tol_flat=None):
    """Extend the seed to a d^(alpha,q)-parallel null line field.

    Transport by the metric connection preserves nullity; the spanning
    vector is renormalized at every node.  The non-degeneracy margin
    |(rho l, l)| / |l|^2 is recorded for the domain restriction.
    """
    g = conn.grid
    if basepoint is None:
        basepoint = (g.nx // 2, g.ny // 2)
    tol = _tol_flat_for(conn, tol_flat)
    curv = curvature_field(conn)
    if curv.max() > tol:
        raise NotFlat(f"d^(alpha,q) curvature {curv.max():.3e} > {tol:.2e}", max_curvature=float(curv.max()))
    i0, j0 = basepoint
    d = conn.dim_n + 2
    L = np.zeros((g.nx, g.ny, d), dtype=complex)
    u0, v0 = g.us[i0], g.vs[j0]

    def norm(v):
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    row = np.zeros((g.nx, d), dtype=complex)
    row[i0] = norm(np.asarray(seed, dtype=complex))
    for direction in (+1, -1):
        nsteps = (g.nx - 1 - i0) if direction > 0 else i0
        if nsteps == 0:
            continue
        frames, _ = transport_sweep(
            conn.A_eval,
            row[i0][:, None],
            (np.asarray(u0), np.asarray(v0)),
            (direction * g.hx, 0.0),
            nsteps,
            nsub,
        )
        idx = i0 + direction * np.arange(1, nsteps + 1)
        for kk, i in enumerate(idx):
            row[i] = norm(frames[kk + 1][..., 0])
    L[:, j0] = row
    for direction in (+1, -1):
        nsteps = (g.ny - 1 - j0) if direction > 0 else j0
        if nsteps == 0:
            continue
        frames, _ = transport_sweep(
            conn.A_eval,
            row[:, :, None],
            (g.us, np.full_like(g.us, v0)),
            (0.0, direction * g.hy),
            nsteps,
            nsub,
        )
        idx = j0 + direction * np.arange(1, nsteps + 1)
        for kk, j in enumerate(idx):
            L[:, j] = norm(frames[kk + 1][..., 0])

    U, V = np.meshgrid(g.us, g.vs, indexing="ij")
    rho = conn.field.rho(U, V)
    nullity = np.abs(minkowski.inner(L, L))
    margin = np.abs(minkowski.inner(np.einsum("...ij,...j->...i", rho, L), L))
    diagnostics = {
        "nullity_max": float(nullity.max()),
        "margin_min": float(margin.min()),
        "margin_basepoint": float(margin[i0, j0]),
        "margin_field": margin,
    }
    return NullLineField(conn, L, conn.param, basepoint, diagnostics)


# ----------------------------------------------------------------------
# dressing factors
# ----------------------------------------------------------------------


def _line_projectors(l, rho_l):
    """pi_L, pi_rhoL for the splitting C^(n+2) = L + rho L + (L + rho L)^perp."""
    s = minkowski.inner(l, rho_l)
    g = minkowski.metric_signs(l.shape[-1] - 2)
    gl = l * g
    grl = rho_l * g
    piL = np.einsum("...i,...j->...ij", l, grl) / s[..., None, None]
    piR = np.einsum("...i,...j->...ij", rho_l, gl) / s[..., None, None]
    return piL, piR


def _pq_factor(lam, alpha, piL, piR, kind):
    """p_(alpha,L)(lambda) or q_(alpha,L)(lambda) from the line projectors."""
    eye = np.eye(piL.shape[-1])
    if kind == "p":
        if lam == np.inf:
            cL, cR = -1.0, -1.0
        else:
            cL = (alpha - lam) / (alpha + lam)
            cR = 1.0 / cL
    else:
        if lam == np.inf:
            cL, cR = 1.0, 1.0
        else:
            cL = (lam - alpha) / (lam + alpha)
            cR = 1.0 / cL
    return eye + (cL - 1.0) * piL + (cR - 1.0) * piR


class DressingFactors:
    """Evaluations of the two-step dressing factor r*(lambda).

    Carries the grid fields of r*(0), r*(1)^-1, r*(infty) plus pointwise
    evaluation at arbitrary lambda, the reality conjugator K and the
    margin/determinant diagnostics.
    """

    def __init__(self, Lfield, field, alpha):
        self.Lfield = Lfield
        self.field = field
        self.alpha = complex(alpha)
        self.beta = 1.0 / np.conj(self.alpha)
        g = field.grid
        U, V = np.meshgrid(g.us, g.vs, indexing="ij")
        self._build(U, V)

    def _pack(self, U, V, l):
        rho = self.field.rho(U, V).real
        lb = np.conj(l)
        rho_lb = np.einsum("...ij,...j->...i", rho, lb)
        piLb, piRb = _line_projectors(lb, rho_lb)
        qa = _pq_factor(self.alpha, self.beta, piLb, piRb, "q")
        lt = np.einsum("...ij,...j->...i", qa, l)
        lt = lt / np.linalg.norm(lt, axis=-1, keepdims=True)
        rho_lt = np.einsum("...ij,...j->...i", rho, lt)
        piLt, piRt = _line_projectors(lt, rho_lt)
        margin2 = np.abs(minkowski.inner(rho_lt, lt))
        return {
            "rho": rho,
            "piLb": piLb,
            "piRb": piRb,
            "piLt": piLt,
            "piRt": piRt,
            "lt": lt,
            "margin2": margin2,
        }

    def _build(self, U, V):
        l = self.Lfield.l
        pk = self._pack(U, V, l)
        self.pack = pk
        self.r0 = _pq_factor(0.0, self.beta, pk["piLb"], pk["piRb"], "q")
        self.rinf = _pq_factor(np.inf, self.alpha, pk["piLt"], pk["piRt"], "p")
        r1 = _pq_factor(1.0, self.alpha, pk["piLt"], pk["piRt"], "p") @ _pq_factor(
            1.0, self.beta, pk["piLb"], pk["piRb"], "q"
        )
        self.r1 = r1
        self.r1inv = _pq_factor(-1.0, self.beta, pk["piLb"], pk["piRb"], "q") @ _pq_factor(
            -1.0, self.alpha, pk["piLt"], pk["piRt"], "p"
        )
        # reality conjugator K = q_(beta, Lb)(0) q_(beta, conj Ltilde)(0)
        lbh = np.conj(pk["lt"])
        rho_lbh = np.einsum("...ij,...j->...i", pk["rho"], lbh)
        piLh, piRh = _line_projectors(lbh, rho_lbh)
        self.K = self.r0 @ _pq_factor(0.0, self.beta, piLh, piRh, "q")

    def margins(self):
        m1 = self.Lfield.diagnostics["margin_field"]
        return m1, self.pack["margin2"]

    def at(self, lam, U=None, V=None):
        """r*(lambda) on the grid (or at supplied points)."""
        if U is None:
            pk = self.pack
        else:
            pk = self._pack(U, V, self.Lfield.eval(U, V))
        return _pq_factor(lam, self.alpha, pk["piLt"], pk["piRt"], "p") @ _pq_factor(
            lam, self.beta, pk["piLb"], pk["piRb"], "q"
        )

    def identity_residuals(self, lam=0.3 + 0.1j, domain=None):
        """Factor-inverse, twisting, reality and determinant-balance identities.

        The reality chain is conj(r*(1)^-1) = r*(1)^-1 K together with
        conj(K) K = I and conj(r*(0)) = K^-1 r*(infty); these imply the
        reality of Lambda* and q*.  (The raw K itself is a product of two
        non-commuting plane reflections and is not an involution.)
        Residuals are normalized by the local frame scale and measured on
        the margin-restricted domain.
        """
        from .congruence import frobenius

        pk = self.pack
        eye = np.eye(self.field.dim_n + 2)
        piS = self.field.grid_proj["pi_S"]
        scale = np.maximum(1.0, (frobenius(piS) / 2.0) ** 2)
        if domain is None:
            sl = (slice(None), slice(None))
        else:
            i0, i1, j0, j1 = domain
            sl = (slice(i0, i1), slice(j0, j1))

        def nres(M):
            return float((np.abs(M[sl]).max(axis=(-1, -2)) / scale[sl]).max())

        p_l = _pq_factor(lam, self.alpha, pk["piLt"], pk["piRt"], "p")
        p_ml = _pq_factor(-lam, self.alpha, pk["piLt"], pk["piRt"], "p")
        inv = nres(p_l @ p_ml - eye)
        rho = pk["rho"]
        tw_p = nres(rho @ p_l @ rho - p_ml)
        r_l = self.at(lam)
        r_ml = self.at(-lam)
        tw_r = nres(rho @ r_l @ rho - r_ml)
        q_inf = _pq_factor(np.inf, self.beta, pk["piLb"], pk["piRb"], "q")
        q_inf_res = nres(q_inf - eye)
        K = self.K
        k_conj_inv = nres(np.conj(K) @ K - eye)
        conj_r1inv = nres(np.conj(self.r1inv) - self.r1inv @ K)
        conj_r0 = nres(np.conj(self.r0) - np.linalg.inv(K) @ self.rinf)
        det0 = _det_on_S(self.field, self.r0)
        detinf = _det_on_S(self.field, self.rinf)
        det_bal = float(np.abs(det0 - detinf)[sl].max())
        return {
            "factor_inverse": inv,
            "twisted_p": tw_p,
            "twisted_r": tw_r,
            "q_at_infinity": q_inf_res,
            "K_conj_inverse": k_conj_inv,
            "conj_r1inv": conj_r1inv,
            "conj_r0": conj_r0,
            "det_balance": det_bal,
        }


def _det_on_S(field, T):
    """det of T restricted to S, via a pseudo-orthonormal frame of S."""
    g = field.grid
    U, V = np.meshgrid(g.us, g.vs, indexing="ij")
    j = field.lift.jets(U, V, 2)
    f0, f1, f2 = j[(0, 0)], j[(1, 0)], j[(0, 1)]
    f3 = j[(2, 0)] + j[(0, 2)]
    B = np.stack([f0, f1, f2, f3], axis=-1).astype(complex)
    gm = minkowski.metric_signs(field.dim_n)
    G = np.einsum("...im,i,...ik->...mk", B, gm, B)
    TB = T @ B
    coeff = np.linalg.solve(G, np.einsum("...im,i,...ik->...mk", B, gm, TB))
    return np.linalg.det(coeff)


def build_factors(Lfield, field, tol_deg=TOL_DEG):
    """Two-step dressing factors with the reality parameters.

    Points where either margin drops below tol_deg are degenerate; the
    working domain additionally keeps a comfortable fraction of the
    basepoint margin so factor norms stay bounded.  The restricted domain
    (largest margin-true rectangle) lives in `factors.domain`.
    """
    f = DressingFactors(Lfield, field, Lfield.alpha)
    m1, m2 = f.margins()
    ok = (m1 > tol_deg) & (m2 > tol_deg)
    if not ok.any():
        raise DegeneracyHit("margin conditions fail everywhere", points=np.argwhere(~ok))
    i0, j0 = Lfield.basepoint
    quality = max(tol_deg, 0.05 * float(min(m1[i0, j0], m2[i0, j0])))
    ok_quality = (m1 > quality) & (m2 > quality)
    f.domain = largest_true_rectangle(ok_quality if ok_quality.any() else ok)
    f.margin_fraction = float(ok.mean())
    f.quality_fraction = float(ok_quality.mean())
    ids = f.identity_residuals(domain=f.domain)
    if ids["det_balance"] > 1e-6:
        raise DeterminantImbalance(f"det r(0)|S vs det r(inf)|S differ by {ids['det_balance']:.2e}")
    f.identities = ids
    return f


def largest_true_rectangle(mask):
    """Largest axis-aligned all-true rectangle (histogram method).

    Returns (i0, i1, j0, j1) slice bounds.
    """
    nx, ny = mask.shape
    heights = np.zeros(ny, dtype=int)
    best = (0, (0, 0, 0, 0))
    for i in range(nx):
        heights = np.where(mask[i], heights + 1, 0)
        stack = []
        j = 0
        while j <= ny:
            h = heights[j] if j < ny else 0
            start = j
            while stack and stack[-1][1] >= h:
                s, hh = stack.pop()
                area = hh * (j - s)
                if area > best[0]:
                    best = (area, (i - hh + 1, i + 1, s, j))
                start = s
            stack.append((start, h))
            j += 1
    return best[1]


# ----------------------------------------------------------------------
# the transform
# ----------------------------------------------------------------------


def _sign_continuation(field3):
    """Fix residual +-1 jumps of a realigned real field along rows/columns."""
    out = field3.copy()
    nx, ny = out.shape[0], out.shape[1]
    for i in range(1, nx):
        s = np.sign(np.einsum("...i,...i->...", out[i - 1], out[i]).real)
        s = np.where(s == 0, 1.0, s)
        out[i] = out[i] * s[..., None]
    for j in range(1, ny):
        s = np.sign(np.einsum("...i,...i->...", out[:, j - 1], out[:, j]).real)
        s = np.where(s == 0, 1.0, s)
        out[:, j] = out[:, j] * s[..., None]
    return out


def _transformed_line_at(factors, U, V, nlift):
    """Lambda* spanning vectors at arbitrary points (arbitrary phase)."""
    l = factors.Lfield.eval(U, V)
    pk = factors._pack(U, V, l)
    r0 = _pq_factor(0.0, factors.beta, pk["piLb"], pk["piRb"], "q")
    rinf = _pq_factor(np.inf, factors.alpha, pk["piLt"], pk["piRt"], "p")
    r1inv = _pq_factor(-1.0, factors.beta, pk["piLb"], pk["piRb"], "q") @ _pq_factor(
        -1.0, factors.alpha, pk["piLt"], pk["piRt"], "p"
    )
    j = nlift.jets(U, V, 1)
    s = j[(0, 0)].astype(complex)
    sz = 0.5 * (j[(1, 0)] - 1j * j[(0, 1)])
    szb = 0.5 * (j[(1, 0)] + 1j * j[(0, 1)])
    A = r1inv @ rinf
    B = r1inv @ r0
    P10 = np.stack(
        [np.einsum("...ij,...j->...i", A, s), np.einsum("...ij,...j->...i", A, sz)], axis=-2
    )
    P01 = np.stack(
        [np.einsum("...ij,...j->...i", B, s), np.einsum("...ij,...j->...i", B, szb)], axis=-2
    )
    lines, ok, gap = minkowski.batched_intersect_planes(P10, P01)
    return lines, ok, gap, (P10, P01)


def backlund_transform(lift, field, q, factors, stencil_h=STENCIL_H, tol_real=1e-6):
    """Backlund transform: surface Lambda*, multiplier q* and diagnostics.

    Lambda*^(1,0) = r*(1)^-1 r*(inf) Lambda^(1,0) intersected with
    Lambda*^(0,1) = r*(1)^-1 r*(0) Lambda^(0,1); jets of the new lift are
    assembled from anchored local stencils so later pipelines can run on
    the transform.  q* = Ad_(r*(1)^-1)(Ad_(r*(0)) q^(1,0) + Ad_(r*(inf)) q^(0,1)).
    """
    flag, rank = sphere_containment(lift)
    if rank <= 4 and lift.dim_n + 2 > 4:
        raise SphereContained("sphere-contained surface refused")
    g = field.grid
    i0, i1, j0, j1 = factors.domain
    sub = g.subgrid(i0, i1, j0, j1)
    U, V = np.meshgrid(sub.us, sub.vs, indexing="ij")
    nlift = field.nlift

    # stencil cluster for jets to order 3 (6th-order accuracy: transport
    # noise divided by h^3 stays below truncation)
    offsets = central_offsets(3, order=STENCIL_ORDER)
    offs = np.array(offsets, dtype=float)
    W = {dd: np.array(fd_weights(offsets, dd)) for dd in range(4)}
    OU = offs[:, None] * stencil_h
    OV = offs[None, :] * stencil_h
    Uc, Vc = np.broadcast_arrays(U[..., None, None] + OU, V[..., None, None] + OV)
    lines, ok, gap, planes = _transformed_line_at(factors, Uc, Vc, nlift)
    mid = len(offsets) // 2

    # gauge: align every cluster point against its center, then rotate the
    # whole cluster so the center's largest component is real positive
    center = lines[..., mid, mid, :][..., None, None, :]
    ip = np.einsum("...i,...i->...", np.conj(center), lines)
    phase = ip / np.maximum(np.abs(ip), 1e-300)
    lines = lines * np.conj(phase)[..., None]
    lead = np.argmax(np.abs(lines[..., mid, mid, :]), axis=-1, keepdims=True)
    ph = np.take_along_axis(lines[..., mid, mid, :], lead, axis=-1)[..., 0]
    lines = lines * (np.abs(ph) / ph)[..., None, None, None]

    imag_max = float(np.abs(lines[..., mid, mid, :].imag).max())
    if imag_max > tol_real:
        raise RealityLoss(f"Lambda* imaginary part {imag_max:.2e} after phase alignment")

    # jets from stencil weights
    jets = {}
    for a in range(4):
        for b in range(4 - a):
            wts = W[a][:, None] * W[b][None, :]
            jets[(a, b)] = np.einsum(
                "pq,...pqi->...i", wts, lines
            ) / (stencil_h**a * stencil_h**b)
    sigma0 = jets[(0, 0)]
    # canonical projective gauge: divide by the (never-zero) time coordinate.
    # The ratio is independent of the per-node phase/sign choices, lands in
    # the unit-sphere section (bounded frame scales) and keeps order-3 jets.
    from ._jets import jdiv

    last = {k: v[..., -1:] for k, v in jets.items()}
    jets = jdiv(jets, last, 3)
    jets = {k: v.real for k, v in jets.items()}

    # checks
    nullity = np.abs(minkowski.inner(sigma0, sigma0))
    span = np.stack([jets[(0, 0)], jets[(1, 0)], jets[(0, 1)]], axis=-2)
    sing = np.linalg.svd(span, compute_uv=False)
    immersed_ratio = sing[..., 2] / sing[..., 0]
    if immersed_ratio.min() < 1e-6:
        raise ImmersionFailure(f"rank Lambda*^(1) < 3 (ratio {immersed_ratio.min():.2e})")
    iso10 = _isotropy_residual(planes[0][..., mid, mid, :, :])
    iso01 = _isotropy_residual(planes[1][..., mid, mid, :, :])

    new_lift = SurfaceLift(
        lift.dim_n,
        sub,
        mode="sampled",
        name=lift.name + "_backlund",
        params={"alpha": factors.alpha},
        grid_jets=jets,
        max_order=3,
    )

    # transformed multiplier
    q10x, q01x = q.pieces(U, V)
    R1 = factors.r1inv[i0:i1, j0:j1] @ factors.r0[i0:i1, j0:j1]
    R2 = factors.r1inv[i0:i1, j0:j1] @ factors.rinf[i0:i1, j0:j1]
    qs10x = R1 @ q10x @ np.linalg.inv(R1)
    qs01x = R2 @ q01x @ np.linalg.inv(R2)
    qs_reality = float(np.abs(np.conj(qs10x) - qs01x).max())

    field_star = central_sphere_congruence(new_lift)
    qz_star, colin = _chart_scalar_from_pieces(field_star, qs10x)
    from ._stencil import GridInterpolator

    interp = GridInterpolator(sub, qz_star)
    q_star = Multiplier(lambda Uq, Vq: interp(Uq, Vq), field_star, label="q*")

    diagnostics = {
        "domain": factors.domain,
        "margin_fraction": factors.margin_fraction,
        "reality_max": imag_max,
        "nullity_max": float(nullity.max()),
        "rank1_gap_max": float(gap[..., mid, mid].max()),
        "intersection_ok_fraction": float(ok[..., mid, mid].mean()),
        "immersion_min_ratio": float(immersed_ratio.min()),
        "isotropy_10": iso10,
        "isotropy_01": iso01,
        "q_star_reality": qs_reality,
        "q_star_collinearity": colin,
        "q_star_forms": (qs10x, qs01x),
        **factors.identities,
    }
    return new_lift, q_star, field_star, diagnostics


def _isotropy_residual(P):
    GP = np.einsum("...mi,...ki->...mk", P, P * minkowski.metric_signs(P.shape[-1] - 2))
    return float(np.abs(GP).max())


def _chart_scalar_from_pieces(field_star, q10x):
    """(q*)^z from q*^(1,0): q*_(d_z) sigma_z = -(1/2) (q*)^z sigma."""
    nf = field_star.grid_nframe
    vec = np.einsum("...ij,...j->...i", q10x, nf["sz"])
    s = nf["s"]
    coef = np.einsum("...i,...i->...", np.conj(s), vec) / np.einsum("...i,...i->...", np.conj(s), s)
    resid = vec - coef[..., None] * s
    colin = float(
        (np.linalg.norm(resid, axis=-1) / np.maximum(np.abs(coef), 1e-300)).max()
    )
    return -2.0 * coef, colin


# ----------------------------------------------------------------------
# conserved quantities through the transform
# ----------------------------------------------------------------------


def transform_conserved(p, q_star, factors, field_star, tol_orth=TOL_ORTH_SEED, sample_lams=(0.37, 0.9j, -1.31, 2.2 + 0.4j)):
    """p*(lambda) = r*(1)^-1 r*(lambda) p(lambda) as a degree-1 Laurent fit.

    Requires p(alpha) perpendicular to L^alpha (checked; both sections are
    parallel for d^(alpha,q), so the basepoint check extends to the grid).
    Returns the fitted ConservedQuantity plus fit diagnostics.
    """
    g = factors.field.grid
    i0, i1, j0, j1 = factors.domain
    U, V = np.meshgrid(g.us[i0:i1], g.vs[j0:j1], indexing="ij")
    alpha = factors.alpha
    pa = p.at(alpha, U, V)
    lgrid = factors.Lfield.l[i0:i1, j0:j1]
    orth = np.abs(minkowski.inner(pa, lgrid))
    scale = np.sqrt(minkowski.norm2(pa) * minkowski.norm2(lgrid))
    rel = (orth / np.maximum(scale, 1e-300)).max()
    if rel > 1e-5:
        raise PreconditionFail(f"(p(alpha), l^alpha) = {rel:.3e} relative", measured=float(rel))

    lams = list(sample_lams)
    vals = []
    r1inv = factors.r1inv[i0:i1, j0:j1]
    for lam in lams:
        r = factors.at(lam)[i0:i1, j0:j1]
        vals.append(np.einsum("...ij,...j->...i", r1inv @ r, p.at(lam, U, V)))
    vals = np.stack(vals, axis=0)
    Vm = np.array([[1.0 / lam, 1.0, lam] for lam in lams], dtype=complex)
    pinv = np.linalg.pinv(Vm)
    coef = np.einsum("cs,s...->c...", pinv, vals)
    fit = np.einsum("sc,c...->s...", Vm, coef)
    fit_res = float(np.abs(fit - vals).max())
    if fit_res > 1e-4 * max(1.0, float(np.abs(vals).max())):
        raise FitResidualTooLarge("p* is not a degree-1 Laurent polynomial", residual=fit_res)
    v_star, v0_star, vbar_star = coef[0], coef[1], coef[2]
    conj_res = float(np.abs(np.conj(v_star) - vbar_star).max())
    real_res = float(np.abs(v0_star.imag).max())

    from ._stencil import GridInterpolator

    vi = GridInterpolator(field_star.grid, v_star)
    v0i = GridInterpolator(field_star.grid, v0_star.real)
    p_star = ConservedQuantity(lambda Uq, Vq: vi(Uq, Vq), lambda Uq, Vq: v0i(Uq, Vq), field_star, label="p*")
    diagnostics = {
        "precondition": float(rel),
        "fit_residual": fit_res,
        "conj_residual": conj_res,
        "v0_reality": real_res,
    }
    return p_star, diagnostics


def backlund_params_mirror(factors):
    """The (-alpha, rho L^alpha) parameters give the same transform."""
    return -factors.alpha


def mean_curvature_of(field_star, vinf):
    """H = |pi_perp v_inf| over the grid of a transformed surface."""
    gs = field_star.grid
    U, V = np.meshgrid(gs.us, gs.vs, indexing="ij")
    piP = field_star.projector_pack(U, V, derivs=False)["pi_perp"].real
    vperp = np.einsum("...ij,j->...i", piP, vinf)
    h2 = minkowski.inner(vperp, vperp)
    return np.sqrt(np.maximum(h2, 0.0))
