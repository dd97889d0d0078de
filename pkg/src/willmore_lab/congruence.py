"""Central sphere congruence, the D/N splitting and variational residuals.

The congruence S = <sigma, sigma_z, sigma_zbar, sigma_zzbar> is carried
as a pair of projector fields built by solving the 4x4 Gram system of
the null frame (no orthonormalization near the cone).  The derivative
splitting d = D + N, the Hopf differential and Schwarzian, the Willmore
energy and the (constrained) Willmore residuals all evaluate pointwise,
so outer derivatives can run on refined stencils in analytic mode and on
the grid in sampled mode.
"""

from __future__ import annotations

import numpy as np

from . import minkowski
from ._stencil import META_H, grid_deriv, meta_deriv
from .errors import DegenerateCongruence
from .immersion import normalized_section

TOL_PROJ = 1e-9
COND_MAX = 1e10


def endo_inner(A, B):
    """Metric on o(R^(n+1,1)): (a, b) = -tr(ab)."""
    return -np.einsum("...ij,...ji->...", A, B)


def frobenius(A):
    return np.sqrt(np.sum(np.abs(A) ** 2, axis=(-1, -2)))


def _frame_jets(j, order):
    """Jets of the complex frame (sigma, sigma_z, sigma_zbar, sigma_zzbar).

    Input raw-sigma jets must reach order + 2.
    """
    out = {}
    for a in range(order + 1):
        for b in range(order + 1 - a):
            s = j[(a, b)].astype(complex)
            sz = 0.5 * (j[(a + 1, b)] - 1j * j[(a, b + 1)])
            szb = 0.5 * (j[(a + 1, b)] + 1j * j[(a, b + 1)])
            szzb = 0.25 * (j[(a + 2, b)] + j[(a, b + 2)])
            out[(a, b)] = np.stack([s, sz, szb, szzb], axis=-1)
    return out


class CongruenceField:
    """Frame, projectors and the 1-form N of the central sphere congruence.

    All evaluators are vectorized over leading point axes.  Grid arrays
    are cached lazily under the same names with a `grid_` prefix.
    """

    def __init__(self, lift):
        self.lift = lift
        self.nlift = lift if lift.normalized else normalized_section(lift)
        self.grid = lift.grid
        self.mode = lift.mode
        self.dim_n = lift.dim_n
        self._cache = {}

    # -- pointwise evaluators ------------------------------------------

    def projector_pack(self, U, V, derivs=True):
        """pi_S, pi_perp and (optionally) their x/y derivatives at points.

        Solves the 4x4 Gram system of the raw null frame: the natural frame
        scales keep the system well conditioned near the cone, whereas
        orthonormalizing would divide by near-null norms.
        """
        j = self.lift.jets(U, V, 3 if derivs else 2)
        F = _frame_jets(j, 1 if derivs else 0)
        g = minkowski.metric_signs(self.dim_n)
        F0 = F[(0, 0)]
        G = np.einsum("...im,i,...ik->...mk", F0, g, F0)
        cond = np.linalg.cond(G)
        if np.any(~np.isfinite(cond)) or np.any(cond > COND_MAX):
            raise DegenerateCongruence(f"frame Gram condition {np.nanmax(cond):.2e}")
        H = np.linalg.inv(G)
        piS = np.einsum("...im,...mk,...jk,j->...ij", F0, H, F0, g)
        eye = np.eye(self.dim_n + 2)
        out = {"pi_S": piS, "pi_perp": eye - piS, "gram": G}
        if derivs:
            for ax, key in ((1, 0), "x"), ((0, 1), "y"):
                F1 = F[ax]
                dG = np.einsum("...im,i,...ik->...mk", F1, g, F0) + np.einsum(
                    "...im,i,...ik->...mk", F0, g, F1
                )
                dH = -np.einsum("...ab,...bc,...cd->...ad", H, dG, H)
                dpi = (
                    np.einsum("...im,...mk,...jk,j->...ij", F1, H, F0, g)
                    + np.einsum("...im,...mk,...jk,j->...ij", F0, dH, F0, g)
                    + np.einsum("...im,...mk,...jk,j->...ij", F0, H, F1, g)
                )
                out[f"dpi_{key}"] = dpi
        return out

    def N_coeffs(self, U, V):
        """Coefficients (N_x, N_y) of the 1-form N = d - D, as endomorphisms.

        N = (I - 2 pi_S) d pi_S: the S-block of d pi is annihilated and the
        exchange blocks survive with the right signs.
        """
        p = self.projector_pack(U, V, derivs=True)
        eye = np.eye(self.dim_n + 2)
        M = eye - 2.0 * p["pi_S"]
        Nx = np.einsum("...ij,...jk->...ik", M, p["dpi_x"])
        Ny = np.einsum("...ij,...jk->...ik", M, p["dpi_y"])
        return Nx, Ny

    def nframe(self, U, V):
        """Normalized-section frame pack: sigma^z, derivatives and sigma^z_zz."""
        j = self.nlift.jets(U, V, 2)
        s = j[(0, 0)].astype(complex)
        sz = 0.5 * (j[(1, 0)] - 1j * j[(0, 1)])
        szb = 0.5 * (j[(1, 0)] + 1j * j[(0, 1)])
        szz = 0.25 * (j[(2, 0)] - j[(0, 2)] - 2j * j[(1, 1)])
        szzb = 0.25 * (j[(2, 0)] + j[(0, 2)])
        return {"s": s, "sz": sz, "szb": szb, "szz": szz, "szzb": szzb}

    def rho(self, U, V):
        """Reflection across S: 2 pi_S - I."""
        p = self.projector_pack(U, V, derivs=False)
        return 2.0 * p["pi_S"] - np.eye(self.dim_n + 2)

    # -- grid caches -----------------------------------------------------

    def _gridded(self, key, fn):
        if key not in self._cache:
            U, V = np.meshgrid(self.grid.us, self.grid.vs, indexing="ij")
            self._cache[key] = fn(U, V)
        return self._cache[key]

    @property
    def grid_proj(self):
        return self._gridded("proj", lambda U, V: self.projector_pack(U, V, derivs=False))

    @property
    def grid_N(self):
        return self._gridded("N", self.N_coeffs)

    @property
    def grid_nframe(self):
        return self._gridded("nframe", self.nframe)

    # -- derivative dispatch ----------------------------------------------

    def dfield(self, fn, cache_key, du, dv, h=META_H):
        """d^du_u d^dv_v of a pointwise field, honoring the lift's mode."""
        g = self.grid
        if self.mode == "analytic":
            U, V = np.meshgrid(g.us, g.vs, indexing="ij")
            return meta_deriv(fn, U, V, du, dv, h)
        arr = self._gridded(cache_key, fn)
        out = arr
        if du:
            out = grid_deriv(out, 0, g.hx, du, g.periodic_x)
        if dv:
            out = grid_deriv(out, 1, g.hy, dv, g.periodic_y)
        return out


def central_sphere_congruence(lift):
    """Build the congruence field; raises DegenerateCongruence when the
    frame Gram system is singular beyond tolerance."""
    field = CongruenceField(lift)
    field.grid_proj  # force Gram validation on the grid
    return field


def split_connection(field):
    """Return (D coefficients, N coefficients) on the grid: D = d - N."""
    Nx, Ny = field.grid_N
    return (-Nx, -Ny), (Nx, Ny)


def projector_residuals(field):
    """Idempotence / self-adjointness / block checks, frame-normalized."""
    p = field.grid_proj
    piS, piP = p["pi_S"], p["pi_perp"]
    g = minkowski.metric_matrix(field.dim_n)
    Nx, Ny = field.grid_N
    scale = np.maximum(1.0, (frobenius(piS) / 2.0) ** 2)
    idem = (frobenius(piS @ piS - piS) / scale).max()
    sym = (frobenius(np.swapaxes(piS, -1, -2) @ g - g @ piS) / scale).max()
    blockS = max(
        (frobenius(piS @ Nx @ piS) / scale).max(), (frobenius(piS @ Ny @ piS) / scale).max()
    )
    blockP = max(
        (frobenius(piP @ Nx @ piP) / scale).max(), (frobenius(piP @ Ny @ piP) / scale).max()
    )
    nf = field.grid_nframe
    Nsigma = max(
        np.abs(np.einsum("...ij,...j->...i", Nx, nf["s"])).max(),
        np.abs(np.einsum("...ij,...j->...i", Ny, nf["s"])).max(),
    )
    N10 = 0.5 * (Nx - 1j * Ny)
    N01 = 0.5 * (Nx + 1j * Ny)
    N10szb = np.abs(np.einsum("...ij,...j->...i", N10, nf["szb"])).max()
    N01sz = np.abs(np.einsum("...ij,...j->...i", N01, nf["sz"])).max()
    skew = max(minkowski.skew_residual(Nx).max(), minkowski.skew_residual(Ny).max())
    return {
        "idempotent": float(idem),
        "self_adjoint": float(sym),
        "block_S": float(blockS),
        "block_perp": float(blockP),
        "N_sigma": float(Nsigma),
        "N10_lambda01": float(N10szb),
        "N01_lambda10": float(N01sz),
        "N_skew": float(skew),
    }


def structure_residuals(field):
    """Pointwise norms of the Gauss-Ricci and Codazzi blocks.

    E = -dx N_y + dy N_x + 2 [N_x, N_y] carries both equations: its
    S/S-perp block-diagonal part is R^D + [N ^ N]/2, the off-diagonal part
    is (minus) d^D N.
    """
    dNy_dx = field.dfield(lambda U, V: field.N_coeffs(U, V)[1], "Ndy", 1, 0)
    dNx_dy = field.dfield(lambda U, V: field.N_coeffs(U, V)[0], "Ndx", 0, 1)
    Nx, Ny = field.grid_N
    E = -dNy_dx + dNx_dy + 2.0 * (Nx @ Ny - Ny @ Nx)
    p = field.grid_proj
    piS, piP = p["pi_S"], p["pi_perp"]
    # Normalize by the local frame scale: a rank-4 metric-orthogonal projector
    # has Frobenius norm 2, larger values measure the null-frame skewness that
    # amplifies the sandwiched blocks.
    scale = np.maximum(1.0, (frobenius(piS) / 2.0) ** 2)
    gr = (frobenius(piS @ E @ piS) + frobenius(piP @ E @ piP)) / scale
    cod = (frobenius(piP @ E @ piS) + frobenius(piS @ E @ piP)) / scale
    return gr, cod


def hopf_schwarzian(field):
    """Hopf differential k = pi_perp sigma^z_zz and Schwarzian c = 4(szz, szzb)."""
    nf = field.grid_nframe
    piP = field.grid_proj["pi_perp"]
    k = np.einsum("...ij,...j->...i", piP, nf["szz"])
    c = 4.0 * minkowski.inner(nf["szz"], nf["szzb"])
    return HopfData(k, c, field)


class HopfData:
    def __init__(self, k, c, field):
        self.k = k
        self.c = c
        self.field = field

    def k_eval(self, U, V):
        nf = self.field.nframe(U, V)
        piP = self.field.projector_pack(U, V, derivs=False)["pi_perp"]
        return np.einsum("...ij,...j->...i", piP, nf["szz"])

    def abs_k(self):
        """Moebius-invariant |k^z| = sqrt((k, conj k)) (S-perp is definite)."""
        return np.sqrt(np.abs(minkowski.inner(self.k, np.conj(self.k))))

    @staticmethod
    def chart_change_k(k, omega_z):
        """k^omega = (|omega_z| / omega_z^2) k^z for a holomorphic chart change."""
        return (np.abs(omega_z) / omega_z**2) * k


def willmore_energy(field, grid=None):
    """W = 1/2 integral (N ^ *N) = 1/2 sum [(N_x, N_x) + (N_y, N_y)] dA."""
    grid = grid or field.grid
    Nx, Ny = field.grid_N
    dens = endo_inner(Nx, Nx) + endo_inner(Ny, Ny)
    w = grid.area_weights()
    return float(0.5 * np.sum(dens.real * w))


def energy_density(field):
    Nx, Ny = field.grid_N
    return (endo_inner(Nx, Nx) + endo_inner(Ny, Ny)).real


def _q_comm_term(q_forms, Nx, Ny):
    qx, qy = q_forms
    return 2.0 * ((qx @ Nx - Nx @ qx) + (qy @ Ny - Ny @ qy))


def cw_residual(field, q=None):
    """Pointwise norm of (d^D *N - 2 [q ^ *N]) applied to sigma^z_zzbar.

    q = None (or zero) gives the Willmore residual.  The 2-form evaluated
    on (dx, dy) reduces to dx N_x + dy N_y - 2([q_x, N_x] + [q_y, N_y]).
    """
    dNx_dx = field.dfield(lambda U, V: field.N_coeffs(U, V)[0], "Ndx", 1, 0)
    dNy_dy = field.dfield(lambda U, V: field.N_coeffs(U, V)[1], "Ndy", 0, 1)
    R = dNx_dx + dNy_dy
    if q is not None:
        U, V = np.meshgrid(field.grid.us, field.grid.vs, indexing="ij")
        qx, qy = q.coeffs(U, V)
        Nx, Ny = field.grid_N
        R = R - _q_comm_term((qx, qy), Nx, Ny)
    szzb = field.grid_nframe["szzb"]
    num = np.linalg.norm(np.einsum("...ij,...j->...i", R, szzb), axis=-1)
    den = np.maximum(np.linalg.norm(szzb, axis=-1), 1e-300)
    return num / den


def willmore_residual(field):
    return cw_residual(field, None)


def cw_residual_chart(hopf, field, qz):
    """Chart form of the constrained Willmore equation.

    residual = | nabla_zbar nabla_zbar k + (conj c / 2) k - Re(conj(q^z) k) |
    with nabla the normal connection D|_{S_perp}; an independent
    cross-check of cw_residual.
    """

    def nab_zb_k(U, V):
        dkx = meta_deriv(hopf.k_eval, U, V, 1, 0) if field.mode == "analytic" else None
        if dkx is None:
            raise NotImplementedError
        dky = meta_deriv(hopf.k_eval, U, V, 0, 1)
        dzb = 0.5 * (dkx + 1j * dky)
        piP = field.projector_pack(U, V, derivs=False)["pi_perp"]
        return np.einsum("...ij,...j->...i", piP, dzb)

    g = field.grid
    U, V = np.meshgrid(g.us, g.vs, indexing="ij")
    if field.mode == "analytic":
        d2x = meta_deriv(nab_zb_k, U, V, 1, 0, h=0.02)
        d2y = meta_deriv(nab_zb_k, U, V, 0, 1, h=0.02)
        dzb2 = 0.5 * (d2x + 1j * d2y)
        piP = field.grid_proj["pi_perp"]
        nn = np.einsum("...ij,...j->...i", piP, dzb2)
    else:
        k = hopf.k
        piP = field.grid_proj["pi_perp"]

        def dzb_grid(f):
            fx = grid_deriv(f, 0, g.hx, 1, g.periodic_x)
            fy = grid_deriv(f, 1, g.hy, 1, g.periodic_y)
            return 0.5 * (fx + 1j * fy)

        n1 = np.einsum("...ij,...j->...i", piP, dzb_grid(k))
        nn = np.einsum("...ij,...j->...i", piP, dzb_grid(n1))
    k = hopf.k
    c = hopf.c
    if callable(qz):
        qzv = qz(U, V)
    else:
        qzv = np.broadcast_to(np.asarray(qz, dtype=complex), k.shape[:-1])
    rhs = 0.5 * (np.conj(qzv)[..., None] * k + qzv[..., None] * np.conj(k))
    lhs = nn + 0.5 * np.conj(c)[..., None] * k
    return np.linalg.norm(lhs - rhs, axis=-1)
