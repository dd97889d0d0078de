"""Conformal surface patches as light-cone lifts over a chart grid.

A lift supplies sigma and all partial derivatives to total order 3,
either in closed form (catalog surfaces) or by 4th-order differencing of
samples.  Space-form projections, the normalized section, Moebius maps
and mesh export act on lifts; the analytic catalog carries the test
surfaces used throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _quatlin, minkowski
from ._jets import (
    jadd,
    jconst,
    jdiv,
    jet_derivative,
    jet_keys,
    jmul,
    jpoly_v,
    jscale,
    jsqrt,
    jstack,
    jtrig,
)
from ._stencil import GridInterpolator, grid_deriv
from .errors import (
    NotConformal,
    NotImmersed,
    PairingVanishes,
    WillmoreLabError,
)

TOL_CONF = 1e-8
TOL_CONF_SAMPLED = 1e-6
TOL_PAIR = 1e-9


@dataclass(frozen=True)
class ChartGrid:
    """Rectangular conformal chart grid; periodic directions wrap with
    period nx*hx (resp. ny*hy)."""

    nx: int
    ny: int
    hx: float
    hy: float
    x0: float = 0.0
    y0: float = 0.0
    periodic_x: bool = True
    periodic_y: bool = True

    def __post_init__(self):
        if self.hx <= 0 or self.hy <= 0:
            raise ValueError("grid spacings must be positive")
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid too small")

    @property
    def us(self):
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def vs(self):
        return self.y0 + self.hy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.us, self.vs, indexing="ij")

    @property
    def shape(self):
        return (self.nx, self.ny)

    def area_weights(self):
        """Quadrature weights; trapezoid corrections on non-periodic edges."""
        wx = np.ones(self.nx)
        wy = np.ones(self.ny)
        if not self.periodic_x:
            wx[0] = wx[-1] = 0.5
        if not self.periodic_y:
            wy[0] = wy[-1] = 0.5
        return np.outer(wx, wy) * (self.hx * self.hy)

    def with_size(self, nx, ny):
        fx = self.nx * self.hx / nx if self.periodic_x else (self.nx - 1) * self.hx / (nx - 1)
        fy = self.ny * self.hy / ny if self.periodic_y else (self.ny - 1) * self.hy / (ny - 1)
        return ChartGrid(nx, ny, fx, fy, self.x0, self.y0, self.periodic_x, self.periodic_y)

    def subgrid(self, i0, i1, j0, j1):
        """Non-periodic axis-aligned subrectangle [i0,i1) x [j0,j1)."""
        return ChartGrid(
            i1 - i0,
            j1 - j0,
            self.hx,
            self.hy,
            self.x0 + i0 * self.hx,
            self.y0 + j0 * self.hy,
            False,
            False,
        )


@dataclass(frozen=True)
class SpaceForm:
    """Conic section S_{v_inf} = {v in L : (v, v_inf) = -1}."""

    v_inf: tuple

    @property
    def array(self):
        return np.asarray(self.v_inf, dtype=float)

    @property
    def curvature(self):
        return -float(minkowski.inner(self.array, self.array))

    @property
    def kind(self):
        c = minkowski.inner(self.array, self.array)
        scale = minkowski.norm2(self.array)
        if abs(c) < 1e-12 * scale:
            return "euclidean"
        return "spherical" if c < 0 else "hyperbolic"


class SurfaceLift:
    """Lift of a null line bundle over a chart grid.

    jets(U, V, order) returns {(a, b): array} with d^a_u d^b_v sigma for
    a + b <= order.  Analytic lifts evaluate anywhere; sampled lifts carry
    precomputed grid jets plus quintic interpolation between nodes.
    """

    def __init__(
        self,
        dim_n,
        grid,
        jet_fn=None,
        mode="analytic",
        name="",
        params=None,
        spaceform=None,
        normalized=False,
        grid_jets=None,
        qplane_fn=None,
        max_order=3,
    ):
        self.dim_n = dim_n
        self.grid = grid
        self.mode = mode
        self.name = name
        self.params = dict(params or {})
        self.spaceform = spaceform
        self.normalized = normalized
        self.qplane_fn = qplane_fn
        self.max_order = max_order
        self._jet_fn = jet_fn
        self._grid_jets = grid_jets
        self._interp = None

    # -- evaluation ---------------------------------------------------

    def jets(self, U, V, order=3):
        if order > self.max_order:
            raise WillmoreLabError(f"lift supplies jets to order {self.max_order} only")
        if self._jet_fn is not None:
            return self._jet_fn(np.asarray(U, dtype=float), np.asarray(V, dtype=float), order)
        # sampled / derived: interpolate stored grid jets
        if self._interp is None:
            stacked = np.stack([self.grid_jets()[k] for k in jet_keys(self.max_order)], axis=-1)
            self._interp = GridInterpolator(self.grid, stacked)
        vals = self._interp(U, V)
        keys = jet_keys(self.max_order)
        return {k: vals[..., i] for i, k in enumerate(keys) if k[0] + k[1] <= order}

    def grid_jets(self, order=3):
        if self._grid_jets is None:
            U, V = np.meshgrid(self.grid.us, self.grid.vs, indexing="ij")
            self._grid_jets = self._jet_fn(U, V, self.max_order)
        return {k: v for k, v in self._grid_jets.items() if k[0] + k[1] <= order}

    def sigma(self, U, V):
        return self.jets(U, V, 0)[(0, 0)]

    @property
    def pointwise(self):
        return self._jet_fn is not None or self._interp is not None or self._grid_jets is not None

    # -- construction helpers -----------------------------------------

    @staticmethod
    def from_samples(sigma_grid, grid, dim_n, name="sampled", spaceform=None, params=None):
        """Sampled-mode lift: jets by 4th-order differencing of the samples."""
        sigma_grid = np.asarray(sigma_grid)
        jets = {(0, 0): sigma_grid}
        for a, b in jet_keys(3):
            if (a, b) == (0, 0):
                continue
            f = sigma_grid
            if a:
                f = grid_deriv(f, 0, grid.hx, a, grid.periodic_x)
            if b:
                f = grid_deriv(f, 1, grid.hy, b, grid.periodic_y)
            jets[(a, b)] = f
        return SurfaceLift(
            dim_n,
            grid,
            mode="sampled",
            name=name,
            params=params,
            spaceform=spaceform,
            grid_jets=jets,
        )

    # -- validation ----------------------------------------------------

    def validate(self, order_checks=True):
        """Residuals of cone membership, conformality and immersion rank."""
        j = self.grid_jets(1)
        s = j[(0, 0)]
        su = j[(1, 0)]
        sv = j[(0, 1)]
        scale = np.maximum(minkowski.norm2(s), 1e-300)
        cone = np.abs(minkowski.inner(s, s)) / scale
        sz = 0.5 * (su - 1j * sv)
        gz = minkowski.inner(sz, np.conj(sz)).real
        conf = np.abs(minkowski.inner(sz, sz)) / np.maximum(np.abs(gz), 1e-300)
        span = np.stack([s, su, sv], axis=-2)
        sing = np.linalg.svd(span / np.sqrt(scale)[..., None, None], compute_uv=False)
        rank3 = sing[..., 2] / sing[..., 0]
        return {
            "cone_max": float(cone.max()),
            "conformality_max": float(conf.max()),
            "immersion_min_sv_ratio": float(rank3.min()),
        }


# ----------------------------------------------------------------------
# catalog
# ----------------------------------------------------------------------


def _euclid_pad(fjet, order, extra=2):
    """Pad an R^k jet with zero coordinates for the light-cone embedding."""
    out = {}
    for k, v in fjet.items():
        pad = np.zeros(v.shape[:-1] + (extra,))
        out[k] = np.concatenate([v, pad], axis=-1)
    return out


def euclidean_lift_jets(fjet, order, n):
    """Euclidean-space-form lift x -> x + v0 + (x,x)/2 v_inf of an R^n jet.

    v0 = (0,..,0,-1/2,1/2), v_inf = (0,..,0,1,1); both null, (v0,v_inf) = -1.
    """
    amb = n + 2
    v0 = np.zeros(amb)
    v0[-2] = -0.5
    v0[-1] = 0.5
    vinf = np.zeros(amb)
    vinf[-2] = 1.0
    vinf[-1] = 1.0
    ff = jmul(fjet, fjet, order, product=lambda x, y: np.sum(x * y, axis=-1))
    out = {}
    padded = _euclid_pad(fjet, order)
    for k in jet_keys(order):
        term = padded[k] + 0.5 * ff[k][..., None] * vinf
        if k == (0, 0):
            term = term + v0
        out[k] = term
    return out


def euclidean_spaceform(n):
    vinf = np.zeros(n + 2)
    vinf[-2] = 1.0
    vinf[-1] = 1.0
    return SpaceForm(tuple(vinf))


def spherical_spaceform(n):
    vinf = np.zeros(n + 2)
    vinf[-1] = 1.0
    return SpaceForm(tuple(vinf))


def _cylinder_jets(r):
    """Cylinder of radius r in the multiplier-normalized chart.

    Chart scaled and rotated so the canonical CMC multiplier has chart
    scalar H = 1/(2r): F(u, v) = (v/s, r cos(u/(s r)), r sin(u/(s r)))
    with s = 1/(2 sqrt(r)).  u-period pi sqrt(r) (full circle), v-period
    pi/sqrt(r) (one axial period 2 pi).
    """
    s = 1.0 / (2.0 * np.sqrt(r))
    w = 1.0 / (s * r)

    def jet_fn(U, V, order):
        phase = {k: np.zeros_like(U) for k in jet_keys(order)}
        phase[(0, 0)] = w * U
        if (1, 0) in phase:
            phase[(1, 0)] = np.full_like(U, w)
        c1 = jpoly_v([0.0, 1.0 / s], V, order)
        c1 = {k: np.broadcast_to(v, U.shape).copy() for k, v in c1.items()}
        c2 = jscale(jtrig(phase, order, "cos"), r)
        c3 = jscale(jtrig(phase, order, "sin"), r)
        fjet = jstack([c1, c2, c3], order)
        return euclidean_lift_jets(fjet, order, 3)

    return jet_fn, s


def _clifford_jets():
    w = np.sqrt(2.0)

    def jet_fn(U, V, order):
        pu = {k: np.zeros_like(U) for k in jet_keys(order)}
        pu[(0, 0)] = w * U
        if (1, 0) in pu:
            pu[(1, 0)] = np.full_like(U, w)
        pv = {k: np.zeros_like(V) for k in jet_keys(order)}
        pv[(0, 0)] = w * V
        if (0, 1) in pv:
            pv[(0, 1)] = np.full_like(V, w)
        inv = 1.0 / np.sqrt(2.0)
        comps = [
            jscale(jtrig(pu, order, "cos"), inv),
            jscale(jtrig(pu, order, "sin"), inv),
            jscale(jtrig(pv, order, "cos"), inv),
            jscale(jtrig(pv, order, "sin"), inv),
        ]
        fjet = jstack(comps, order)
        out = {}
        e5 = np.zeros(5)
        e5[-1] = 1.0
        for k in jet_keys(order):
            v = np.concatenate([fjet[k], np.zeros(fjet[k].shape[:-1] + (1,))], axis=-1)
            if k == (0, 0):
                v = v + e5
            out[k] = v
        return out

    return jet_fn


def _clifford4_jets():
    """Clifford torus as j-stable planes in C^4, lifted through Plucker.

    sigma(u, v) are the R^(5,1) coordinates of x ^ jx for x = (p, 1) in H^2,
    p the torus point in S^3 = unit quaternions; closed-form jets come from
    the Leibniz rule on the wedge coordinates.
    """
    w = np.sqrt(2.0)

    def qvec_jets(U, V, order):
        pu = {k: np.zeros_like(U) for k in jet_keys(order)}
        pu[(0, 0)] = w * U
        if (1, 0) in pu:
            pu[(1, 0)] = np.full_like(U, w)
        pv = {k: np.zeros_like(V) for k in jet_keys(order)}
        pv[(0, 0)] = w * V
        if (0, 1) in pv:
            pv[(0, 1)] = np.full_like(V, w)
        inv = 1.0 / np.sqrt(2.0)
        a = jscale(jtrig(pu, order, "cos"), inv)
        b = jscale(jtrig(pu, order, "sin"), inv)
        c = jscale(jtrig(pv, order, "cos"), inv)
        d = jscale(jtrig(pv, order, "sin"), inv)
        one = jconst(np.ones_like(U), order)
        zero = jconst(np.zeros_like(U), order)
        # x = a + ib + (c + id) j  ->  C^4 vector (a+ib, c+id, 1, 0)
        z1 = jadd(a, jscale(b, 1j))
        z2 = jadd(c, jscale(d, 1j))
        u_vec = jstack([z1, z2, one, zero], order)
        # j(x, 1) with j(z1, z2, z3, z4) = (-conj z2, conj z1, -conj z4, conj z3)
        z1c = jadd(a, jscale(b, -1j))
        z2c = jadd(c, jscale(d, -1j))
        ju_vec = jstack([jscale(z2c, -1.0), z1c, zero, one], order)
        return u_vec, ju_vec

    def jet_fn(U, V, order):
        u_vec, ju_vec = qvec_jets(U, V, order)
        pj = jmul(u_vec, ju_vec, order, product=_quatlin.wedge6)
        out = {}
        for k in jet_keys(order):
            out[k] = _quatlin.to_r51(pj[k]).real
        return out

    def qplane_fn(U, V):
        u_vec, ju_vec = qvec_jets(np.asarray(U, dtype=float), np.asarray(V, dtype=float), 0)
        return np.stack([u_vec[(0, 0)], ju_vec[(0, 0)]], axis=-2)

    return jet_fn, qplane_fn


def _sphere_jets(r):
    def jet_fn(U, V, order):
        one = np.ones_like(U)
        D = {k: np.zeros_like(U) for k in jet_keys(order)}
        D[(0, 0)] = 1.0 + U**2 + V**2
        for key, val in (((1, 0), 2 * U), ((0, 1), 2 * V), ((2, 0), 2 * one), ((0, 2), 2 * one)):
            if key in D:
                D[key] = val
        num1 = {k: np.zeros_like(U) for k in jet_keys(order)}
        num1[(0, 0)] = 2 * r * U
        if (1, 0) in num1:
            num1[(1, 0)] = 2 * r * one
        num2 = {k: np.zeros_like(U) for k in jet_keys(order)}
        num2[(0, 0)] = 2 * r * V
        if (0, 1) in num2:
            num2[(0, 1)] = 2 * r * one
        num3 = {k: np.zeros_like(U) for k in jet_keys(order)}
        num3[(0, 0)] = r * (U**2 + V**2 - 1.0)
        for key, val in (((1, 0), 2 * r * U), ((0, 1), 2 * r * V), ((2, 0), 2 * r * one), ((0, 2), 2 * r * one)):
            if key in num3:
                num3[key] = val
        f = jstack([jdiv(num1, D, order), jdiv(num2, D, order), jdiv(num3, D, order)], order)
        return euclidean_lift_jets(f, order, 3)

    return jet_fn


def _torus_phi_jets(a, R, V, order):
    """phi(v) jets from the conformal-arclength ODE phi' = (R + a cos phi)/a."""
    c = np.sqrt(R * R - a * a)
    wv = V * c / a
    amp = np.sqrt((R + a) / (R - a))
    phi = 2.0 * np.arctan2(amp * np.sin(wv / 2.0), np.cos(wv / 2.0))
    # continuity across the period: lift branch jumps
    phi = np.where(phi < 0, phi + 2 * np.pi, phi)
    sin, cos = np.sin(phi), np.cos(phi)
    d1 = (R + a * cos) / a
    d2 = -sin * d1
    d3 = -cos * d1 * d1 - sin * d2
    out = {(0, 0): phi, (0, 1): d1, (0, 2): d2, (0, 3): d3}
    return {k: out.get(k, np.zeros_like(V)) for k in jet_keys(order)}


def _generic_torus_jets(a, R):
    def jet_fn(U, V, order):
        phi = _torus_phi_jets(a, R, V, order)
        # scalar chains of cos(phi), sin(phi) through order 3
        sinp = {}
        cosp = {}
        p0, p1 = phi[(0, 0)], phi.get((0, 1), 0.0)
        p2, p3 = phi.get((0, 2), 0.0), phi.get((0, 3), 0.0)
        s0, c0 = np.sin(p0), np.cos(p0)
        table = {
            (0, 0): (s0, c0),
            (0, 1): (c0 * p1, -s0 * p1),
            (0, 2): (-s0 * p1**2 + c0 * p2, -c0 * p1**2 - s0 * p2),
            (0, 3): (
                -c0 * p1**3 - 3 * s0 * p1 * p2 + c0 * p3,
                s0 * p1**3 - 3 * c0 * p1 * p2 - s0 * p3,
            ),
        }
        for k in jet_keys(order):
            s, c = table.get(k, (np.zeros_like(p0), np.zeros_like(p0)))
            sinp[k], cosp[k] = s, c
        W = jadd(jconst(np.full_like(p0, R), order), jscale(cosp, a))
        pu = {k: np.zeros_like(U) for k in jet_keys(order)}
        pu[(0, 0)] = U
        if (1, 0) in pu:
            pu[(1, 0)] = np.ones_like(U)
        cu = jtrig(pu, order, "cos")
        su = jtrig(pu, order, "sin")
        f = jstack([jmul(W, cu, order), jmul(W, su, order), jscale(sinp, a)], order)
        return euclidean_lift_jets(f, order, 3)

    return jet_fn


def catalog(name, n=3, nx=64, ny=64, **params):
    """Analytic test surfaces with closed-form derivative stacks.

    Names: clifford_torus (n = 3 or 4), cylinder(r), round_sphere(r),
    generic_torus(a, R).
    """
    name = name.replace("-", "_")
    if name == "clifford_torus":
        period = np.pi * np.sqrt(2.0)
        grid = ChartGrid(nx, ny, period / nx, period / ny)
        if n == 3:
            return SurfaceLift(3, grid, _clifford_jets(), name=name, spaceform=spherical_spaceform(3))
        if n == 4:
            jet_fn, qplane_fn = _clifford4_jets()
            return SurfaceLift(4, grid, jet_fn, name=name, spaceform=spherical_spaceform(4), qplane_fn=qplane_fn)
        raise ValueError("clifford_torus: n must be 3 or 4")
    if name == "cylinder":
        r = float(params.get("r", 1.0))
        if r <= 0:
            raise ValueError("cylinder: radius must be positive")
        jet_fn, s = _cylinder_jets(r)
        pu = np.pi * np.sqrt(r)
        pv = np.pi / np.sqrt(r)
        grid = ChartGrid(nx, ny, pu / nx, pv / ny)
        return SurfaceLift(
            3, grid, jet_fn, name=name, params={"r": r, "chart_scale": s}, spaceform=euclidean_spaceform(3)
        )
    if name == "round_sphere":
        r = float(params.get("r", 1.0))
        if r <= 0:
            raise ValueError("round_sphere: radius must be positive")
        grid = ChartGrid(nx, ny, 2.0 / (nx - 1), 2.0 / (ny - 1), -1.0, -1.0, False, False)
        return SurfaceLift(3, grid, _sphere_jets(r), name=name, params={"r": r}, spaceform=euclidean_spaceform(3))
    if name == "generic_torus":
        a = float(params.get("a", 1.0))
        R = float(params.get("R", 3.0))
        if not (0 < a < R):
            raise ValueError("generic_torus needs 0 < a < R")
        pv = 2 * np.pi * a / np.sqrt(R * R - a * a)
        grid = ChartGrid(nx, ny, 2 * np.pi / nx, pv / ny)
        return SurfaceLift(
            3, grid, _generic_torus_jets(a, R), name=name, params={"a": a, "R": R}, spaceform=euclidean_spaceform(3)
        )
    raise ValueError(f"unknown catalog surface: {name}")


# ----------------------------------------------------------------------
# operations on lifts
# ----------------------------------------------------------------------


def normalized_section(lift, tol_conf=None):
    """Scale the lift so the induced metric equals the chart metric.

    sigma^z = sigma / |sigma_x| with the L+ component fixed by a positive
    time-like coordinate; (sigma^z_z, sigma^z_zbar) = 1/2 follows.  Jets
    are exact to order 2 (the scale eats one derivative).
    """
    if tol_conf is None:
        tol_conf = TOL_CONF if lift.mode == "analytic" else TOL_CONF_SAMPLED
    if lift.normalized or lift.max_order < 3:
        # idempotence path: verify the scale is already 1
        j1 = lift.grid_jets(1)
        s = np.sqrt(minkowski.inner(j1[(1, 0)], j1[(1, 0)]).real)
        if np.abs(s - 1.0).max() < 1e-10 and np.all(j1[(0, 0)][..., -1] > 0):
            return lift
        raise WillmoreLabError("cannot renormalize a lift without order-3 jets")
    max_order = min(lift.max_order - 1, 2)

    def jet_fn(U, V, order):
        j = lift.jets(U, V, order + 1)
        su = jet_derivative(j, 1, 0)
        g11 = jmul(su, su, order, product=minkowski.inner)
        if np.any(g11[(0, 0)] <= 0):
            raise NotConformal("vanishing g_sigma(dx, dx)")
        s = {k: v[..., None] for k, v in jsqrt(g11, order).items()}
        sig = {k: v for k, v in j.items() if k[0] + k[1] <= order}
        sgn = np.sign(j[(0, 0)][..., -1])
        out = jdiv(sig, s, order)
        return {k: v * sgn[..., None] for k, v in out.items()}

    # conformality gate on the grid
    j1 = lift.grid_jets(1)
    sz = 0.5 * (j1[(1, 0)] - 1j * j1[(0, 1)])
    gz = minkowski.inner(sz, np.conj(sz)).real
    conf = np.abs(minkowski.inner(sz, sz)) / np.maximum(np.abs(gz), 1e-300)
    if conf.max() > tol_conf:
        raise NotConformal(f"conformality residual {conf.max():.3e}")

    if lift._jet_fn is None:
        U, V = np.meshgrid(lift.grid.us, lift.grid.vs, indexing="ij")
        jets_grid = None

        def sampled_jets(Uq, Vq, order):
            raise WillmoreLabError("normalized sampled lifts evaluate on their grid only")

        # precompute on grid via the same formulas using stored jets
        j = lift.grid_jets(3)
        su = jet_derivative(j, 1, 0)
        g11 = jmul(su, su, 2, product=minkowski.inner)
        s = {k: v[..., None] for k, v in jsqrt(g11, 2).items()}
        sig = {k: v for k, v in j.items() if k[0] + k[1] <= 2}
        sgn = np.sign(j[(0, 0)][..., -1])
        out = {k: v * sgn[..., None] for k, v in jdiv(sig, s, 2).items()}
        return SurfaceLift(
            lift.dim_n,
            lift.grid,
            mode="sampled",
            name=lift.name + "_normalized",
            params=lift.params,
            spaceform=lift.spaceform,
            normalized=True,
            grid_jets=out,
            max_order=2,
        )

    return SurfaceLift(
        lift.dim_n,
        lift.grid,
        jet_fn,
        mode=lift.mode,
        name=lift.name + "_normalized",
        params=lift.params,
        spaceform=lift.spaceform,
        normalized=True,
        max_order=max_order,
    )


def project_spaceform(lift, sf, tol_pair=TOL_PAIR):
    """Space-form representative sigma_inf = -sigma / (sigma, v_inf)."""
    vinf = sf.array

    def jet_fn(U, V, order):
        j = lift.jets(U, V, order)
        pair = {k: minkowski.inner(v, vinf)[..., None] for k, v in j.items()}
        num = {k: -v for k, v in j.items()}
        return jdiv(num, pair, order)

    s = lift.grid_jets(0)[(0, 0)]
    pair = minkowski.inner(s, vinf)
    bad = np.abs(pair) < tol_pair * np.sqrt(np.maximum(minkowski.norm2(s), 1e-300))
    if bad.any():
        raise PairingVanishes("(sigma, v_inf) vanishes on the grid", points=np.argwhere(bad))
    if lift._jet_fn is None:
        j = lift.grid_jets(lift.max_order)
        pj = {k: minkowski.inner(v, vinf)[..., None] for k, v in j.items()}
        out = jdiv({k: -v for k, v in j.items()}, pj, lift.max_order)
        return SurfaceLift(
            lift.dim_n,
            lift.grid,
            mode="sampled",
            name=lift.name + "_sf",
            spaceform=sf,
            grid_jets=out,
            max_order=lift.max_order,
        )
    return SurfaceLift(
        lift.dim_n,
        lift.grid,
        jet_fn,
        mode=lift.mode,
        name=lift.name + "_sf",
        params=lift.params,
        spaceform=sf,
        max_order=lift.max_order,
    )


def sphere_containment(lift, sample=8, gap=1e6):
    """Rank of the span of sigma and derivatives to order 3 over a sample.

    flag True (rank < n+2) means the surface lies in a proper subsphere;
    transformation entry points must refuse it.
    """
    g = lift.grid
    iu = np.linspace(0, g.nx - 1, min(sample, g.nx)).astype(int)
    iv = np.linspace(0, g.ny - 1, min(sample, g.ny)).astype(int)
    shape = (len(iu), len(iv))
    U = np.broadcast_to(g.us[iu][:, None], shape).copy()
    V = np.broadcast_to(g.vs[iv][None, :], shape).copy()
    j = lift.jets(U, V, 3) if lift._jet_fn else {k: v[np.ix_(iu, iv)] for k, v in lift.grid_jets(3).items()}
    rows = np.concatenate([v.reshape(-1, v.shape[-1]) for v in j.values()], axis=0)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True).clip(1e-300)
    s = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(s > s[0] / gap))
    return rank < lift.dim_n + 2, rank


def mobius_apply(lift, T):
    """Pointwise application of a (constant) ambient orthogonal map."""
    T = np.asarray(T)

    def jet_fn(U, V, order):
        j = lift.jets(U, V, order)
        return {k: np.einsum("ij,...j->...i", T, v) for k, v in j.items()}

    sf = lift.spaceform
    if sf is not None:
        sf = SpaceForm(tuple(T @ sf.array))
    if lift._jet_fn is None:
        j = {k: np.einsum("ij,...j->...i", T, v) for k, v in lift.grid_jets(lift.max_order).items()}
        return SurfaceLift(lift.dim_n, lift.grid, mode="sampled", name=lift.name + "_mob", spaceform=sf, grid_jets=j, max_order=lift.max_order)
    return SurfaceLift(
        lift.dim_n,
        lift.grid,
        jet_fn,
        mode=lift.mode,
        name=lift.name + "_mob",
        params=lift.params,
        spaceform=sf,
        max_order=lift.max_order,
    )


# ----------------------------------------------------------------------
# mesh export
# ----------------------------------------------------------------------


def _euclidean_coords(sigma, vinf):
    """Coordinates of sigma_inf in the R^3 slice of a light-like space form."""
    pair = minkowski.inner(sigma, vinf)
    s_inf = -sigma / pair[..., None]
    return s_inf[..., :3]


def _stereo_coords(sigma, vinf):
    """Stereographic R^3 coordinates of the spherical section (n = 3)."""
    pair = minkowski.inner(sigma, vinf)
    s_inf = -sigma / pair[..., None]
    x = s_inf[..., :4]
    return x[..., :3] / (1.0 - x[..., 3:4])


def mesh_vertices(lift, sf, project="auto", slice_axes=(0, 1, 2)):
    """Vertex positions for export; spherical sections project stereographically."""
    sigma = lift.grid_jets(0)[(0, 0)]
    vinf = sf.array
    if lift.dim_n == 4:
        pair = minkowski.inner(sigma, vinf)
        s_inf = -sigma / pair[..., None]
        return s_inf[..., list(slice_axes)]
    if lift.dim_n != 3:
        raise WillmoreLabError("export supports n = 3, or n = 4 with a coordinate slice")
    kind = sf.kind
    if project == "stereo" or (project == "auto" and kind == "spherical"):
        return _stereo_coords(sigma, vinf)
    return _euclidean_coords(sigma, vinf)


def _grid_faces(grid):
    nx, ny = grid.nx, grid.ny
    fx = nx if grid.periodic_x else nx - 1
    fy = ny if grid.periodic_y else ny - 1
    quads = []
    for i in range(fx):
        i2 = (i + 1) % nx
        for j in range(fy):
            j2 = (j + 1) % ny
            quads.append((i * ny + j, i2 * ny + j, i2 * ny + j2, i * ny + j2))
    return quads


def export_mesh(lift, sf, path, fmt="obj", project="auto"):
    """Write the space-form mesh as OBJ (ascii) or binary little-endian PLY."""
    verts = mesh_vertices(lift, sf, project=project).reshape(-1, 3)
    if verts.size == 0:
        raise WillmoreLabError("empty grid")
    quads = _grid_faces(lift.grid)
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    if fmt == "obj":
        with open(path, "w") as fh:
            fh.write(f"# willmore-lab export: {lift.name}\n")
            for v in verts:
                fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*v))
            for t in tris:
                fh.write("f {} {} {}\n".format(t[0] + 1, t[1] + 1, t[2] + 1))
    elif fmt == "ply":
        with open(path, "wb") as fh:
            head = (
                "ply\nformat binary_little_endian 1.0\n"
                f"element vertex {len(verts)}\n"
                "property float x\nproperty float y\nproperty float z\n"
                f"element face {len(tris)}\n"
                "property list uchar int vertex_indices\nend_header\n"
            )
            fh.write(head.encode())
            fh.write(verts.astype("<f4").tobytes())
            for t in tris:
                fh.write(struct.pack("<B3i", 3, *t))
    else:
        raise WillmoreLabError(f"unsupported format {fmt}")
    return path
