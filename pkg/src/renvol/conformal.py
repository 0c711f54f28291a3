"""Conformal density calculus on a conformally rescaled diagonal metric.

The ambient metric is ``g = Omega^2 * diag(ghat)``.  Every quantity here is an
:class:`~renvol.expr.Expr` in the coordinates of the geometry, so downstream
code can differentiate further before evaluating.

Conventions: ``laplacian`` is the analyst's (negative-energy) Laplacian,
``J = Sc / (2(d-1))``, and hyperbolic space has negative scalar curvature.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence, Union

import mpmath
import numpy as np

from . import expr as ex
from .expr import Expr, ONE, ZERO, as_expr, differentiate, evaluate

__all__ = [
    "AmbientGeometry", "ConformalDensity", "LogDensity", "CovectorDensity",
    "GeometryError", "rho", "s_curvature", "laplace_robin", "laplace_robin_log",
    "coupled_gradient", "operator_L", "conformal_rescale", "self_adjointness_residual",
    "flat", "cylindrical",
]

Field = Union[Expr, str, float]


class GeometryError(ValueError):
    pass


def _sum(terms) -> Expr:
    out = ZERO
    for t in terms:
        out = out + t
    return out


def _sqrt_entry(b: Expr) -> Expr:
    # r^2 -> r keeps the volume element analytic across the polar axis
    if type(b) is ex.Pow and type(b.args[1]) is ex.Const and b.args[1].value % 2 == 0:
        return b.args[0] ** (b.args[1].value / 2)
    return ex.sqrt(b)


@dataclass(frozen=True, eq=False)
class AmbientGeometry:
    """Diagonal background metric times a conformal factor squared.

    ``polar_axis`` names a radial coordinate whose value 0 is a coordinate
    singularity (``r`` in cylindrical coordinates); evaluation there goes
    through a symmetric limit, see :meth:`evaluate`.
    """

    coords: tuple[str, ...]
    background: tuple[Expr, ...]
    conformal_factor: Expr = ONE
    polar_axis: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "background", tuple(as_expr(b) for b in self.background))
        object.__setattr__(self, "conformal_factor", as_expr(self.conformal_factor))
        if len(self.background) != len(self.coords):
            raise GeometryError("background metric needs one entry per coordinate")
        if self.dimension not in (2, 3):
            raise GeometryError("dimension must be 2 or 3")

    @property
    def dimension(self) -> int:
        return len(self.coords)

    d = dimension

    # -- metric data ---------------------------------------------------------------

    @cached_property
    def metric(self) -> tuple[Expr, ...]:
        om2 = self.conformal_factor ** 2
        return tuple(om2 * b for b in self.background)

    @cached_property
    def inverse(self) -> tuple[Expr, ...]:
        return tuple(ONE / gi for gi in self.metric)

    @cached_property
    def sqrt_det(self) -> Expr:
        prod = ONE
        for b in self.background:
            prod = prod * _sqrt_entry(b)
        return self.conformal_factor ** self.dimension * prod

    @cached_property
    def christoffel(self) -> tuple:
        """``christoffel[k][i][j] = Gamma^k_ij``."""
        d, g, gi, x = self.dimension, self.metric, self.inverse, self.coords
        dg = [[differentiate(g[a], x[b]) for b in range(d)] for a in range(d)]  # dg[a][b] = d_b g_aa
        out = []
        for k in range(d):
            rows = []
            for i in range(d):
                row = []
                for j in range(d):
                    t = ZERO
                    if j == k:
                        t = t + dg[k][i]
                    if i == k:
                        t = t + dg[k][j]
                    if i == j:
                        t = t - dg[i][k]
                    row.append(ex.HALF * gi[k] * t if t is not ZERO else ZERO)
                rows.append(tuple(row))
            out.append(tuple(rows))
        return tuple(out)

    @cached_property
    def ricci(self) -> tuple:
        d, G, x = self.dimension, self.christoffel, self.coords
        R = []
        for i in range(d):
            row = []
            for j in range(d):
                t = ZERO
                for k in range(d):
                    t = t + differentiate(G[k][i][j], x[k]) - differentiate(G[k][i][k], x[j])
                    for l in range(d):
                        t = t + G[k][k][l] * G[l][i][j] - G[k][j][l] * G[l][i][k]
                row.append(t)
            R.append(tuple(row))
        return tuple(R)

    @cached_property
    def scalar_curvature(self) -> Expr:
        return _sum(self.inverse[i] * self.ricci[i][i] for i in range(self.dimension))

    @cached_property
    def J(self) -> Expr:
        return self.scalar_curvature / (2 * (self.dimension - 1))

    # -- differential operators -------------------------------------------------------

    def grad(self, f: Field) -> tuple[Expr, ...]:
        """Exterior derivative: lower-index components."""
        f = as_expr(f)
        return tuple(differentiate(f, c) for c in self.coords)

    def raise_index(self, w: Sequence[Expr]) -> tuple[Expr, ...]:
        return tuple(gi * wi for gi, wi in zip(self.inverse, w))

    def dot(self, a: Sequence[Expr], b: Sequence[Expr]) -> Expr:
        """Inner product of two covectors."""
        return _sum(gi * ai * bi for gi, ai, bi in zip(self.inverse, a, b))

    def vdot(self, u: Sequence[Expr], v: Sequence[Expr]) -> Expr:
        """Inner product of two vectors."""
        return _sum(gi * ui * vi for gi, ui, vi in zip(self.metric, u, v))

    def norm2(self, a: Sequence[Expr]) -> Expr:
        return self.dot(a, a)

    def div(self, w: Sequence[Expr]) -> Expr:
        """Divergence of a covector field (index raised with g)."""
        sg = self.sqrt_det
        return _sum(differentiate(sg * gi * wi, c) for gi, wi, c in zip(self.inverse, w, self.coords)) / sg

    def laplacian(self, f: Field) -> Expr:
        return self.div(self.grad(f))

    def covariant_derivative(self, w: Sequence[Expr]) -> tuple:
        """``out[i][j] = nabla_i w_j`` for a covector ``w``."""
        d, G, x = self.dimension, self.christoffel, self.coords
        return tuple(
            tuple(differentiate(w[j], x[i]) - _sum(G[k][i][j] * w[k] for k in range(d)) for j in range(d))
            for i in range(d)
        )

    def hessian(self, f: Field) -> tuple:
        return self.covariant_derivative(self.grad(f))

    def directional(self, v: Sequence[Expr], f: Field) -> Expr:
        """``v^i d_i f`` for a vector ``v``."""
        f = as_expr(f)
        return _sum(vi * differentiate(f, c) for vi, c in zip(v, self.coords))

    def along(self, w: Sequence[Expr], f: Field) -> Expr:
        """Derivative of ``f`` along the vector dual to the covector ``w``."""
        return self.dot(w, self.grad(f))

    def metric_compatibility(self) -> tuple:
        """Symbolic ``nabla_k g_ij`` (should vanish identically)."""
        d, G, g, x = self.dimension, self.christoffel, self.metric, self.coords
        out = []
        for k in range(d):
            block = []
            for i in range(d):
                row = []
                for j in range(d):
                    t = differentiate(g[i], x[k]) if i == j else ZERO
                    t = t - G[j][k][i] * g[j] - G[i][k][j] * g[i]
                    row.append(t)
                block.append(tuple(row))
            out.append(tuple(block))
        return tuple(out)

    # -- rescaling and evaluation --------------------------------------------------------

    def rescaled(self, omega0: Field) -> "AmbientGeometry":
        return AmbientGeometry(self.coords, self.background, self.conformal_factor * as_expr(omega0),
                               self.polar_axis)

    def with_factor(self, omega: Field) -> "AmbientGeometry":
        return AmbientGeometry(self.coords, self.background, as_expr(omega), self.polar_axis)

    def evaluate(self, e: Field, point: Mapping[str, object], h: float = 1e-2):
        """Evaluate ``e``; on the polar axis take the symmetric limit.

        Off-axis points go straight to :func:`renvol.expr.evaluate`.  Where the
        polar coordinate is exactly 0 the even part ``(F(t)+F(-t))/2`` is
        sampled at ``t = h, 2h, ..., 5h`` and extrapolated to ``t = 0`` as a
        polynomial in ``t^2``.
        """
        e = as_expr(e)
        ax = self.polar_axis
        if ax is None or ax not in point:
            return evaluate(e, point)
        r = point[ax]
        if isinstance(r, (mpmath.mpf, int, float)) or np.ndim(r) == 0:
            if r != 0:
                return evaluate(e, point)
            return _axis_limit(e, dict(point), ax, h)
        r = np.asarray(r, dtype=float)
        on = r == 0
        if not np.any(on):
            return evaluate(e, point)
        arrays = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in point.values()])
        full = dict(zip(point.keys(), arrays))
        on = full[ax] == 0
        out = np.empty(on.shape)
        off_pt = {k: v[~on] for k, v in full.items()}
        on_pt = {k: v[on] for k, v in full.items()}
        if np.any(~on):
            out[~on] = evaluate(e, off_pt)
        out[on] = _axis_limit(e, on_pt, ax, h)
        return out


_AXIS_K = np.arange(1, 6)
# weights extrapolating a polynomial in t^2 sampled at t = k*h, k = 1..5, to t = 0
_AXIS_W = np.linalg.solve(np.vander((_AXIS_K ** 2).astype(float), 5, increasing=True).T,
                          np.eye(5)[0])


def _axis_limit(e: Expr, point: dict, ax: str, h: float):
    acc = 0.0
    mp = isinstance(point[ax], mpmath.mpf)
    for k, w in zip(_AXIS_K, _AXIS_W):
        t = mpmath.mpf(h) * int(k) if mp else h * k
        p_plus = dict(point, **{ax: point[ax] * 0 + t})
        p_minus = dict(point, **{ax: point[ax] * 0 - t})
        acc = acc + (evaluate(e, p_plus) + evaluate(e, p_minus)) * (float(w) / 2)
    return acc


def flat(coords: Sequence[str] = ("x", "y", "z"), omega: Field = ONE) -> AmbientGeometry:
    return AmbientGeometry(tuple(coords), tuple(ONE for _ in coords), as_expr(omega))


def cylindrical(coords: Sequence[str] = ("x", "r", "t"), omega: Field = ONE) -> AmbientGeometry:
    """Flat 3-space in cylindrical coordinates (axial, radial, angle)."""
    x, r, t = coords
    return AmbientGeometry((x, r, t), (ONE, ONE, ex.Var(r) ** 2), as_expr(omega), polar_axis=r)


# -- densities ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConformalDensity:
    """``[g; rep]`` with ``[g; rep] = [Omega^2 g; Omega^weight rep]``."""

    weight: float
    rep: Expr

    def __post_init__(self):
        object.__setattr__(self, "rep", as_expr(self.rep))

    def rescaled(self, omega0: Field) -> "ConformalDensity":
        return ConformalDensity(self.weight, self.rep * as_expr(omega0) ** self.weight)


@dataclass(frozen=True, eq=False)
class LogDensity:
    """``[g; rep]`` with ``[g; rep] = [Omega^2 g; rep + weight*log(Omega)]``."""

    weight: float
    rep: Expr

    def __post_init__(self):
        object.__setattr__(self, "rep", as_expr(self.rep))

    def rescaled(self, omega0: Field) -> "LogDensity":
        return LogDensity(self.weight, self.rep + self.weight * ex.log(as_expr(omega0)))


@dataclass(frozen=True, eq=False)
class CovectorDensity:
    """Covector-valued density; lower-index components scale by ``Omega^weight``."""

    weight: float
    components: tuple[Expr, ...]

    def rescaled(self, omega0: Field) -> "CovectorDensity":
        s = as_expr(omega0) ** self.weight
        return CovectorDensity(self.weight, tuple(c * s for c in self.components))


def _rep(x) -> Expr:
    if isinstance(x, (ConformalDensity, LogDensity)):
        return x.rep
    return as_expr(x)


def _density(x, weight: float) -> ConformalDensity:
    if isinstance(x, ConformalDensity):
        return x
    return ConformalDensity(weight, as_expr(x))


def rho(sigma, geom: AmbientGeometry) -> Expr:
    """``rho = -(1/d)(Delta sigma + J sigma)``."""
    s = _rep(sigma)
    return -(geom.laplacian(s) + geom.J * s) / geom.dimension


def s_curvature(sigma, geom: AmbientGeometry) -> ConformalDensity:
    """``S = |grad sigma|^2 + 2 rho sigma`` (weight 0)."""
    s = _rep(sigma)
    return ConformalDensity(0, geom.norm2(geom.grad(s)) + 2 * rho(s, geom) * s)


def laplace_robin(sigma, phi, geom: AmbientGeometry, on_locus: bool = False) -> ConformalDensity:
    """Laplace-Robin operator on a weight ``w`` density.

    ``D phi = (d+2w-2)(grad_n + w rho) phi - sigma (Delta + w J) phi`` with
    ``n = grad sigma``.  With ``on_locus=True`` the terms proportional to
    ``sigma`` are dropped (valid only for values on the zero locus).
    """
    s = _rep(sigma)
    phi = _density(phi, 0)
    w, f, d = phi.weight, phi.rep, geom.dimension
    n = geom.grad(s)
    first = (d + 2 * w - 2) * (geom.dot(n, geom.grad(f)) + w * rho(s, geom) * f)
    if on_locus:
        return ConformalDensity(w - 1, first)
    return ConformalDensity(w - 1, first - s * (geom.laplacian(f) + w * geom.J * f))


def laplace_robin_log(sigma, lam, geom: AmbientGeometry, on_locus: bool = False) -> ConformalDensity:
    """``D lambda = (d-2)(grad_n lambda + w rho) - sigma (Delta lambda + w J)`` (weight -1)."""
    s = _rep(sigma)
    if not isinstance(lam, LogDensity):
        lam = LogDensity(1, as_expr(lam))
    w, f, d = lam.weight, lam.rep, geom.dimension
    first = (d - 2) * (geom.dot(geom.grad(s), geom.grad(f)) + w * rho(s, geom))
    if on_locus:
        return ConformalDensity(-1, first)
    return ConformalDensity(-1, first - s * (geom.laplacian(f) + w * geom.J))


def coupled_gradient(tau, phi, geom: AmbientGeometry) -> CovectorDensity:
    """``tau grad phi - w phi grad tau`` for a density, ``tau grad lambda - l grad tau`` for a log density."""
    t = _rep(tau)
    gt = geom.grad(t)
    if isinstance(phi, LogDensity):
        gl = geom.grad(phi.rep)
        return CovectorDensity(1, tuple(t * a - phi.weight * b for a, b in zip(gl, gt)))
    phi = _density(phi, 0)
    gp = geom.grad(phi.rep)
    return CovectorDensity(phi.weight + 1, tuple(t * a - phi.weight * phi.rep * b for a, b in zip(gp, gt)))


def operator_L(sigma, geom: AmbientGeometry, lam) -> ConformalDensity:
    """``L lambda = S^-1 D lambda - (grad S^-1) . grad^sigma lambda`` (weight -1)."""
    s = _rep(sigma)
    S = s_curvature(s, geom).rep
    inv_s = ONE / S
    if isinstance(lam, LogDensity):
        dl = laplace_robin_log(s, lam, geom).rep
    else:
        dl = laplace_robin(s, lam, geom).rep
    cg = coupled_gradient(s, lam, geom).components
    return ConformalDensity(-1, inv_s * dl - geom.dot(geom.grad(inv_s), cg))


def conformal_rescale(obj, omega0: Field):
    """Re-express ``obj`` in the scale ``Omega0^2 g``."""
    omega0 = as_expr(omega0)
    if isinstance(obj, AmbientGeometry):
        return obj.rescaled(omega0)
    if isinstance(obj, (ConformalDensity, LogDensity, CovectorDensity)):
        return obj.rescaled(omega0)
    raise TypeError(f"cannot rescale {type(obj).__name__}")


def self_adjointness_residual(sigma, f, g_density, geom: AmbientGeometry, point: Mapping[str, object],
                              relative: bool = True):
    """Pointwise ``f D g - (D f) g + div j`` for weights ``1-d-w`` and ``w``.

    ``j = sigma (f grad g - g grad f) - (d+2w-1) f g grad sigma``.  With
    ``relative=True`` the residual is divided by the largest of the three terms
    or the product of the first-order sizes of ``f`` and ``g``, whichever is larger.
    """
    s = _rep(sigma)
    d = geom.dimension
    gd = _density(g_density, 0)
    w = gd.weight
    fd = _density(f, 1 - d - w)
    if abs(fd.weight - (1 - d - w)) > 1e-12:
        raise ValueError("weights must add up to 1-d")
    F, G = fd.rep, gd.rep
    t1 = F * laplace_robin(s, gd, geom).rep
    t2 = laplace_robin(s, fd, geom).rep * G
    gF, gG, gs = geom.grad(F), geom.grad(G), geom.grad(s)
    j = tuple(s * (F * b - G * a) - (d + 2 * w - 1) * F * G * c for a, b, c in zip(gF, gG, gs))
    t3 = geom.div(j)
    v1, v2, v3 = (np.asarray(geom.evaluate(t, point), dtype=float) for t in (t1, t2, t3))
    res = v1 - v2 + v3
    if not relative:
        return res
    # natural size of the pair, so that exact zeros of all three terms do not inflate the ratio
    size_f = np.abs(np.asarray(geom.evaluate(F, point), float)) + np.sqrt(
        np.asarray(geom.evaluate(geom.norm2(gF), point), float))
    size_g = np.abs(np.asarray(geom.evaluate(G, point), float)) + np.sqrt(
        np.asarray(geom.evaluate(geom.norm2(gG), point), float))
    scale = np.maximum.reduce([np.abs(v1), np.abs(v2), np.abs(v3), size_f * size_g])
    return res / np.maximum(scale, 1e-150)
