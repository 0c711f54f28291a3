"""Extrinsic geometry of an interface and a lateral boundary.

The interface is the zero locus of ``sigma`` and the lateral boundary the zero
locus of ``nu`` with the region on the side ``nu > 0``.  Both are handled as
graphs: the interface over the parameter box in the non-graph coordinates, the
lateral boundary as a cylinder over an edge of that box.

Conventions: ``n`` is the unit conormal ``grad sigma / |grad sigma|`` and ``m``
the outward unit conormal ``-grad nu / |grad nu|``.  ``cos(theta) = n . m``
with ``theta`` in ``(0, pi)``.  In the boundary frame ``p = (m - cos n)/sin``
is tangent to the interface and ``q = (n - cos m)/sin`` is tangent to the
lateral boundary.  Second fundamental forms are ``II_ab = P_a^c P_b^d nabla_c N_d``
for the relevant unit conormal ``N``, and ``H = tr II / (d - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .conformal import AmbientGeometry, GeometryError
from .expr import Expr, ONE, ZERO, as_expr, differentiate
from .quadrature import QuadratureSettings, adaptive_tensor, solve_monotone

__all__ = [
    "ParamAxis", "SurfaceSpec", "FramePoint", "InterfaceGeometry", "DegenerateGradientError",
    "AngleDegeneracyError", "contract", "gauss_bonnet", "boundary_edges",
]


class DegenerateGradientError(GeometryError):
    pass


class AngleDegeneracyError(GeometryError):
    pass


@dataclass(frozen=True)
class ParamAxis:
    name: str
    lo: float
    hi: float
    periodic: bool = False

    @property
    def span(self) -> tuple[float, float, bool]:
        return (self.lo, self.hi, self.periodic)


@dataclass(frozen=True, eq=False)
class SurfaceSpec:
    """A defining function solvable for ``graph_coordinate`` over a parameter box."""

    geom: AmbientGeometry
    defining: Expr
    graph_coordinate: str
    window: tuple[float, float]
    params: tuple[ParamAxis, ...]

    def __post_init__(self):
        object.__setattr__(self, "defining", as_expr(self.defining))
        object.__setattr__(self, "params", tuple(self.params))
        names = {self.graph_coordinate, *(p.name for p in self.params)}
        if names != set(self.geom.coords):
            raise GeometryError("graph coordinate plus parameters must be exactly the geometry coordinates")

    @cached_property
    def d_graph(self) -> Expr:
        return differentiate(self.defining, self.graph_coordinate)

    def solve(self, pvals: Mapping[str, np.ndarray], level=0.0, defining: Expr | None = None) -> np.ndarray:
        """Graph coordinate where ``defining = level`` above the parameter values."""
        e = self.defining if defining is None else defining
        de = self.d_graph if defining is None else differentiate(defining, self.graph_coordinate)
        x = self.graph_coordinate
        shape = np.broadcast(*[np.asarray(v) for v in pvals.values()], np.asarray(level)).shape
        pv = {k: np.broadcast_to(np.asarray(v, float), shape) for k, v in pvals.items()}

        def f(t):
            return np.asarray(self.geom.evaluate(e, {**pv, x: t}), float) * np.ones(shape)

        def df(t):
            return np.asarray(self.geom.evaluate(de, {**pv, x: t}), float) * np.ones(shape)

        return solve_monotone(f, df, np.broadcast_to(np.asarray(level, float), shape),
                              self.window[0], self.window[1])

    def point(self, pvals: Mapping[str, np.ndarray], level=0.0) -> dict:
        return {**pvals, self.graph_coordinate: self.solve(pvals, level)}

    def check_monotone(self, samples: int = 9) -> None:
        """Sample the parameter box and the window; raise if not strictly monotone."""
        grids = [np.linspace(p.lo, p.hi, samples) for p in self.params]
        mesh = np.meshgrid(*grids, indexing="ij")
        pv = {p.name: m.ravel() for p, m in zip(self.params, mesh)}
        xs = np.linspace(*self.window, 4 * samples)
        vals = np.array([np.asarray(self.geom.evaluate(self.d_graph, {**pv, self.graph_coordinate: t}), float)
                         * np.ones(mesh[0].size) for t in xs])
        if not (np.all(vals > 0) or np.all(vals < 0)):
            raise GeometryError("defining function is not strictly monotone in the graph coordinate "
                                "on the transverse window")


def contract(T, u: Sequence[Expr], v: Sequence[Expr], geom: AmbientGeometry) -> Expr:
    """``T_ab u^a v^b`` for covectors ``u``, ``v`` (indices raised with g)."""
    ui, vi = geom.raise_index(u), geom.raise_index(v)
    out = ZERO
    for a in range(geom.dimension):
        for b in range(geom.dimension):
            if T[a][b] is not ZERO:
                out = out + T[a][b] * ui[a] * vi[b]
    return out


def _project(T, N, geom: AmbientGeometry):
    """``P T P`` with ``P_a^b = delta_a^b - N_a N^b``."""
    d = geom.dimension
    Nu = geom.raise_index(N)
    TN = [ex.ZERO for _ in range(d)]  # T_ab N^b
    NT = [ex.ZERO for _ in range(d)]  # N^a T_ab
    for a in range(d):
        TN[a] = sum((T[a][b] * Nu[b] for b in range(d)), ZERO)
        NT[a] = sum((Nu[b] * T[b][a] for b in range(d)), ZERO)
    NTN = sum((Nu[a] * TN[a] for a in range(d)), ZERO)
    return tuple(
        tuple(T[a][b] - N[a] * NT[b] - TN[a] * N[b] + N[a] * N[b] * NTN for b in range(d))
        for a in range(d)
    )


class _Side:
    """Unit conormal, second fundamental form and friends for one hypersurface."""

    def __init__(self, geom: AmbientGeometry, defining: Expr, sign: float):
        self.geom = geom
        self.defining = sign * defining if sign != 1 else defining
        g = geom.grad(self.defining)
        self.grad = g
        self.norm = ex.sqrt(geom.norm2(g))
        self.normal = tuple(c / self.norm for c in g)

    @cached_property
    def II(self):
        hess = self.geom.hessian(self.defining)
        P = _project(hess, self.normal, self.geom)
        return tuple(tuple(c / self.norm for c in row) for row in P)

    @cached_property
    def trace(self) -> Expr:
        return sum((gi * self.II[a][a] for a, gi in enumerate(self.geom.inverse)), ZERO)

    @cached_property
    def H(self) -> Expr:
        return self.trace / (self.geom.dimension - 1)

    @cached_property
    def II0(self):
        g, N, d = self.geom.metric, self.normal, self.geom.dimension
        return tuple(
            tuple(self.II[a][b] - self.H * ((g[a] if a == b else ZERO) - N[a] * N[b]) for b in range(d))
            for a in range(d)
        )

    @cached_property
    def II_squared(self) -> Expr:
        gi, d = self.geom.inverse, self.geom.dimension
        return sum((gi[a] * gi[b] * self.II[a][b] ** 2 for a in range(d) for b in range(d)), ZERO)

    @cached_property
    def II0_squared(self) -> Expr:
        gi, d = self.geom.inverse, self.geom.dimension
        return sum((gi[a] * gi[b] * self.II0[a][b] ** 2 for a in range(d) for b in range(d)), ZERO)

    @cached_property
    def gauss_curvature(self) -> Expr:
        """Intrinsic ``Sc/2`` of the hypersurface via the Gauss equation (d = 3)."""
        geom = self.geom
        ric_nn = contract(geom.ricci, self.normal, self.normal, geom)
        return geom.scalar_curvature / 2 - ric_nn + (self.trace**2 - self.II_squared) / 2


@dataclass
class FramePoint:
    """Numerical boundary frame at a batch of points (covector components)."""

    point: dict
    n: np.ndarray
    m: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    p: np.ndarray
    q: np.ndarray
    II_sigma: np.ndarray
    H_sigma: np.ndarray
    II0_sigma: np.ndarray
    II_lambda: np.ndarray
    H_lambda: np.ndarray
    II0_lambda: np.ndarray
    metric: np.ndarray = field(repr=False, default=None)


class InterfaceGeometry:
    """Symbolic frame fields for ``(sigma, nu)`` in an ambient geometry."""

    def __init__(self, geom: AmbientGeometry, sigma, nu=None, angle_floor: float = 1e-3):
        self.geom = geom
        self.sigma = as_expr(sigma)
        self.nu = None if nu is None else as_expr(nu)
        self.angle_floor = angle_floor
        self.interface = _Side(geom, self.sigma, 1.0)
        self.boundary = None if self.nu is None else _Side(geom, self.nu, -1.0)

    # -- interface -----------------------------------------------------------------------

    @property
    def n(self):
        return self.interface.normal

    @property
    def II_sigma(self):
        return self.interface.II

    @property
    def H_sigma(self) -> Expr:
        return self.interface.H

    @property
    def II0_sigma(self):
        return self.interface.II0

    @property
    def K_sigma(self) -> Expr:
        return self.interface.gauss_curvature

    # -- lateral boundary ------------------------------------------------------------------

    def _need_boundary(self):
        if self.boundary is None:
            raise GeometryError("scene has no lateral boundary")
        return self.boundary

    @property
    def m(self):
        return self._need_boundary().normal

    @property
    def H_lambda(self) -> Expr:
        return self._need_boundary().H

    @property
    def II0_lambda(self):
        return self._need_boundary().II0

    @property
    def K_lambda(self) -> Expr:
        return self._need_boundary().gauss_curvature

    @cached_property
    def cos(self) -> Expr:
        return self.geom.dot(self.n, self.m)

    @cached_property
    def sin(self) -> Expr:
        return ex.sqrt(ONE - self.cos**2)

    @cached_property
    def p(self):
        return tuple((mi - self.cos * ni) / self.sin for mi, ni in zip(self.m, self.n))

    @cached_property
    def q(self):
        return tuple((ni - self.cos * mi) / self.sin for mi, ni in zip(self.m, self.n))

    @cached_property
    def II0_sigma_pp(self) -> Expr:
        return contract(self.II0_sigma, self.p, self.p, self.geom)

    @cached_property
    def II0_lambda_qq(self) -> Expr:
        return contract(self.II0_lambda, self.q, self.q, self.geom)

    @cached_property
    def kappa_direct(self) -> Expr:
        """Tangential divergence of ``p`` along the interface."""
        geom = self.geom
        cov = geom.covariant_derivative(self.p)
        nu_ = geom.raise_index(self.n)
        d = geom.dimension
        out = ZERO
        for a in range(d):
            out = out + geom.inverse[a] * cov[a][a]
            for b in range(d):
                out = out - nu_[a] * nu_[b] * cov[a][b]
        return out

    @cached_property
    def kappa_formula(self) -> Expr:
        c = self.cos
        return (self.H_lambda - self.II0_lambda_qq - c * (self.H_sigma - self.II0_sigma_pp)) / self.sin

    def kappa(self, method: str = "direct") -> Expr:
        if method == "direct":
            return self.kappa_direct
        if method == "formula":
            return self.kappa_formula
        raise ValueError(f"unknown method {method!r}")

    @cached_property
    def s_curvature_boundary(self) -> Expr:
        """S-curvature of sigma pulled back to the lateral boundary (d = 3).

        Uses the two-dimensional rule ``S = |grad sigma|^2 - sigma (Delta sigma + K sigma)``
        with the induced gradient, Laplacian and Gauss curvature.
        """
        geom, side = self.geom, self._need_boundary()
        s, m = self.sigma, side.normal
        dm = geom.dot(m, geom.grad(s))
        grad2 = geom.norm2(geom.grad(s)) - dm**2
        lap = geom.laplacian(s) - contract(geom.hessian(s), m, m, geom) - side.trace * dm
        return grad2 - s * (lap + side.gauss_curvature * s)

    # -- measures on graph charts -----------------------------------------------------------

    def area_density(self, graph_coordinate: str) -> Expr:
        """Induced area element of the interface per unit parameter volume."""
        return self.interface.norm * self.geom.sqrt_det / ex.absolute(differentiate(self.sigma, graph_coordinate))

    def boundary_density(self, graph_coordinate: str, edge_coordinate: str) -> Expr:
        """Induced length element of the corner per unit of the remaining parameter."""
        geom = self.geom
        gs, gn = geom.grad(self.sigma), geom.grad(self.nu)
        wedge = ex.sqrt(geom.norm2(gs) * geom.norm2(gn) - geom.dot(gs, gn) ** 2)
        x, y = graph_coordinate, edge_coordinate
        jac = differentiate(self.sigma, x) * differentiate(self.nu, y) - differentiate(self.sigma, y) * differentiate(self.nu, x)
        return wedge * geom.sqrt_det / ex.absolute(jac)

    # -- numerics ------------------------------------------------------------------------------

    def ev(self, e, point) -> np.ndarray:
        shape = np.broadcast(*[np.asarray(v) for v in point.values()]).shape
        return np.broadcast_to(np.asarray(self.geom.evaluate(e, point), dtype=float), shape)

    def check_gradient(self, point, which: str = "sigma", floor: float = 1e-8) -> None:
        side = self.interface if which == "sigma" else self._need_boundary()
        v = self.ev(side.norm, point)
        if np.any(v < floor):
            raise DegenerateGradientError(f"|grad {which}| = {np.min(v):.3e} below {floor:g} on the zero locus")

    def check_angle(self, point) -> np.ndarray:
        s = self.ev(self.sin, point)
        if np.any(s < self.angle_floor):
            raise AngleDegeneracyError(f"sin(theta) = {np.min(s):.3e} below the floor {self.angle_floor:g}")
        return s

    def frame_point(self, point) -> FramePoint:
        self.check_gradient(point)
        sin = self.check_angle(point)
        ev = lambda e: self.ev(e, point)  # noqa: E731
        vec = lambda v: np.array([ev(c) for c in v])  # noqa: E731
        ten = lambda T: np.array([[ev(c) for c in row] for row in T])  # noqa: E731
        return FramePoint(
            point=dict(point), n=vec(self.n), m=vec(self.m), cos=ev(self.cos), sin=sin,
            p=vec(self.p), q=vec(self.q),
            II_sigma=ten(self.II_sigma), H_sigma=ev(self.H_sigma), II0_sigma=ten(self.II0_sigma),
            II_lambda=ten(self.boundary.II), H_lambda=ev(self.H_lambda), II0_lambda=ten(self.II0_lambda),
            metric=vec(self.geom.metric),
        )


def boundary_edges(spec: SurfaceSpec, nu: Expr, samples: int = 7, tol: float = 1e-10):
    """Box edges on which ``nu`` vanishes: list of ``(axis index, value)``.

    The lateral boundary must be a cylinder over the parameter box, so ``nu``
    may not depend on the graph coordinate.
    """
    nu = as_expr(nu)
    if spec.graph_coordinate in ex.free_vars(nu):
        raise GeometryError("lateral boundary must not depend on the graph coordinate")
    edges = []
    for k, ax in enumerate(spec.params):
        if ax.periodic:
            continue
        for val in (ax.lo, ax.hi):
            grids = [np.linspace(p.lo, p.hi, samples) if j != k else np.array([val])
                     for j, p in enumerate(spec.params)]
            mesh = np.meshgrid(*grids, indexing="ij")
            pv = {p.name: m.ravel() for p, m in zip(spec.params, mesh)}
            pv[spec.graph_coordinate] = np.zeros(mesh[0].size)
            vals = np.asarray(spec.geom.evaluate(nu, pv), float)
            if np.max(np.abs(vals)) < tol:
                edges.append((k, val))
    return edges


def integrate_interface(ig: InterfaceGeometry, spec: SurfaceSpec, integrand: Expr,
                        settings: QuadratureSettings = QuadratureSettings(24, 6, 1e-12)) -> float:
    dens = ig.area_density(spec.graph_coordinate) * as_expr(integrand)

    def f(nodes):
        pv = {p.name: v for p, v in zip(spec.params, nodes)}
        pt = spec.point(pv)
        return ig.ev(dens, pt) * np.ones(nodes[0].shape)

    val, _ = adaptive_tensor(f, [p.span for p in spec.params], settings)
    return float(val)


def integrate_corner(ig: InterfaceGeometry, spec: SurfaceSpec, integrand: Expr,
                     settings: QuadratureSettings = QuadratureSettings(24, 6, 1e-12)) -> float:
    """Integral over the corner where the interface meets the lateral boundary."""
    total = 0.0
    for k, val in boundary_edges(spec, ig.nu):
        ax = spec.params[k]
        dens = ig.boundary_density(spec.graph_coordinate, ax.name) * as_expr(integrand)
        rest = [p for j, p in enumerate(spec.params) if j != k]

        def f(nodes, ax=ax, val=val, rest=rest, dens=dens):
            shape = nodes[0].shape if nodes else (1,)
            pv = {p.name: v for p, v in zip(rest, nodes)}
            pv[ax.name] = np.full(shape, val)
            pt = spec.point(pv)
            return ig.ev(dens, pt) * np.ones(shape)

        if rest:
            v, _ = adaptive_tensor(f, [p.span for p in rest], settings)
        else:
            v = f([])[0]
        total += float(v)
    return total


def gauss_bonnet(ig: InterfaceGeometry, spec: SurfaceSpec, method: str = "direct",
                 settings: QuadratureSettings = QuadratureSettings(24, 6, 1e-12)):
    """``(chi, int K, int kappa)`` with ``2 pi chi = int K + int kappa``."""
    if ig.geom.dimension != 3:
        raise GeometryError("Gauss-Bonnet check needs d = 3")
    iK = integrate_interface(ig, spec, ig.K_sigma, settings)
    ik = integrate_corner(ig, spec, ig.kappa(method), settings)
    return (iK + ik) / (2 * np.pi), iK, ik
