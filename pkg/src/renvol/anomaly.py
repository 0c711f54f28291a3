"""Closed-form divergences and anomaly of surfaces in conformal 3-manifolds.

All integrands are assembled symbolically from the conformal calculus and the
interface geometry, then integrated over the interface ``Sigma`` and its
corner ``dSigma`` (where the interface meets the lateral boundary).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .conformal import (
    GeometryError, LogDensity, coupled_gradient, laplace_robin, laplace_robin_log, operator_L, s_curvature,
)
from .expr import Expr, ONE
from .hypersurface import InterfaceGeometry, gauss_bonnet, integrate_corner, integrate_interface
from .quadrature import QuadratureSettings
from .volume import Scene

__all__ = [
    "AnomalyBreakdown", "UnitConditionError", "leading_divergences", "surface_Q", "surface_T",
    "anomaly_closed_form", "yamabe_anomaly", "yamabe_divergences", "yamabe_QT", "check_unit",
]

SETTINGS = QuadratureSettings(24, 6, 1e-12)


class UnitConditionError(ValueError):
    """The defining function does not satisfy ``S = 1 + O(sigma^3)``."""


@dataclass
class AnomalyBreakdown:
    method: str
    bulk: float  # contribution of the Sigma integral
    boundary: float  # contribution of the corner integral
    total: float
    terms: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "bulk": self.bulk, "boundary": self.boundary, "total": self.total,
                "terms": self.terms, "samples": self.samples}


def _require_d3(scene: Scene):
    if scene.d != 3:
        raise GeometryError("closed-form surface formulas need d = 3")
    if scene.measure.mode != "conformal":
        raise GeometryError("closed-form formulas need the conformal measure")


def _interface(scene: Scene, angle_floor: float = 1e-3) -> InterfaceGeometry:
    if scene.nu is None:
        raise GeometryError("scene has no lateral boundary")
    return scene.interface(angle_floor)


def _samples(scene: Scene, ig: InterfaceGeometry, integrand: Expr, corner: bool, n: int = 5) -> dict:
    """Integrand values on a small parameter grid (for reports)."""
    spec = scene.spec()
    axes = scene.params
    grids = []
    for ax in axes:
        hi = ax.hi - (ax.hi - ax.lo) / n if ax.periodic else ax.hi
        grids.append(np.linspace(ax.lo, hi, n))
    mesh = np.meshgrid(*grids, indexing="ij")
    pv = {a.name: m.ravel() for a, m in zip(axes, mesh)}
    if corner:
        from .hypersurface import boundary_edges

        edges = boundary_edges(spec, ig.nu)
        if not edges:
            return {}
        k, val = edges[-1]
        pv[axes[k].name] = np.full(mesh[0].size, val)
    pt = spec.point(pv)
    vals = ig.ev(integrand, pt)
    out = {name: np.asarray(v, float).tolist() for name, v in pv.items()}
    out["value"] = np.asarray(vals, float).tolist()
    return out


# -- general (S not assumed 1) ------------------------------------------------------------------------------


def leading_divergences(scene: Scene, settings: QuadratureSettings = SETTINGS) -> dict:
    """Coefficients of ``eps^-(d-1)`` and ``eps^-(d-2)`` from interface integrals."""
    _require_d3(scene)
    d = scene.d
    geom, sig, tau = scene.geometry, scene.sigma, scene.tau
    ig = _interface(scene)
    spec = scene.spec()
    S = s_curvature(sig, geom).rep
    top = integrate_interface(ig, spec, ONE / (ex.sqrt(S) * tau ** (d - 1)), settings) / (d - 1)
    phi = laplace_robin(sig, _weighted(ONE / (S * tau ** (d - 2)), 2 - d), geom).rep
    bulk_int = integrate_interface(ig, spec, phi / ex.sqrt(S), settings) / (d - 2)
    S_b = ig.s_curvature_boundary
    bnd_int = integrate_corner(ig, spec, ig.cos / (ex.sqrt(S * S_b) * tau ** (d - 2)), settings)
    nxt = -(bulk_int + bnd_int) / (d - 2)
    return {"c_top": top, "c_next": nxt, "bulk_next": -bulk_int / (d - 2), "boundary_next": -bnd_int / (d - 2)}


def _weighted(rep: Expr, w: float):
    from .conformal import ConformalDensity

    return ConformalDensity(w, rep)


def _log_tau(scene: Scene) -> LogDensity:
    return LogDensity(1, ex.log(scene.tau))


def surface_Q(scene: Scene) -> Expr:
    """``Q = S^-1/2 D(S^-1 L log tau)`` as an expression (weight -2, scene scale)."""
    _require_d3(scene)
    geom, sig = scene.geometry, scene.sigma
    S = s_curvature(sig, geom).rep
    L = operator_L(sig, geom, _log_tau(scene)).rep
    return laplace_robin(sig, _weighted(L / S, -1), geom).rep / ex.sqrt(S)


def surface_T(scene: Scene, parts: bool = False):
    """Corner integrand ``T`` (weight -1); ``parts=True`` returns the two terms."""
    _require_d3(scene)
    geom, sig, tau = scene.geometry, scene.sigma, scene.tau
    ig = _interface(scene)
    S = s_curvature(sig, geom).rep
    S_b = ig.s_curvature_boundary
    L = operator_L(sig, geom, _log_tau(scene)).rep
    n_tau = tuple(c / tau for c in coupled_gradient(tau, _weighted(sig, 1), geom).components)
    first = ig.cos / ex.sqrt(S * S_b) * L
    second = geom.along(ig.q, geom.dot(ig.m, n_tau) / (S * S_b))
    return (first, second) if parts else first + second


def anomaly_closed_form(scene: Scene, settings: QuadratureSettings = SETTINGS) -> AnomalyBreakdown:
    """``A = (1/2) int_Sigma Q + (1/2) int_dSigma T``."""
    ig = _interface(scene)
    spec = scene.spec()
    Q = surface_Q(scene)
    T = surface_T(scene)
    bulk = 0.5 * integrate_interface(ig, spec, Q, settings)
    bnd = 0.5 * integrate_corner(ig, spec, T, settings)
    return AnomalyBreakdown("conformal3", bulk, bnd, bulk + bnd,
                            terms={"half_integral_Q": bulk, "half_integral_T": bnd},
                            samples={"Q": _samples(scene, ig, Q, False), "T": _samples(scene, ig, T, True)})


# -- singular Yamabe mode ---------------------------------------------------------------------------------


def check_unit(scene: Scene, order: int = 3, samples: int = 5, h: float = 2e-2) -> dict:
    """Verify ``S - 1 = O(sigma^order)`` by transverse scaling.

    On a parameter grid, the largest ``|S - 1|`` is measured on the levels
    ``sigma = +-h`` and ``+-h/2``; the observed order ``log2`` of their ratio
    must be at least ``order - 0.5`` unless the residual is at round-off.  The
    sup norm is used so that zeros of the leading coefficient at single grid
    points do not distort the estimate.  Raises :class:`UnitConditionError`
    otherwise.
    """
    geom, sig = scene.geometry, scene.sigma
    spec = scene.spec()
    resid = s_curvature(sig, geom).rep - ONE
    grids = [np.linspace(a.lo, a.hi, samples) for a in scene.params]
    mesh = np.meshgrid(*grids, indexing="ij")
    pv = {a.name: m.ravel() for a, m in zip(scene.params, mesh)}
    on = np.abs(scene.ev(resid, spec.point(pv, 0.0)))
    worst_order, worst_const = math.inf, 0.0
    if np.max(on) > 1e-8:
        raise UnitConditionError(f"|S - 1| = {np.max(on):.3e} on the zero locus: not a unit defining function")
    for sgn in (1.0, -1.0):
        r1 = float(np.max(np.abs(scene.ev(resid, spec.point(pv, sgn * h)))))
        r2 = float(np.max(np.abs(scene.ev(resid, spec.point(pv, sgn * h / 2)))))
        if r1 > 1e-11:
            worst_order = min(worst_order, math.log2(r1 / max(r2, 1e-300)))
        worst_const = max(worst_const, r1 / h**order)
    if worst_order < order - 0.5:
        raise UnitConditionError(f"S - 1 decays with order {worst_order:.2f} < {order} in sigma")
    return {"observed_order": worst_order, "constant": worst_const}


def yamabe_QT(scene: Scene):
    """``(Q, T)`` in unit mode: ``Q = K - |II0|^2/2`` and the corner term with ``S = 1``."""
    _require_d3(scene)
    geom, sig, tau = scene.geometry, scene.sigma, scene.tau
    ig = _interface(scene)
    Q = ig.K_sigma - ig.interface.II0_squared / 2
    S_b = ig.s_curvature_boundary
    Dlog = laplace_robin_log(sig, _log_tau(scene), geom).rep
    n_tau = tuple(c / tau for c in coupled_gradient(tau, _weighted(sig, 1), geom).components)
    T = ig.cos / ex.sqrt(S_b) * Dlog + geom.along(ig.q, geom.dot(ig.m, n_tau) / S_b)
    return Q, T


def yamabe_anomaly(scene: Scene, settings: QuadratureSettings = SETTINGS, verify_unit: bool = True,
                   angle_floor: float = 1e-3) -> AnomalyBreakdown:
    """Anomaly from the Euler characteristic and trace-free second fundamental forms."""
    _require_d3(scene)
    unit = check_unit(scene) if verify_unit else {}
    ig = _interface(scene, angle_floor)
    spec = scene.spec()
    chi, iK, ikappa = gauss_bonnet(ig, spec, settings=settings)
    chi_int = round(chi)
    chi_used = float(chi_int) if abs(chi - chi_int) < 1e-6 else chi
    euler = math.pi * chi_used
    ii0 = integrate_interface(ig, spec, ig.interface.II0_squared, settings)
    s3 = ig.sin**3
    corner_e = (ig.II0_lambda_qq - ig.cos * ig.II0_sigma_pp) / s3 - ig.cos / ig.sin * ig.II0_sigma_pp / 2
    corner = integrate_corner(ig, spec, corner_e, settings)
    bulk = euler - ii0 / 4
    terms = {"pi_chi": euler, "chi": chi, "integral_II0_squared": ii0, "minus_quarter_II0_squared": -ii0 / 4,
             "corner": corner, "integral_K": iK, "integral_kappa": ikappa, **unit}
    return AnomalyBreakdown("yamabe", bulk, corner, bulk + corner, terms=terms,
                            samples={"II0_squared": _samples(scene, ig, ig.interface.II0_squared, False),
                                     "corner": _samples(scene, ig, corner_e, True)})


def yamabe_divergences(scene: Scene, settings: QuadratureSettings = SETTINGS) -> dict:
    """``c2 = area/2`` and ``c1 = int H - int cot(theta)`` (unit mode, ``tau = 1``)."""
    _require_d3(scene)
    ig = _interface(scene)
    spec = scene.spec()
    area = integrate_interface(ig, spec, ONE, settings)
    iH = integrate_interface(ig, spec, ig.H_sigma, settings)
    icot = integrate_corner(ig, spec, ig.cos / ig.sin, settings)
    return {"c_top": area / 2, "c_next": iH - icot, "area": area, "integral_H": iH, "integral_cot": icot}
