"""Order-by-order construction of a conformal unit defining function.

Starting from a seed ``sigma`` the recursion produces ``sigma_bar`` with
``S(sigma_bar) = 1 + B sigma_bar^d + O(sigma_bar^(d+1))``.  Each step removes
the leading residual ``S = 1 + f_l sigma^l + ...`` through

    sigma -> sigma (1 + c_l f_l sigma^l),   c_l = -d / (2 (l+1) (d-l)),

with ``f_l`` extended off the interface independently of the graph
coordinate.  ``f_l`` is obtained symbolically when the scene declares the
interface as a graph (``sigma_graph``), otherwise by transverse polynomial
fits followed by a least-squares fit in the parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import mpmath
import numpy as np

from . import expr as ex
from .conformal import AmbientGeometry, ConformalDensity, GeometryError, s_curvature
from .expr import Expr, ONE, as_expr, differentiate, simplify, substitute
from .volume import Scene

__all__ = [
    "YamabeError", "StepRecord", "YamabeSolution", "first_order_normalize", "order_residual", "improve",
    "correction_constant", "solve_unit", "obstruction", "residual_slope", "unit_scene", "taylor_coefficients",
]


class YamabeError(RuntimeError):
    pass


def correction_constant(ell: int, d: int) -> float:
    if ell >= d:
        raise YamabeError(f"no correction at order {ell} >= d = {d}: the residual there is the obstruction")
    return -d / (2 * (ell + 1) * (d - ell))


@dataclass
class StepRecord:
    order: int
    f: Expr  # residual coefficient on the interface, as a function of the parameters
    constant: float
    correction: Expr  # c_l f_l
    slope: float  # observed decay order of S - 1 after the step


@dataclass
class YamabeSolution:
    sigma_hat: Expr
    sigma_bar: Expr
    steps: list[StepRecord]
    coefficients: list[Expr]  # a_1, ..., a_(d-1) of sigma_bar = sigma_hat (1 + a_1 sigma_hat + ...)
    B: Expr
    achieved_order: float
    samples: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sigma_hat": ex.to_string(self.sigma_hat),
            "sigma_bar": ex.to_string(self.sigma_bar),
            "steps": [{"order": s.order, "f": ex.to_string(s.f), "constant": s.constant,
                       "correction": ex.to_string(s.correction), "observed_order": s.slope} for s in self.steps],
            "coefficients": [ex.to_string(a) for a in self.coefficients],
            "B": ex.to_string(self.B),
            "achieved_order": self.achieved_order,
            "samples": self.samples,
        }


def first_order_normalize(sigma, geom: AmbientGeometry) -> ConformalDensity:
    """``sigma / |grad sigma|``, so that ``S = 1 + O(sigma)``."""
    s = as_expr(sigma.rep if isinstance(sigma, ConformalDensity) else sigma)
    return ConformalDensity(1, s / ex.sqrt(geom.norm2(geom.grad(s))))


def _on_interface(e: Expr, scene: Scene) -> Expr:
    """Restrict to the interface by substituting the graph coordinate."""
    return simplify(substitute(e, {scene.graph_coordinate: scene.sigma_graph}))


def order_residual(scene: Scene, sigma: Expr, ell: int, basis: Sequence[Expr] | None = None,
                   grid: int = 9) -> Expr:
    """``f_l`` with ``S(sigma) = 1 + f_l sigma^l + O(sigma^(l+1))``, as an expression in the parameters."""
    geom = scene.geometry
    x = scene.graph_coordinate
    S = s_curvature(sigma, geom).rep
    if scene.sigma_graph is not None:
        top = S
        for _ in range(ell):
            top = differentiate(top, x)
        return _on_interface(top / differentiate(sigma, x) ** ell / math.factorial(ell), scene)
    return _numeric_residual(scene, sigma, S, ell, basis, grid)


def _numeric_residual(scene: Scene, sigma: Expr, S: Expr, ell: int, basis, grid: int) -> Expr:
    """Transverse polynomial fits of ``S - 1`` against ``sigma``, then least squares in ``basis``."""
    spec = scene.spec(sigma)
    axes = scene.params
    mesh = np.meshgrid(*[np.linspace(a.lo, a.hi, grid, endpoint=not a.periodic) for a in axes], indexing="ij")
    pv = {a.name: m.ravel() for a, m in zip(axes, mesh)}
    levels = 0.02 * np.arange(-4, 5) / 4
    vals, sig_vals = [], []
    for lv in levels:
        pt = spec.point(pv, lv)
        vals.append(scene.ev(S, pt) - 1.0)
        sig_vals.append(np.full(mesh[0].size, lv))
    V = np.array(vals)  # (levels, npts)
    deg = ell + 4
    A = np.vander(levels, deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(A, V, rcond=None)
    f_vals = coef[ell]
    if basis is None:
        basis = _default_basis(axes)
    basis = [as_expr(b) for b in basis]
    M = np.column_stack([np.broadcast_to(scene.ev(b, pv), f_vals.shape) for b in basis])
    w, *_ = np.linalg.lstsq(M, f_vals, rcond=None)
    resid = float(np.max(np.abs(M @ w - f_vals)))
    if resid > 1e-9 * max(1.0, float(np.max(np.abs(f_vals)))):
        raise YamabeError(f"interpolation residual {resid:.3e} for f_{ell} exceeds 1e-9; "
                          "declare sigma_graph or supply a richer basis")
    out = ex.ZERO
    for c, b in zip(w, basis):
        if abs(c) > 1e-14:
            out = out + float(c) * b
    return simplify(out)


def _default_basis(axes) -> list[Expr]:
    out: list[Expr] = [ONE]
    for a in axes:
        v = ex.Var(a.name)
        if a.periodic:
            per = 2 * math.pi / (a.hi - a.lo)
            out += [f(ex.Const(k * per) * v) for k in range(1, 4) for f in (ex.cos, ex.sin)]
        else:
            out += [v**k for k in range(1, 9)]
    return out


def improve(sigma: Expr, f: Expr, ell: int, d: int, extension: Expr = ONE) -> Expr:
    """``sigma (1 + c_l f sigma^l)``; ``extension`` (equal to 1 on the interface) reshapes ``f`` off it."""
    c = correction_constant(ell, d)
    return sigma * (ONE + c * f * as_expr(extension) * sigma**ell)


def taylor_coefficients(scene: Scene, sigma_bar: Expr, sigma_hat: Expr, count: int) -> list[Expr]:
    """``a_j`` in ``sigma_bar = sigma_hat (1 + a_1 sigma_hat + ...)`` on the interface."""
    x = scene.graph_coordinate
    dx_hat = differentiate(sigma_hat, x)
    out = []
    cur = sigma_bar
    for j in range(1, count + 1):
        cur = differentiate(cur, x) / dx_hat
        if j >= 2:
            out.append(_on_interface(cur / math.factorial(j), scene))
    cur = differentiate(cur, x) / dx_hat
    out.append(_on_interface(cur / math.factorial(count + 1), scene))
    return out


def residual_slope(scene: Scene, sigma: Expr, subtract: Expr | None = None, power: int = 0,
                   hs: Sequence[float] = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4), samples: int = 4, dps: int = 40) -> float:
    """Log-log slope of ``|S - 1 - subtract sigma^power|`` against the transverse distance.

    The distance ``h`` is taken along the graph coordinate from interface
    points; evaluation uses ``dps``-digit arithmetic so that residuals far
    below double-precision round-off remain measurable.  Returns the smallest
    slope over the sampled parameter points.
    """
    if scene.sigma_graph is None:
        raise YamabeError("residual scaling needs the interface graph")
    geom = scene.geometry
    x = scene.graph_coordinate
    resid = s_curvature(sigma, geom).rep - ONE
    if subtract is not None:
        resid = resid - as_expr(subtract) * sigma**power
    slopes = []
    with mpmath.workdps(dps):
        for i in range(samples):
            pt = {}
            for a in scene.params:
                frac = (i + 0.5) / samples
                pt[a.name] = mpmath.mpf(a.lo + frac * (a.hi - a.lo) * (0.9 if not a.periodic else 1.0)) + mpmath.mpf("0.05")
            base = ex.evaluate(scene.sigma_graph, pt)
            ys = []
            for h in hs:
                vals = [abs(ex.evaluate(resid, {**pt, x: base + sgn * mpmath.mpf(h)})) for sgn in (1, -1)]
                ys.append(max(vals))
            ys = np.array([float(v) for v in ys])
            if np.all(ys < 1e-30):
                slopes.append(math.inf)
                continue
            slope = np.polyfit(np.log(hs), np.log(ys), 1)[0]
            slopes.append(float(slope))
    return min(slopes)


def solve_unit(scene: Scene, order: int | None = None, extension: Expr = ONE, check: bool = True) -> YamabeSolution:
    """Improve the scene's ``sigma`` until ``S = 1 + O(sigma^order)`` (default ``order = d``)."""
    geom = scene.geometry
    d = geom.dimension
    order = d if order is None else order
    if not 1 <= order <= d:
        raise YamabeError(f"order must lie in 1..{d}")
    sigma_hat = first_order_normalize(scene.sigma, geom).rep
    grad0 = geom.norm2(geom.grad(scene.sigma))
    if scene.sigma_graph is not None:
        g0 = scene.ev(_on_interface(grad0, scene), _param_grid(scene))
        if np.min(g0) < 1e-16:
            raise GeometryError("degenerate gradient of the seed on its zero locus")
    cur = sigma_hat
    steps = []
    for ell in range(1, order):
        f = order_residual(scene, cur, ell)
        new = improve(cur, f, ell, d, extension)
        slope = residual_slope(scene, new) if (check and scene.sigma_graph is not None) else math.nan
        if check and np.isfinite(slope) and slope < ell + 1 - 0.1:
            raise YamabeError(f"step {ell} did not raise the residual order (observed {slope:.2f})")
        steps.append(StepRecord(ell, f, correction_constant(ell, d), simplify(correction_constant(ell, d) * f), slope))
        cur = new
    coeffs = taylor_coefficients(scene, cur, sigma_hat, order - 1) if order > 1 and scene.sigma_graph is not None else []
    if coeffs:
        # canonical polynomial form: the same zero locus and residual up to order ``order``
        poly = ONE
        for j, a in enumerate(coeffs, start=1):
            poly = poly + a * sigma_hat**j
        cur = sigma_hat * poly
    B = order_residual(scene, cur, order) if scene.sigma_graph is not None else ex.ZERO
    achieved = residual_slope(scene, cur) if (check and scene.sigma_graph is not None) else math.nan
    sol = YamabeSolution(sigma_hat, cur, steps, coeffs, B, achieved)
    if scene.sigma_graph is not None:
        pv = _param_grid(scene)
        sol.samples = {a.name: pv[a.name].tolist() for a in scene.params}
        sol.samples["B"] = np.broadcast_to(scene.ev(B, pv), pv[scene.params[0].name].shape).tolist()
    return sol


def _param_grid(scene: Scene, n: int = 9) -> dict:
    mesh = np.meshgrid(*[np.linspace(a.lo, a.hi, n, endpoint=not a.periodic) for a in scene.params], indexing="ij")
    return {a.name: m.ravel() for a, m in zip(scene.params, mesh)}


def obstruction(solution: YamabeSolution) -> Expr:
    """``B`` with ``S(sigma_bar) = 1 + B sigma_bar^d + ...`` on the interface."""
    return solution.B


def unit_scene(scene: Scene, order: int | None = None, completion: bool = True) -> Scene:
    """Scene whose defining function is the unit defining function built from ``scene.sigma``.

    With ``completion`` the quartic ``sigma_hat^4`` is added: it leaves
    ``S`` unchanged through order ``sigma^3`` and keeps the function
    monotone across a wide transverse window.
    """
    sol = solve_unit(scene, order)
    sig = sol.sigma_bar
    if completion:
        sig = sig + sol.sigma_hat ** (scene.d + 1)
    new = replace(scene, sigma=sig, far=None, sigma_graph=scene.sigma_graph)
    new.spec().check_monotone()
    return new
