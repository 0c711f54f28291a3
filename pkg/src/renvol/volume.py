"""Regulated volumes, level-set integrals and expansion extraction.

A scene describes a region ``D`` (a parameter box times a transverse window in
the graph coordinate, cut by the lateral boundary ``nu = 0`` along box edges),
a defining function ``sigma``, a regulator ``tau`` and a measure ``mu``.  The
regulated volume is

    Vol(eps) = integral of mu * sigma^-k over {eps < sigma/tau, far < U}

and for integer ``k``

    Vol(eps) = sum_l c_l eps^-l + A log(eps) + Vol_ren + O(eps).

Two independent routes give the coefficients: Taylor data of the level
integral ``I(s) = int mu delta(sigma - s)`` (central differences with
Richardson extrapolation) and a least-squares fit to direct quadratures of
``Vol(eps)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .conformal import AmbientGeometry, GeometryError
from .expr import Expr, ONE, as_expr, differentiate
from .hypersurface import InterfaceGeometry, ParamAxis, SurfaceSpec, boundary_edges
from .quadrature import (
    QuadratureError, QuadratureSettings, RootError, adaptive_tensor, gauss_legendre, tensor_rule,
)

__all__ = [
    "Measure", "FDSettings", "Scene", "ExpansionReport", "NumericsError", "WindowError",
    "normalize_regulator", "regulated_volume", "level_integral", "delta_pairing",
    "expansion_coefficients", "sweep_fit", "transform_check", "line_anomaly_2d", "richardson_derivative",
    "coarea_check", "sweep_table",
]


class NumericsError(RuntimeError):
    def __init__(self, message: str, table=None):
        self.table = table
        super().__init__(message)


class WindowError(NumericsError):
    pass


@dataclass(frozen=True, eq=False)
class Measure:
    """``conformal``: the metric volume density with ``k = d``.

    ``explicit``: a positive coordinate density ``m`` (w.r.t. the coordinate
    Lebesgue measure) with real weight ``k >= 1``.
    """

    mode: str = "conformal"
    density: Expr | None = None
    k: float | None = None

    def __post_init__(self):
        if self.mode not in ("conformal", "explicit"):
            raise ValueError(f"unknown measure mode {self.mode!r}")
        if self.mode == "explicit":
            if self.density is None or self.k is None:
                raise ValueError("explicit measure needs a density and k")
            object.__setattr__(self, "density", as_expr(self.density))
            if self.k < 1:
                raise ValueError("k must be at least 1")


@dataclass(frozen=True)
class FDSettings:
    base_step: float = 0.05
    richardson_levels: int = 7
    rel_tol: float = 1e-6


@dataclass(frozen=True, eq=False)
class Scene:
    geometry: AmbientGeometry
    sigma: Expr
    graph_coordinate: str
    window: tuple[float, float]
    params: tuple[ParamAxis, ...]
    tau: Expr = ONE
    nu: Expr | None = None
    measure: Measure = Measure()
    cutoff_U: float = 1.0
    far: Expr | None = None
    quadrature: QuadratureSettings = QuadratureSettings()
    fd: FDSettings = FDSettings()
    sigma_graph: Expr | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sigma", as_expr(self.sigma))
        object.__setattr__(self, "tau", as_expr(self.tau))
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "window", tuple(float(w) for w in self.window))
        if self.nu is not None:
            object.__setattr__(self, "nu", as_expr(self.nu))
        if self.far is None:
            object.__setattr__(self, "far", self.sigma / self.tau)
        else:
            object.__setattr__(self, "far", as_expr(self.far))
        if self.sigma_graph is not None:
            object.__setattr__(self, "sigma_graph", as_expr(self.sigma_graph))

    @property
    def d(self) -> int:
        return self.geometry.dimension

    @property
    def k(self) -> float:
        return float(self.d) if self.measure.mode == "conformal" else float(self.measure.k)

    @property
    def integer_k(self) -> bool:
        return float(self.k).is_integer()

    def density(self) -> Expr:
        """Coordinate density of the measure in the scene's own scale."""
        if self.measure.mode == "conformal":
            return self.geometry.sqrt_det
        return self.measure.density

    def spec(self, defining: Expr | None = None) -> SurfaceSpec:
        return SurfaceSpec(self.geometry, self.sigma if defining is None else defining,
                           self.graph_coordinate, self.window, self.params)

    def interface(self, angle_floor: float = 1e-3) -> InterfaceGeometry:
        return InterfaceGeometry(self.geometry, self.sigma, self.nu, angle_floor)

    def with_regulator(self, tau) -> "Scene":
        """Same region and far cutoff, new regulator."""
        return replace(self, tau=as_expr(tau), far=self.far)

    def rescaled(self, omega0) -> "Scene":
        """The same densities expressed in the scale ``Omega0^2 g``."""
        om = as_expr(omega0)
        meas = self.measure
        if meas.mode == "explicit":
            meas = Measure("explicit", meas.density * om ** meas.k, meas.k)
        return replace(self, geometry=self.geometry.rescaled(om), sigma=self.sigma * om, tau=self.tau * om,
                       measure=meas, far=self.far, sigma_graph=self.sigma_graph)

    def with_cutoff(self, U: float) -> "Scene":
        return replace(self, cutoff_U=float(U))

    def ev(self, e, point):
        shape = np.broadcast(*[np.asarray(v) for v in point.values()]).shape
        return np.broadcast_to(np.asarray(self.geometry.evaluate(e, point), dtype=float), shape)


def normalize_regulator(scene: Scene) -> Scene:
    """Equivalent scene with ``tau = 1``: ``sigma/tau``, ``mu/tau^k``, ``Omega/tau``."""
    if scene.tau is ONE:
        return scene
    t = scene.tau
    if scene.measure.mode == "conformal":
        geom = scene.geometry.with_factor(scene.geometry.conformal_factor / t)
        meas = scene.measure
    else:
        geom = scene.geometry
        meas = Measure("explicit", scene.measure.density / t ** scene.measure.k, scene.measure.k)
    return replace(scene, geometry=geom, sigma=scene.sigma / t, tau=ONE, measure=meas, far=scene.far,
                   sigma_graph=scene.sigma_graph)


# -- level integrals --------------------------------------------------------------------------------


def _param_nodes(scene: Scene, panels: int):
    nodes, w = tensor_rule([p.span for p in scene.params], scene.quadrature.nodes, panels)
    return {p.name: v for p, v in zip(scene.params, nodes)}, w


def _solve_levels(scene: Scene, pv: dict, levels: np.ndarray, defining: Expr) -> np.ndarray:
    """Graph coordinate at each (level, parameter node): shape ``levels.shape + (nnodes,)``."""
    spec = scene.spec(defining)
    npts = next(iter(pv.values())).size if pv else 1
    L = np.asarray(levels, float)
    grid = {k: np.broadcast_to(v, L.shape + (npts,)) for k, v in pv.items()}
    try:
        return spec.solve(grid, L[..., None] * np.ones(npts), defining)
    except RootError as err:
        raise WindowError(f"level set leaves the transverse window: {err}") from None


def level_integral(scene: Scene, s, phi=None, normalized: bool = False, return_error: bool = False):
    """``I_phi(s) = int mu phi delta(sigma/tau - s)`` by the coarea rule (vectorised over ``s``)."""
    sc = scene if normalized else normalize_regulator(scene)
    s_arr = np.atleast_1d(np.asarray(s, float))
    phi_e = ONE if phi is None else as_expr(phi)
    x = sc.graph_coordinate
    integrand = sc.density() * phi_e / ex.absolute(differentiate(sc.sigma, x))
    q = sc.quadrature
    prev = None
    panels = 1
    for _ in range(q.max_depth + 1):
        pv, w = _param_nodes(sc, panels)
        xs = _solve_levels(sc, pv, s_arr, sc.sigma)
        pt = {**{k: np.broadcast_to(v, xs.shape) for k, v in pv.items()}, x: xs}
        vals = sc.ev(integrand, pt) @ w
        if prev is not None:
            err = np.max(np.abs(vals - prev))
            if err <= max(q.rel_tol * np.max(np.abs(vals)), q.abs_tol):
                out = vals if np.ndim(s) else vals[0]
                return (out, err) if return_error else out
        prev = vals
        panels *= 2
    raise QuadratureError("level integral did not converge", float(np.max(np.abs(vals))), float(err))


def coarea_check(scene: Scene) -> tuple[float, float]:
    """``I(0)`` with ``phi = sqrt(S) `` versus direct induced-area quadrature of the interface."""
    from .conformal import s_curvature
    from .hypersurface import integrate_interface

    sc = normalize_regulator(scene)
    if sc.measure.mode != "conformal":
        raise GeometryError("coarea check needs the conformal measure")
    S = s_curvature(sc.sigma, sc.geometry).rep
    lhs = float(level_integral(sc, 0.0, ex.sqrt(S), normalized=True))
    rhs = integrate_interface(sc.interface(), sc.spec(), ONE,
                              QuadratureSettings(sc.quadrature.nodes, sc.quadrature.max_depth, 1e-12))
    return lhs, rhs


# -- finite differences ---------------------------------------------------------------------------------


def _central_weights(j: int):
    p = max(1, (j + 1) // 2)
    offs = np.arange(-p, p + 1)
    V = np.vander(offs.astype(float), 2 * p + 1, increasing=True).T
    rhs = np.zeros(2 * p + 1)
    rhs[j] = math.factorial(j)
    return offs, np.linalg.solve(V, rhs)


def richardson_derivative(f: Callable[[np.ndarray], np.ndarray], j: int, settings: FDSettings,
                          abs_floor: float = 0.0):
    """``f^(j)(0)`` by second-order central differences and Richardson extrapolation in ``h^2``.

    Returns ``(value, error_estimate, table)``; raises :class:`NumericsError`
    (carrying the table) when successive diagonal entries never agree to
    ``rel_tol`` (or ``abs_floor``).
    """
    if j == 0:
        v = float(np.asarray(f(np.zeros(1)))[0])
        return v, 0.0, [[v]]
    offs, wts = _central_weights(j)
    hs = settings.base_step / 2.0 ** np.arange(settings.richardson_levels)
    pts = (hs[:, None] * offs[None, :]).ravel()
    vals = np.asarray(f(pts), float).reshape(len(hs), len(offs))
    D = (vals @ wts) / hs**j
    table: list[list[float]] = []
    best, best_err = None, math.inf
    for i in range(len(hs)):
        row = [float(D[i])]
        for m in range(1, i + 1):
            row.append(row[m - 1] + (row[m - 1] - table[i - 1][m - 1]) / (4.0**m - 1))
        table.append(row)
        if i >= 1:
            err = abs(row[-1] - table[i - 1][-1])
            if err < best_err:
                best, best_err = row[-1], err
            if err <= max(settings.rel_tol * abs(row[-1]), abs_floor):
                return row[-1], err, table
    raise NumericsError(f"Richardson table for derivative order {j} did not converge "
                        f"(best {best!r}, error {best_err:.3e})", table)


def delta_pairing(scene: Scene, j: int, phi=None, normalized: bool = False, return_error: bool = False):
    """``int mu phi delta^(j)(sigma/tau) = (-1)^j I_phi^(j)(0)``."""
    sc = scene if normalized else normalize_regulator(scene)
    if j > sc.k - 1 + 1e-12:
        raise ValueError("derivative order exceeds k - 1")
    val, err, table = _level_derivative(sc, j, phi)
    out = (-1) ** j * val
    return (out, err) if return_error else out


def _level_derivative(sc: Scene, j: int, phi=None, i0: float | None = None):
    f = lambda s: level_integral(sc, s, phi, normalized=True)  # noqa: E731
    if i0 is None:
        i0 = abs(float(f(np.zeros(1))[0]))
    floor = sc.fd.rel_tol * max(i0, 1e-300)
    return richardson_derivative(f, j, sc.fd, abs_floor=floor)


# -- reports --------------------------------------------------------------------------------------------


@dataclass
class ExpansionReport:
    method: str
    k: float
    divergences: dict  # exponent -> coefficient of eps^-exponent
    anomaly: float | None
    renormalized_volume: float | None
    cutoff_U: float
    diagnostics: dict = field(default_factory=dict)

    def coefficient(self, ell: float) -> float:
        for key, v in self.divergences.items():
            if abs(float(key) - ell) < 1e-12:
                return v
        return 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "divergences": {f"{float(k):g}": v for k, v in self.divergences.items()},
            "anomaly": self.anomaly,
            "renormalized_volume": self.renormalized_volume,
            "cutoff_U": self.cutoff_U,
            "diagnostics": self.diagnostics,
        }


def _divergence_exponents(k: float) -> list[tuple[int, float]]:
    """``(j, ell)`` pairs: Taylor order ``j`` of ``I`` feeds ``eps^-ell``."""
    if float(k).is_integer():
        return [(int(k) - 1 - ell, float(ell)) for ell in range(int(k) - 1, 0, -1)]
    return [(j, k - 1 - j) for j in range(int(math.floor(k))) if k - 1 - j > 0]


def expansion_coefficients(scene: Scene, eps_ren: float = 1e-3) -> ExpansionReport:
    """Divergences and anomaly from Taylor data of ``I(s)`` at ``s = 0``."""
    sc = normalize_regulator(scene)
    k = sc.k
    i0 = abs(float(level_integral(sc, 0.0, normalized=True)))
    derivs, diag = {}, {"fd_base_step": sc.fd.base_step, "richardson_levels": sc.fd.richardson_levels}
    kmax = int(math.floor(k)) + 1
    for j in range(0, kmax + 1):
        try:
            v, err, table = _level_derivative(sc, j, None, i0)
        except NumericsError:
            if j <= k - 1:
                raise
            v, err = float("nan"), float("nan")
        derivs[j] = v
        diag[f"I_derivative_{j}"] = v
        diag[f"I_derivative_{j}_error"] = err
    divs = {}
    for j, ell in _divergence_exponents(k):
        divs[ell] = derivs[j] / (math.factorial(j) * ell)
    A = -derivs[int(k) - 1] / math.factorial(int(k) - 1) if sc.integer_k else None
    # renormalized volume: one direct quadrature minus the singular terms and the O(eps) remainder
    V = regulated_volume(sc, eps_ren, normalized=True)
    ren = V - sum(c * eps_ren ** (-ell) for ell, c in divs.items())
    if A is not None:
        ren -= A * math.log(eps_ren)
    for j in range(int(math.floor(k)), kmax + 1):
        p = j - k + 1
        if p > 0 and np.isfinite(derivs.get(j, np.nan)):
            ren += derivs[j] / math.factorial(j) * eps_ren**p / p
    diag["eps_renormalization"] = eps_ren
    return ExpansionReport("level-derivative", k, divs, A, ren, sc.cutoff_U, diag)


# -- direct regulated volume ------------------------------------------------------------------------------

_BLOCK = 1 << 16


def worker_count() -> int:
    """Threads for per-eps quadrature blocks, from ``RENVOL_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("RENVOL_THREADS", "1")))
    except ValueError:
        return 1


def regulated_volume(scene: Scene, eps, normalized: bool = False, transverse_nodes: int = 16):
    """``Vol(eps)`` by direct integration in the graph coordinate (vectorised over ``eps``).

    Each transverse segment from ``sigma/tau = eps`` to the far cutoff is split
    into geometrically growing panels starting at width ``eps/|d_x sigma|``.
    """
    sc = scene if normalized else normalize_regulator(scene)
    eps_arr = np.atleast_1d(np.asarray(eps, float))
    if np.any(eps_arr <= 0):
        raise ValueError("eps must be positive")
    x = sc.graph_coordinate
    k = sc.k
    integrand = sc.density() / sc.sigma ** k
    dsig = differentiate(sc.sigma, x)
    t_gl, w_gl = gauss_legendre(transverse_nodes)
    q = sc.quadrature
    U = sc.cutoff_U

    def volume_at(pv, w):
        npts = w.size
        x_far = _solve_levels(sc, pv, np.array([U]), sc.far)[0]
        out = np.zeros(eps_arr.size)
        live = eps_arr < U
        if not np.any(live):
            return out
        e_live = eps_arr[live]
        x_eps = _solve_levels(sc, pv, e_live, sc.sigma)  # (ne, npts)
        slope = np.abs(sc.ev(dsig, {**{kk: np.broadcast_to(v, x_eps.shape) for kk, v in pv.items()}, x: x_eps}))
        direction = np.sign(x_far - x_eps)
        length = np.abs(x_far - x_eps)
        # far cutoff below the eps level: empty segment
        sig_far = sc.ev(sc.sigma, {**pv, x: x_far})
        length = np.where(sig_far[None, :] > e_live[:, None], length, 0.0)
        h0 = e_live[:, None] / slope
        J = int(np.ceil(np.log2(np.max(length / h0) + 1))) + 1
        edges = np.minimum(h0[..., None] * (2.0 ** np.arange(J + 1) - 1), length[..., None])
        widths = np.diff(edges, axis=-1)  # (ne, npts, J)
        tpos = edges[..., :-1, None] + widths[..., None] * t_gl  # (ne, npts, J, n)
        xs = x_eps[..., None, None] + direction[..., None, None] * tpos
        shape = xs.shape
        pt = {kk: np.broadcast_to(v[None, :, None, None], shape) for kk, v in pv.items()}
        pt[x] = xs
        seg = np.empty(x_eps.shape)
        flat = {kk: v.reshape(shape[0], -1) for kk, v in pt.items()}
        wflat = (widths[..., None] * w_gl).reshape(shape[0], -1)
        per_eps = shape[1] * shape[2] * shape[3]
        def one_eps(i):
            # bounded blocks keep the expression evaluator's working set small
            acc = np.empty(per_eps)
            for lo in range(0, per_eps, _BLOCK):
                sl = slice(lo, min(per_eps, lo + _BLOCK))
                wi = wflat[i, sl]
                vals = sc.ev(integrand, {kk: v[i, sl] for kk, v in flat.items()})
                acc[sl] = np.where(wi > 0, vals, 0.0) * wi
            return acc.reshape(shape[1], -1).sum(axis=1)

        nw = worker_count()
        if nw > 1 and shape[0] > 1:
            with ThreadPoolExecutor(min(nw, shape[0])) as pool:
                for i, row in enumerate(pool.map(one_eps, range(shape[0]))):
                    seg[i] = row
        else:
            for i in range(shape[0]):
                seg[i] = one_eps(i)
        out[live] = seg @ w
        return out

    prev = None
    panels = 1
    for _ in range(q.max_depth + 1):
        pv, w = _param_nodes(sc, panels)
        cur = volume_at(pv, w)
        if prev is not None:
            err = np.max(np.abs(cur - prev))
            if err <= max(q.rel_tol * np.max(np.abs(cur)), q.abs_tol):
                return cur if np.ndim(eps) else float(cur[0])
        prev = cur
        panels *= 2
    raise QuadratureError("regulated volume did not converge", float(np.max(np.abs(cur))), float(err))


# -- sweep fit ----------------------------------------------------------------------------------------------


def _fit_basis(k: float, extra_powers: int):
    cols: list[tuple[str, Callable[[np.ndarray], np.ndarray], float | None]] = []
    for _, ell in sorted(_divergence_exponents(k), key=lambda t: -t[1]):
        cols.append((f"eps^-{ell:g}", lambda e, ell=ell: e ** (-ell), ell))
    if float(k).is_integer():
        cols.append(("log", np.log, None))
    cols.append(("const", lambda e: np.ones_like(e), None))
    for p in range(1, extra_powers + 1):
        cols.append((f"eps^{p}", lambda e, p=p: e**p, None))
    return cols


def sweep_fit(scene: Scene, eps_list: Sequence[float], extra_powers: int = 3,
              cond_threshold: float = 1e12, volumes: np.ndarray | None = None) -> ExpansionReport:
    """Weighted least squares of ``Vol(eps)`` against the expansion basis.

    The basis is ``eps^-l`` (the divergences), ``log eps`` (integer ``k``), a
    constant and ``eps, ..., eps^extra_powers`` for the smooth remainder.  Rows
    are weighted by ``eps^(k-1)`` so each sample counts with comparable size.
    """
    sc = normalize_regulator(scene)
    eps = np.asarray(sorted(eps_list, reverse=True), float)
    k = sc.k
    cols = _fit_basis(k, extra_powers)
    if eps.size < len(cols) + 3:
        raise ValueError(f"need at least {len(cols) + 3} eps samples for {len(cols)} basis functions")
    if np.any(eps <= 0) or np.any(eps >= sc.cutoff_U):
        raise ValueError("eps samples must lie in (0, U)")
    V = regulated_volume(sc, eps, normalized=True) if volumes is None else np.asarray(volumes, float)
    B = np.column_stack([c[1](eps) for c in cols])
    wts = eps ** (k - 1)
    Bw = B * wts[:, None]
    # column scaling before the solve keeps the condition number meaningful
    scale = np.linalg.norm(Bw, axis=0)
    coef_s, *_ = np.linalg.lstsq(Bw / scale, V * wts, rcond=None)
    coef = coef_s / scale
    cond = float(np.linalg.cond(Bw / scale))
    pred = B @ coef
    resid = V - pred
    divs = {c[2]: float(v) for c, v in zip(cols, coef) if c[2] is not None}
    named = {c[0]: float(v) for c, v in zip(cols, coef)}
    A = named.get("log")
    diag = {
        "condition_number": cond,
        "ill_conditioned": cond > cond_threshold,
        "residual_norm": float(np.linalg.norm(resid * wts)),
        "basis": [c[0] for c in cols],
        "coefficients": named,
        "table": {"epsilon": eps.tolist(), "volume": V.tolist(), "model_prediction": pred.tolist(),
                  "residual": resid.tolist()},
    }
    return ExpansionReport("sweep-fit", k, divs, A, named["const"], sc.cutoff_U, diag)


def sweep_table(report: ExpansionReport) -> str:
    """CSV with columns epsilon, volume, model_prediction, residual."""
    t = report.diagnostics["table"]
    lines = ["epsilon,volume,model_prediction,residual"]
    for row in zip(t["epsilon"], t["volume"], t["model_prediction"], t["residual"]):
        lines.append(",".join(f"{v:.12e}" for v in row))
    return "\n".join(lines) + "\n"


def default_schedule(n: int = 12, start: float = 0.1, ratio: float = 0.5) -> np.ndarray:
    return start * ratio ** np.arange(n)


# -- regulator change -------------------------------------------------------------------------------------


def transform_check(scene: Scene, omega, eps_list: Sequence[float] | None = None, extra_powers: int = 3):
    """Change of the renormalized volume under ``tau -> exp(omega) tau``.

    ``lhs`` comes from two sweep fits sharing the region and far cutoff;
    ``rhs = -I_omega^(k-1)(0)/(k-1)!`` from a delta pairing.
    """
    if not scene.integer_k:
        raise ValueError("transform check needs integer k")
    om = as_expr(omega)
    eps_list = default_schedule() if eps_list is None else eps_list
    base = sweep_fit(scene, eps_list, extra_powers)
    moved = sweep_fit(scene.with_regulator(scene.tau * ex.exp(om)), eps_list, extra_powers)
    lhs = moved.renormalized_volume - base.renormalized_volume
    sc = normalize_regulator(scene)
    kk = int(sc.k)
    val, _, _ = _level_derivative(sc, kk - 1, om, i0=abs(float(level_integral(sc, 0.0, om, normalized=True))) + 1e-300)
    rhs = -val / math.factorial(kk - 1)
    return lhs, rhs, lhs - rhs


# -- closed curves in two dimensions ---------------------------------------------------------------------


def line_anomaly_2d(scene: Scene, f) -> tuple[float, float, float]:
    """Delta-derivative pairing ``int f delta'(sigma)`` against ``-int_L grad_n (f/S)``.

    The curve ``L`` is the zero locus over the full (periodic) parameter axis;
    the right side uses the unit conormal and the arclength of ``L``.
    Returns ``(lhs, rhs, residual)``.
    """
    from .conformal import s_curvature

    sc = normalize_regulator(scene)
    if sc.d != 2 or sc.k != 2 or sc.measure.mode != "conformal":
        raise GeometryError("line anomaly check needs d = 2 and the conformal measure")
    if not all(p.periodic for p in sc.params):
        raise GeometryError("the curve must be closed: use a periodic parameter")
    fe = as_expr(f)
    lhs = delta_pairing(sc, 1, fe, normalized=True)
    geom = sc.geometry
    S = s_curvature(sc.sigma, geom).rep
    grad = geom.grad(sc.sigma)
    norm = ex.sqrt(geom.norm2(grad))
    nhat = tuple(c / norm for c in grad)
    integrand = geom.along(nhat, fe / S)
    ig = InterfaceGeometry(geom, sc.sigma)
    dens = ig.area_density(sc.graph_coordinate) * integrand
    spec = sc.spec()

    def g(nodes):
        pt = spec.point({p.name: v for p, v in zip(sc.params, nodes)})
        return sc.ev(dens, pt)

    rhs, _ = adaptive_tensor(g, [p.span for p in sc.params], QuadratureSettings(32, 6, 1e-13))
    rhs = -float(rhs)
    return float(lhs), rhs, float(lhs) - rhs
