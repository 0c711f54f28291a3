"""Scene files: JSON schema, validation and the built-in fixtures.

Expressions may reference entries of the optional ``parameters`` table as
``$name``; the value is substituted textually (parenthesised) before parsing,
so ``"sigma": "x - ($f)"`` with ``"parameters": {"f": "r^2/2"}`` is allowed.
"""
from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .conformal import AmbientGeometry
from .expr import ParseError, UnknownIdentifierError, parse
from .hypersurface import ParamAxis
from .quadrature import QuadratureSettings
from .volume import FDSettings, Measure, Scene

__all__ = ["SchemaError", "BUILTIN_SCENES", "scene_from_dict", "load_scene", "builtin_scene", "builtin_document"]

BUILTIN_SCENES = ("rectangle", "flat_half_space", "revolution", "paraboloid_yamabe", "polar_curve")

_PARAM = re.compile(r"\$([A-Za-z_][A-Za-z_0-9]*)")


class SchemaError(ValueError):
    """Malformed scene document; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _require(doc: Mapping, key: str, path: str, kind=None):
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected {_kind_name(kind)}")
    return val


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _number(doc: Mapping, key: str, path: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise SchemaError(f"{path}.{key}", "missing required field")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}.{key}", "expected a number")
    return float(v)


class _Exprs:
    def __init__(self, params: Mapping[str, str], variables):
        self.params = {k: str(v) for k, v in params.items()}
        self.variables = list(variables)

    def __call__(self, text, path: str):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(float(text))
        if not isinstance(text, str):
            raise SchemaError(path, "expected an expression string")

        def sub(m):
            name = m.group(1)
            if name not in self.params:
                raise SchemaError(path, f"unknown parameter ${name}")
            return f"({self.params[name]})"

        for _ in range(5):  # parameters may reference other parameters
            new = _PARAM.sub(sub, text)
            if new == text:
                break
            text = new
        try:
            return parse(text, self.variables)
        except (ParseError, UnknownIdentifierError) as err:
            raise SchemaError(path, str(err)) from None


def scene_from_dict(doc: Mapping[str, Any], overrides: Mapping[str, str] | None = None) -> Scene:
    """Build a :class:`Scene` from a parsed scene document."""
    if not isinstance(doc, Mapping):
        raise SchemaError("$", "scene document must be a JSON object")
    version = _require(doc, "version", "")
    if version != 1:
        raise SchemaError("version", f"unsupported version {version!r}")
    params = dict(doc.get("parameters", {}) or {})
    if not isinstance(params, dict):
        raise SchemaError("parameters", "expected an object")
    params.update(overrides or {})

    g = _require(doc, "geometry", "", dict)
    coords = _require(g, "coordinates", "geometry", list)
    if not all(isinstance(c, str) for c in coords) or len(set(coords)) != len(coords):
        raise SchemaError("geometry.coordinates", "expected distinct coordinate names")
    dim = g.get("dimension", len(coords))
    if dim != len(coords) or dim not in (2, 3):
        raise SchemaError("geometry.dimension", "must be 2 or 3 and match the coordinate list")
    ex_ = _Exprs(params, coords)
    bg = _require(g, "background_metric", "geometry", list)
    if len(bg) != dim:
        raise SchemaError("geometry.background_metric", "needs one diagonal entry per coordinate")
    background = tuple(ex_(b, f"geometry.background_metric[{i}]") for i, b in enumerate(bg))
    omega = ex_(g.get("conformal_factor", "1"), "geometry.conformal_factor")
    polar = g.get("polar_axis")
    if polar is not None and polar not in coords:
        raise SchemaError("geometry.polar_axis", "must be one of the coordinates")
    geom = AmbientGeometry(tuple(coords), background, omega, polar)

    win = _require(doc, "window", "", dict)
    gc = _require(win, "graph_coordinate", "window", str)
    if gc not in coords:
        raise SchemaError("window.graph_coordinate", "must be one of the coordinates")
    interval = _require(win, "interval", "window", list)
    if len(interval) != 2 or not all(isinstance(v, (int, float)) for v in interval) or interval[0] >= interval[1]:
        raise SchemaError("window.interval", "expected [lo, hi] with lo < hi")

    dom = _require(doc, "domain", "", list)
    axes = []
    for i, ax in enumerate(dom):
        p = f"domain[{i}]"
        if not isinstance(ax, dict):
            raise SchemaError(p, "expected an object")
        name = _require(ax, "name", p, str)
        rng = _require(ax, "range", p, list)
        if len(rng) != 2 or not all(isinstance(v, (int, float)) for v in rng) or rng[0] >= rng[1]:
            raise SchemaError(f"{p}.range", "expected [lo, hi] with lo < hi")
        axes.append(ParamAxis(name, float(rng[0]), float(rng[1]), bool(ax.get("periodic", False))))
    if {gc, *(a.name for a in axes)} != set(coords) or len(axes) != dim - 1:
        raise SchemaError("domain", "graph coordinate plus domain axes must be exactly the coordinates")

    sigma = ex_(_require(doc, "sigma", ""), "sigma")
    tau = ex_(doc.get("tau", "1"), "tau")
    nu = None
    bnd = doc.get("boundary")
    if bnd is not None:
        if not isinstance(bnd, dict) or "nu" not in bnd:
            raise SchemaError("boundary", "expected {\"nu\": expression}")
        nu = ex_(bnd["nu"], "boundary.nu")

    m = doc.get("measure", {"mode": "conformal"})
    if not isinstance(m, dict):
        raise SchemaError("measure", "expected an object")
    mode = m.get("mode", "conformal")
    if mode == "conformal":
        measure = Measure()
    elif mode == "explicit":
        k = _number(m, "k", "measure")
        if k < 1:
            raise SchemaError("measure.k", "k must be at least 1")
        measure = Measure("explicit", ex_(_require(m, "density", "measure"), "measure.density"), k)
    else:
        raise SchemaError("measure.mode", "expected \"conformal\" or \"explicit\"")

    U = _number(doc, "cutoff_U", "", 1.0)
    if U <= 0:
        raise SchemaError("cutoff_U", "must be positive")
    q = doc.get("quadrature", {}) or {}
    quad = QuadratureSettings(int(_number(q, "nodes", "quadrature", 32)), int(_number(q, "max_depth", "quadrature", 5)),
                              _number(q, "rel_tol", "quadrature", 1e-10), _number(q, "abs_tol", "quadrature", 1e-14))
    f = doc.get("fd", {}) or {}
    fd = FDSettings(_number(f, "base_step", "fd", 0.05), int(_number(f, "richardson_levels", "fd", 7)),
                    _number(f, "rel_tol", "fd", 1e-6))
    far = ex_(doc["far"], "far") if doc.get("far") is not None else None
    sgraph = None
    if doc.get("sigma_graph") is not None:
        sgraph = _Exprs(params, [a.name for a in axes])(doc["sigma_graph"], "sigma_graph")

    scene = Scene(geom, sigma, gc, (float(interval[0]), float(interval[1])), tuple(axes), tau=tau, nu=nu,
                  measure=measure, cutoff_U=U, far=far, quadrature=quad, fd=fd, sigma_graph=sgraph,
                  name=str(doc.get("name", "")))
    unit = doc.get("unit_defining")
    if unit is not None:
        if not isinstance(unit, dict):
            raise SchemaError("unit_defining", "expected an object")
        from .yamabe import unit_scene  # local import: yamabe builds on scenes

        order = int(_number(unit, "order", "unit_defining", float(dim)))
        scene = unit_scene(scene, order=order, completion=bool(unit.get("monotone_completion", True)))
    return scene


def load_scene(path: str | Path, overrides: Mapping[str, str] | None = None) -> Scene:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"line {err.lineno} column {err.colno}", err.msg) from None
    return scene_from_dict(doc, overrides)


def builtin_document(name: str) -> dict:
    if name not in BUILTIN_SCENES:
        raise KeyError(f"unknown built-in scene {name!r}; choose from {', '.join(BUILTIN_SCENES)}")
    return json.loads(resources.files("renvol").joinpath("data", f"{name}.json").read_text())


def builtin_scene(name: str, **overrides) -> Scene:
    """Load a shipped fixture; keyword arguments override its ``parameters``."""
    return scene_from_dict(builtin_document(name), {k: str(v) for k, v in overrides.items()})
