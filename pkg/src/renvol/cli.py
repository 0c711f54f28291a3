"""Command line interface: ``renvol <command> SCENE [options]``.

SCENE is a JSON scene file or the name of a built-in fixture.  Reports are
JSON with sorted keys and floats printed as ``%.12e``; sweep tables are CSV.

Exit codes: 0 ok, 1 usage, 2 schema, 3 geometry, 4 numerics,
5 precondition, 6 verification failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import UnitConditionError
from .conformal import GeometryError
from .expr import EvaluationError, ExprError
from .quadrature import QuadratureError, RootError
from .scenes import BUILTIN_SCENES, SchemaError, builtin_document, scene_from_dict
from .volume import NumericsError
from .yamabe import YamabeError

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_GEOMETRY, EXIT_NUMERICS, EXIT_PRECONDITION, EXIT_VERIFY = range(7)


class UsageError(Exception):
    pass


# -- canonical JSON ------------------------------------------------------------------------------------------


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _Float(float(obj))
    return obj


class _Float(float):
    pass


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, ``%.12e`` floats, ``null`` for non-finite values."""

    def enc(o, indent):
        pad = "  " * (indent + 1)
        end = "  " * indent
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(o[k], indent + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, indent + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, _Float):
            return "%.12e" % (o + 0.0) if math.isfinite(o) else "null"  # + 0.0 folds -0 into 0
        return json.dumps(o)

    return enc(_canon(obj), 0) + "\n"


# -- scene resolution -----------------------------------------------------------------------------------------


def _parse_overrides(pairs) -> dict:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise UsageError(f"--param expects NAME=VALUE, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_document(ref: str) -> dict:
    path = Path(ref)
    if path.is_file():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise SchemaError(f"line {err.lineno} column {err.colno}", err.msg) from None
    if ref in BUILTIN_SCENES:
        return builtin_document(ref)
    raise UsageError(f"{ref!r} is neither a readable file nor a built-in scene ({', '.join(BUILTIN_SCENES)})")


def load(args, seed: bool = False):
    doc = load_document(args.scene)
    if seed:
        doc = dict(doc)
        doc.pop("unit_defining", None)
    return scene_from_dict(doc, _parse_overrides(args.param))


def _emit(args, text: str):
    out = getattr(args, "output", None)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands -------------------------------------------------------------------------------------------------


def _grid(scene, n: int = 7) -> dict:
    grids = []
    for ax in scene.params:
        hi = ax.hi - (ax.hi - ax.lo) / n if ax.periodic else ax.hi
        grids.append(np.linspace(ax.lo, hi, n))
    mesh = np.meshgrid(*grids, indexing="ij")
    return {a.name: m.ravel() for a, m in zip(scene.params, mesh)}


def validate_scene(scene, gradient_floor: float = 1e-8) -> dict:
    """Geometric checks; returns a report with ``valid`` and per-check entries."""
    from .hypersurface import boundary_edges

    checks = []
    spec = scene.spec()

    def record(name, ok, **info):
        checks.append({"check": name, "ok": bool(ok), **info})
        return ok

    try:
        spec.check_monotone()
        record("monotone", True)
    except GeometryError as err:
        record("monotone", False, message=str(err))
    try:
        pv = _grid(scene)
        pt = spec.point(pv)
        record("zero locus inside window", True)
    except (RootError, NumericsError) as err:
        record("zero locus inside window", False, message=str(err))
        return {"valid": False, "checks": checks}
    ig = scene.interface()
    g = np.broadcast_to(scene.ev(ig.interface.norm, pt), pt[scene.graph_coordinate].shape)
    i = int(np.argmin(g))
    sample = {k: float(np.asarray(v).ravel()[i]) for k, v in pt.items()}
    record("gradient", g[i] >= gradient_floor, min_gradient=float(g[i]), floor=gradient_floor, locus_sample=sample)
    if scene.nu is not None:
        edges = boundary_edges(spec, scene.nu)
        record("lateral boundary meets the box", bool(edges), edges=[[int(k), float(v)] for k, v in edges])
        for k, val in edges:
            ax = scene.params[k].name
            cp = spec.point({**pv, ax: np.full(pv[ax].shape, val)})
            s = np.broadcast_to(scene.ev(ig.sin, cp), cp[ax].shape)
            j = int(np.argmin(s))
            record(f"angle floor on {ax} = {val:g}", s[j] >= ig.angle_floor, min_sin=float(s[j]),
                   floor=ig.angle_floor, locus_sample={kk: float(np.asarray(v).ravel()[j]) for kk, v in cp.items()})
    return {"valid": all(c["ok"] for c in checks), "checks": checks}


def cmd_validate(args) -> int:
    scene = load(args)
    report = validate_scene(scene)
    report["scene"] = scene.name or args.scene
    _emit(args, dumps(report))
    return EXIT_OK if report["valid"] else EXIT_GEOMETRY


def _eps_values(args, U: float) -> np.ndarray:
    if args.eps_list is not None:
        try:
            eps = [float(v) for v in args.eps_list.split(",") if v.strip()]
        except ValueError:
            raise UsageError("--eps-list expects comma separated numbers") from None
    else:
        a, r, n = args.eps_geom
        if int(n) != n or n < 1:
            raise UsageError("--eps-geom count must be a positive integer")
        eps = [a * r**i for i in range(int(n))]
    if not eps:
        raise UsageError("empty epsilon list")
    eps = np.array(eps, float)
    if np.any(eps <= 0) or np.any(eps >= U):
        raise UsageError(f"epsilon values must lie in (0, U) with U = {U:g}")
    return eps


def cmd_volume(args) -> int:
    from . import volume as vol

    scene = load(args)
    eps = _eps_values(args, scene.cutoff_U)
    if args.fit:
        try:
            report = vol.sweep_fit(scene, eps, extra_powers=args.extra_powers)
        except ValueError as err:
            if isinstance(err, GeometryError):
                raise
            raise UsageError(str(err)) from None
        csv = vol.sweep_table(report)
        if args.csv:
            Path(args.csv).write_text(csv)
        _emit(args, dumps(report.to_dict()))
    else:
        V = np.atleast_1d(vol.regulated_volume(scene, eps))
        lines = ["epsilon,volume,model_prediction,residual"]
        lines += [f"{e:.12e},{v:.12e},," for e, v in zip(eps, V)]
        csv = "\n".join(lines) + "\n"
        if args.csv:
            Path(args.csv).write_text(csv)
        _emit(args, csv)
    return EXIT_OK


def cmd_expansion(args) -> int:
    from . import volume as vol

    report = vol.expansion_coefficients(load(args), eps_ren=args.eps_ren)
    _emit(args, dumps(report.to_dict()))
    return EXIT_OK


def cmd_anomaly(args) -> int:
    from . import anomaly as an
    from . import volume as vol

    scene = load(args)
    if args.method == "general":
        rep = vol.expansion_coefficients(scene)
        if rep.anomaly is None:
            raise UnitConditionError("the anomaly exists only for integer k")
        out = {"method": "general", "total": rep.anomaly, "divergences": rep.to_dict()["divergences"],
               "renormalized_volume": rep.renormalized_volume, "diagnostics": rep.diagnostics}
        if scene.d == 3 and scene.measure.mode == "conformal" and scene.nu is not None:
            out["closed_form_divergences"] = an.leading_divergences(scene)
    elif args.method == "conformal3":
        out = an.anomaly_closed_form(scene).to_dict()
    else:
        out = an.yamabe_anomaly(scene).to_dict()
        out["divergences"] = an.yamabe_divergences(scene)
    _emit(args, dumps(out))
    return EXIT_OK


def cmd_yamabe(args) -> int:
    from . import yamabe as ya

    scene = load(args, seed=True)
    sol = ya.solve_unit(scene, order=args.order)
    _emit(args, dumps(sol.to_dict()))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_table, run_verify

    numbers = None
    if args.criteria:
        try:
            numbers = sorted({int(v) for v in args.criteria.split(",")})
        except ValueError:
            raise UsageError("--criteria expects comma separated integers") from None
        from .verify import CRITERIA

        bad = [n for n in numbers if n not in CRITERIA]
        if bad:
            raise UsageError(f"unknown criteria {bad}")
    results = run_verify(numbers)
    if args.json:
        payload = {"passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}
        _emit(args, dumps(payload))
    else:
        _emit(args, format_table(results, details=not args.brief) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


# -- parser ---------------------------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="renvol", description="Regulated volume expansions, anomalies and singular Yamabe data.")
    p.add_argument("--version", action="version", version=f"renvol {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def scene_cmd(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("scene", help=f"scene JSON file or built-in name ({', '.join(BUILTIN_SCENES)})")
        sp.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a scene parameter")
        sp.add_argument("-o", "--output", help="write the report here instead of stdout")
        return sp

    scene_cmd("validate", "schema and geometric validation").set_defaults(func=cmd_validate)
    sp = scene_cmd("volume", "regulated volume sweep")
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--eps-list", help="comma separated epsilon values")
    grp.add_argument("--eps-geom", nargs=3, type=float, metavar=("A", "R", "N"), help="epsilon = A R^i, i < N")
    sp.add_argument("--fit", action="store_true", help="fit the expansion and print its JSON report")
    sp.add_argument("--csv", help="also write the sweep table to this file")
    sp.add_argument("--extra-powers", type=int, default=3, help="smooth remainder powers in the fit basis")
    sp.set_defaults(func=cmd_volume)
    sp = scene_cmd("expansion", "divergences and anomaly from level-set derivatives")
    sp.add_argument("--eps-ren", type=float, default=1e-3, help="epsilon used to read off the finite part")
    sp.set_defaults(func=cmd_expansion)
    sp = scene_cmd("anomaly", "anomaly by a chosen method")
    sp.add_argument("--method", choices=("general", "conformal3", "yamabe"), default="conformal3")
    sp.set_defaults(func=cmd_anomaly)
    sp = scene_cmd("yamabe", "singular Yamabe recursion from the scene's defining function")
    sp.add_argument("--order", type=int, default=None, help="target order (default: the dimension)")
    sp.set_defaults(func=cmd_yamabe)
    sp = sub.add_parser("verify", help="run the built-in reference fixtures")
    sp.add_argument("--json", action="store_true", help="machine readable results")
    sp.add_argument("--criteria", help="comma separated subset, e.g. 1,5")
    sp.add_argument("--brief", action="store_true", help="one line per criterion")
    sp.add_argument("-o", "--output", help="write the report here instead of stdout")
    sp.set_defaults(func=cmd_verify)
    return p


def _fail(code: int, kind: str, err: BaseException) -> int:
    sys.stderr.write(f"renvol: {kind} error: {err}\n")
    table = getattr(err, "table", None)
    if table:
        sys.stderr.write(dumps({"table": table}))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        return _fail(EXIT_USAGE, "usage", err)
    except (NumericsError, QuadratureError, EvaluationError, YamabeError) as err:
        return _fail(EXIT_NUMERICS, "numerics", err)
    except (SchemaError, ExprError) as err:
        return _fail(EXIT_SCHEMA, "schema", err)
    except UnitConditionError as err:
        return _fail(EXIT_PRECONDITION, "precondition", err)
    except (GeometryError, RootError) as err:
        return _fail(EXIT_GEOMETRY, "geometry", err)
    except ValueError as err:
        return _fail(EXIT_PRECONDITION, "precondition", err)


if __name__ == "__main__":
    sys.exit(main())
