import json
import math

import pytest

from renvol import cli
from renvol.scenes import builtin_document


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_scene(tmp_path, doc, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def cube_scene():
    # sigma = x^3 vanishes to third order on its zero locus
    doc = builtin_document("flat_half_space")
    doc["sigma"] = "x^3"
    doc.pop("sigma_graph", None)
    return doc


def test_dumps_is_canonical():
    text = cli.dumps({"b": 1.0, "a": [0.5, float("nan")], "c": -0.0, "d": True, "e": 3})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert "5.000000000000e-01" in text and "null" in text and "-0.0" not in text
    assert json.loads(text)["d"] is True and json.loads(text)["e"] == 3


def test_validate_builtin(capsys):
    code, out, _ = run(capsys, "validate", "paraboloid_yamabe")
    rep = json.loads(out)
    assert code == 0 and rep["valid"]
    assert {c["check"] for c in rep["checks"]} >= {"monotone", "gradient"}


def test_validate_vanishing_gradient(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", write_scene(tmp_path, cube_scene()))
    rep = json.loads(out)
    grad = next(c for c in rep["checks"] if c["check"] == "gradient")
    assert code == 3 and not grad["ok"] and "locus_sample" in grad
    assert abs(grad["locus_sample"]["x"]) < 1e-6


def test_validate_malformed_json(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"version": 1,\n  "sigma": }')
    code, _, err = run(capsys, "validate", str(p))
    assert code == 2 and "line 2 column" in err


def test_validate_schema_error(capsys, tmp_path):
    doc = builtin_document("rectangle")
    doc["version"] = 7
    code, _, err = run(capsys, "validate", write_scene(tmp_path, doc))
    assert code == 2 and "version" in err


def test_unknown_scene_is_usage_error(capsys):
    code, _, err = run(capsys, "validate", "no_such_scene")
    assert code == 1 and "built-in" in err


def test_volume_fit_rectangle(capsys, tmp_path):
    csv = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "volume", "rectangle", "--eps-geom", "0.1", "0.5", "12", "--fit", "--csv", str(csv))
    rep = json.loads(out)
    assert code == 0 and abs(rep["anomaly"] + 2) < 1e-4 and rep["method"] == "sweep-fit"
    lines = csv.read_text().splitlines()
    assert lines[0] == "epsilon,volume,model_prediction,residual" and len(lines) == 13


def test_volume_fit_revolution(capsys):
    code, out, _ = run(capsys, "volume", "revolution", "--eps-geom", "0.1", "0.5", "12", "--fit")
    rep = json.loads(out)
    assert code == 0 and abs(rep["divergences"]["2"] - math.pi / 2) < 1e-6


def test_volume_table_without_fit(capsys):
    code, out, _ = run(capsys, "volume", "revolution", "--eps-list", "0.1,0.02")
    rows = out.strip().splitlines()
    assert code == 0 and len(rows) == 3
    eps, v = (float(x) for x in rows[1].split(",")[:2])
    assert math.isclose(v, math.pi * (1 / (2 * eps * eps) - 0.5), rel_tol=1e-10)


@pytest.mark.parametrize("argv", [("--eps-list", ","), ("--eps-list", "0.1,5"), ("--eps-geom", "0.1", "0.5", "0"),
                                  ("--eps-list", "0.1,0.05", "--fit")])
def test_volume_usage_errors(capsys, argv):
    code, _, _ = run(capsys, "volume", "rectangle", *argv)
    assert code == 1


def test_missing_required_option_is_usage(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["volume", "rectangle"])
    assert info.value.code == 1


def test_expansion(capsys):
    code, out, _ = run(capsys, "expansion", "rectangle")
    rep = json.loads(out)
    assert code == 0 and rep["method"] == "level-derivative" and abs(rep["anomaly"] + 2) < 1e-8


def test_expansion_param_override(capsys):
    code, out, _ = run(capsys, "expansion", "rectangle", "--param", "a=2")
    # density 1 + 2y: I(s) = 2 + 4s, so c1 = 2 and A = -4
    rep = json.loads(out)
    assert code == 0 and abs(rep["anomaly"] + 4) < 1e-8


def test_bad_param_syntax(capsys):
    code, _, _ = run(capsys, "expansion", "rectangle", "--param", "a")
    assert code == 1


def test_expansion_non_integer_k(capsys, tmp_path):
    doc = builtin_document("rectangle")
    doc["measure"]["k"] = 2.5
    code, out, _ = run(capsys, "expansion", write_scene(tmp_path, doc))
    rep = json.loads(out)
    assert code == 0 and rep["anomaly"] is None and set(rep["divergences"]) == {"0.5", "1.5"}


def test_anomaly_methods(capsys):
    code, out, _ = run(capsys, "anomaly", "revolution", "--method", "conformal3")
    assert code == 0 and abs(json.loads(out)["total"]) < 1e-9
    code, out, _ = run(capsys, "anomaly", "paraboloid_yamabe", "--method", "yamabe")
    A = (5 * math.pi / 3) * (1 - (1 + 12 / 5 + 21 / 20) / 2**1.5)
    assert code == 0 and abs(json.loads(out)["total"] - A) < 1e-8
    code, out, _ = run(capsys, "anomaly", "rectangle", "--method", "general")
    assert code == 0 and abs(json.loads(out)["total"] + 2) < 1e-8


def test_anomaly_yamabe_requires_unit(capsys):
    code, _, err = run(capsys, "anomaly", "revolution", "--method", "yamabe")
    assert code == 5 and "unit" in err


def test_yamabe_paraboloid(capsys):
    code, out, _ = run(capsys, "yamabe", "paraboloid_yamabe")
    rep = json.loads(out)
    assert code == 0 and len(rep["coefficients"]) == 2
    assert rep["samples"]["B"][0] == pytest.approx(-4 / 3, rel=1e-9)


def test_yamabe_flat_zeros(capsys):
    code, out, _ = run(capsys, "yamabe", "flat_half_space")
    rep = json.loads(out)
    assert code == 0 and max(abs(v) for v in rep["samples"]["B"]) < 1e-14


def test_yamabe_degenerate_seed(capsys, tmp_path):
    doc = cube_scene()
    doc["sigma_graph"] = "0"
    code, _, err = run(capsys, "yamabe", write_scene(tmp_path, doc))
    assert code == 3 and "gradient" in err


def test_output_is_deterministic(capsys, monkeypatch):
    _, a, _ = run(capsys, "volume", "rectangle", "--eps-geom", "0.1", "0.5", "10", "--fit")
    monkeypatch.setenv("RENVOL_THREADS", "3")
    _, b, _ = run(capsys, "volume", "rectangle", "--eps-geom", "0.1", "0.5", "10", "--fit")
    assert a == b


def test_output_file(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "expansion", "rectangle", "-o", str(out))
    assert code == 0 and stdout == "" and json.loads(out.read_text())["k"] == 2


def test_verify_subset_json(capsys):
    code, out, _ = run(capsys, "verify", "--criteria", "1,5,8", "--json")
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and [c["criterion"] for c in rep["criteria"]] == [1, 5, 8]


def test_verify_tolerance_scale_forces_failure(capsys, monkeypatch):
    monkeypatch.setenv("RENVOL_TOL_SCALE", "1e-30")
    code, out, _ = run(capsys, "verify", "--criteria", "1", "--brief")
    assert code == 6 and out.startswith("[FAIL] criterion 1")


def test_verify_unknown_criterion(capsys):
    code, _, _ = run(capsys, "verify", "--criteria", "42")
    assert code == 1
