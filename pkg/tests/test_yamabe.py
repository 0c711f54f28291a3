import math

import numpy as np
import pytest

from renvol import yamabe as ya
from renvol.conformal import flat, s_curvature
from renvol.expr import parse
from renvol.hypersurface import ParamAxis
from renvol.scenes import builtin_document, builtin_scene, scene_from_dict
from renvol.volume import Scene

R_GRID = np.arange(0.0, 2.0001, 0.25)


def seed(name="paraboloid_yamabe", **kw):
    doc = builtin_document(name)
    doc.pop("unit_defining", None)
    doc["domain"][0]["range"] = [0.0, 2.0]
    return scene_from_dict(doc, kw)


@pytest.fixture(scope="module")
def para_seed():
    return seed()


@pytest.fixture(scope="module")
def para_solution(para_seed):
    return ya.solve_unit(para_seed)


def on_grid(sc, e):
    return np.broadcast_to(sc.ev(e, {"r": R_GRID, "t": 0 * R_GRID}), R_GRID.shape)


def test_first_order_normalize():
    g = flat(("x", "y"))
    assert float(g.evaluate(ya.first_order_normalize(parse("2*y"), g).rep, {"x": 0.3, "y": 0.7})) == pytest.approx(0.7)
    sc = seed()
    sh = ya.first_order_normalize(sc.sigma, sc.geometry).rep
    p = {"x": 0.9, "r": 0.6, "t": 0.0}
    assert float(sc.ev(sh, p)) == pytest.approx((0.9 - 0.18) / math.sqrt(1.36), rel=1e-14)


def test_correction_constants():
    assert ya.correction_constant(1, 3) == -3 / 8
    assert ya.correction_constant(2, 3) == -1 / 2
    with pytest.raises(ya.YamabeError):
        ya.correction_constant(3, 3)


def test_order_residual_flat():
    sc = builtin_scene("flat_half_space")
    for ell in (1, 2):
        assert float(np.max(np.abs(on_grid(sc, ya.order_residual(sc, sc.sigma, ell))))) < 1e-14


def test_order_residual_quadratic_seed():
    sc = builtin_scene("flat_half_space")
    # S(x(1+x)) = (1+2x)^2 - (4/3) x (1+x)
    f1 = ya.order_residual(sc, parse("x*(1+x)"), 1)
    assert float(np.max(np.abs(on_grid(sc, f1) - (4 - 4 / 3)))) < 1e-12


def test_order_residual_numeric_fallback():
    g = flat(("x", "y"))
    sc = Scene(g, parse("x*(1+x) - 0.1*y^2"), "x", (-0.4, 0.6), (ParamAxis("y", -1, 1),))
    f = ya.order_residual(sc, ya.first_order_normalize(sc.sigma, g).rep, 1)
    assert np.isfinite(float(g.evaluate(f, {"y": 0.3})))


def test_paraboloid_coefficients(para_seed, para_solution):
    a1 = on_grid(para_seed, para_solution.coefficients[0])
    a2 = on_grid(para_seed, para_solution.coefficients[1])
    r = R_GRID
    assert np.allclose(a1, -(3 * r**2 + 2) / (4 * (1 + r**2) ** 1.5), rtol=1e-6, atol=0)
    assert np.allclose(a2[1:], (r**2 * (5 * r**2 + 6) / (6 * (1 + r**2) ** 3))[1:], rtol=1e-6, atol=0)
    assert abs(a2[0]) < 1e-12


def test_step_corrections(para_seed, para_solution):
    s1, s2 = para_solution.steps
    r = R_GRID
    assert np.allclose(on_grid(para_seed, s1.correction), -(3 * r**2 + 2) / (4 * (1 + r**2) ** 1.5), rtol=1e-12)
    assert s1.slope == pytest.approx(2.0, abs=0.1) and s2.slope == pytest.approx(3.0, abs=0.1)


def test_paraboloid_obstruction(para_seed, para_solution):
    B = on_grid(para_seed, ya.obstruction(para_solution))
    r = R_GRID
    assert B[0] == pytest.approx(-4 / 3, rel=1e-10)
    # the coefficient of sigma_bar^3 in S - 1 for the sigma_bar above
    assert np.allclose(B, (r**6 + 6 * r**4 + 24 * r**2 - 16) / (12 * (1 + r**2) ** 4.5), rtol=1e-9)


def test_residual_scaling_after_final_step(para_seed, para_solution):
    slope = ya.residual_slope(para_seed, para_solution.sigma_bar, para_solution.B, 3)
    assert slope == pytest.approx(4.0, abs=0.1)
    assert para_solution.achieved_order == pytest.approx(3.0, abs=0.1)


def test_flat_is_fixed_point():
    sc = builtin_scene("flat_half_space")
    sol = ya.solve_unit(sc)
    assert float(np.max(np.abs(on_grid(sc, sol.B)))) < 1e-14
    p = {"x": 0.37, "r": 0.5, "t": 1.0}
    assert float(sc.ev(sol.sigma_bar, p)) == pytest.approx(0.37, rel=1e-14)


def test_extension_independence(para_seed, para_solution):
    other = ya.solve_unit(para_seed, extension=parse("1 + (x - r^2/2)"), check=False)
    for a, b in zip(para_solution.coefficients, other.coefficients):
        assert np.max(np.abs(on_grid(para_seed, a) - on_grid(para_seed, b))) < 1e-8


def test_rescaled_seed_is_covariant(para_seed, para_solution):
    w = parse("1 + 0.2*r^2")
    sol = ya.solve_unit(para_seed.rescaled(w), check=False)
    pts = {"x": np.array([0.3, 0.6]), "r": np.array([0.4, 0.8]), "t": np.zeros(2)}
    lhs = para_seed.ev(sol.sigma_bar, pts)
    rhs = para_seed.ev(para_solution.sigma_bar * w, pts)
    # equal up to terms of order sigma^4
    sig = np.abs(para_seed.ev(para_seed.sigma, pts))
    assert np.all(np.abs(lhs - rhs) <= 50 * sig**4 + 1e-12)


def test_unit_scene_is_monotone_and_unit():
    sc = builtin_scene("paraboloid_yamabe")
    sc.spec().check_monotone()
    S = s_curvature(sc.sigma, sc.geometry).rep
    on = sc.spec().point({"r": np.linspace(0, 1, 5), "t": np.zeros(5)})
    assert np.max(np.abs(sc.ev(S, on) - 1)) < 1e-12


def test_solution_serializes(para_solution):
    d = para_solution.to_dict()
    assert len(d["coefficients"]) == 2 and d["samples"]["B"]
