import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from renvol.conformal import (
    AmbientGeometry, ConformalDensity, LogDensity, conformal_rescale, coupled_gradient, cylindrical,
    flat, laplace_robin, laplace_robin_log, operator_L, rho, s_curvature, self_adjointness_residual,
)
from renvol.expr import ONE, parse, simplify

CYL = cylindrical()
RNG = np.random.default_rng(7)
OMEGAS = ["exp(0.1*x)", "1 + 0.2*r^2"]
F_GENERIC = "0.3*r^2 + 0.1*r^4"


def cyl_points(n=20, x=(-0.5, 0.8), r=(0.2, 1.5)):
    return {"x": RNG.uniform(*x, n), "r": RNG.uniform(*r, n), "t": RNG.uniform(0, 2 * math.pi, n)}


def ev(geom, e, pt):
    return np.asarray(geom.evaluate(e, pt), dtype=float)


def f_derivs(r):
    f = 0.3 * r**2 + 0.1 * r**4
    f1 = 0.6 * r + 0.4 * r**3
    f2 = 0.6 + 1.2 * r**2
    return f, f1, f2


# -- curvature ------------------------------------------------------------------------------

def test_flat_scalar_curvature_zero():
    assert simplify(flat().scalar_curvature) is simplify(parse("0"))
    pt = cyl_points()
    assert np.max(np.abs(ev(CYL, CYL.scalar_curvature, pt))) < 1e-10


def test_hyperbolic_half_space_is_negative():
    h = flat(("x", "y", "z"), omega=parse("1/z"))
    pt = {"x": RNG.uniform(-1, 1, 10), "y": RNG.uniform(-1, 1, 10), "z": RNG.uniform(0.2, 2, 10)}
    assert np.allclose(ev(h, h.scalar_curvature, pt), -6.0, atol=1e-10)
    h2 = flat(("x", "y"), omega=parse("1/y"))
    assert np.allclose(ev(h2, h2.scalar_curvature, {"x": 0.3, "y": np.array([0.5, 1.5])}), -2.0)


@pytest.mark.parametrize("omega", OMEGAS)
def test_metric_compatibility(omega):
    g = cylindrical(omega=parse(omega))
    pt = cyl_points()
    for block in g.metric_compatibility():
        for row in block:
            for comp in row:
                assert np.max(np.abs(ev(g, comp, pt))) < 1e-10


def test_conformal_scalar_curvature_transformation():
    # Sc of exp(2u) * flat in 3D: exp(-2u)(-4 Lap u - 2|du|^2)
    g = flat(omega=parse("exp(0.2*x + 0.1*y^2)"))
    pt = {"x": 0.3, "y": -0.4, "z": 0.1}
    u = 0.2 * 0.3 + 0.1 * 0.16
    lap = 0.2
    grad2 = 0.2**2 + (0.2 * -0.4) ** 2
    expected = math.exp(-2 * u) * (-4 * lap - 2 * grad2)
    assert float(g.evaluate(g.scalar_curvature, pt)) == pytest.approx(expected, rel=1e-12)


# -- rho, S, Laplace-Robin -----------------------------------------------------------------------

def test_rho_examples():
    assert simplify(rho(parse("x"), flat())) is simplify(parse("0"))
    assert float(CYL.evaluate(rho(parse("x - 0.5*r^2"), CYL), {"x": 0.1, "r": 0.7, "t": 0})) == pytest.approx(2 / 3)
    pt = cyl_points()
    _, f1, f2 = f_derivs(pt["r"])
    got = ev(CYL, rho(parse("x - (" + F_GENERIC + ")"), CYL), pt)
    assert np.allclose(got, (f2 + f1 / pt["r"]) / 3, rtol=1e-12)


def test_s_curvature_examples():
    assert simplify(s_curvature(parse("x"), flat()).rep) is ONE
    sig = parse("x - 0.5*r^2")
    assert float(CYL.evaluate(s_curvature(sig, CYL).rep, {"x": 1.0, "r": 1.0, "t": 0})) == pytest.approx(8 / 3)
    r = np.linspace(0.1, 1.5, 7)
    f, f1, _ = f_derivs(r)
    S = ev(CYL, s_curvature(parse("x - (" + F_GENERIC + ")"), CYL).rep, {"x": f, "r": r, "t": 0.0})
    assert np.allclose(S, 1 + f1**2, rtol=1e-12)


def test_laplace_robin_examples():
    g = flat()
    x = parse("x")
    assert simplify(laplace_robin(x, ConformalDensity(0, x), g).rep) is ONE
    assert simplify(laplace_robin(x, ConformalDensity(0, ONE), g).rep) is simplify(parse("0"))
    # 1/(S tau) on the zero locus of x - f(r)
    sig = parse("x - (" + F_GENERIC + ")")
    S = s_curvature(sig, CYL).rep
    D = laplace_robin(sig, ConformalDensity(-1, ONE / S), CYL)
    assert D.weight == -2
    r = np.linspace(0.1, 1.5, 9)
    f, f1, f2 = f_derivs(r)
    got = ev(CYL, D.rep, {"x": f, "r": r, "t": 0.0})
    want = (f2 - f1**2 * f2 + (f1 / r) * (1 + f1**2)) / (1 + f1**2) ** 2
    assert np.allclose(got, want, rtol=1e-11)


def test_laplace_robin_log_examples():
    zero_log = LogDensity(1, parse("0"))
    assert simplify(laplace_robin_log(parse("x"), zero_log, flat()).rep) is simplify(parse("0"))
    v = CYL.evaluate(laplace_robin_log(parse("x - 0.5*r^2"), zero_log, CYL).rep, {"x": 0.4, "r": 0.0, "t": 0})
    assert float(v) == pytest.approx(2 / 3, abs=1e-10)
    # unit sphere with n pointing inward: II = -g_Sigma, H = -1, so D log tau = -H = 1
    g = flat()
    sig = parse("(1 - (x^2+y^2+z^2)) / 2")
    val = float(g.evaluate(laplace_robin_log(sig, zero_log, g).rep, {"x": 0.6, "y": 0.0, "z": 0.8}))
    assert val == pytest.approx(1.0, rel=1e-12)


def test_coupled_gradient_examples():
    g = flat()
    cg = coupled_gradient(ONE, ConformalDensity(0, parse("x")), g)
    assert cg.weight == 1 and [simplify(c) for c in cg.components] == [ONE, simplify(parse("0")), simplify(parse("0"))]
    sig = parse("x*y + z^2")
    cg = coupled_gradient(sig, ConformalDensity(1, sig), g)
    for c in cg.components:
        assert simplify(c) is simplify(parse("0"))


def test_operator_L_examples():
    zero_log = LogDensity(1, parse("0"))
    assert simplify(operator_L(parse("x"), flat(), zero_log).rep) is simplify(parse("0"))
    for f_text, fp in [("0.5*r^2", lambda R: (R, 1.0)), (F_GENERIC, lambda R: f_derivs(R)[1:])]:
        sig = parse("x - (" + f_text + ")")
        L = operator_L(sig, CYL, zero_log).rep
        for R in (0.5, 1.0, 1.3):
            f1, f2 = fp(R)
            xs = float(CYL.evaluate(parse(f_text), {"r": R}))
            got = float(CYL.evaluate(L, {"x": xs, "r": R, "t": 0.2}))
            want = -(f1**3 + f1 - 5 * R * f1**2 * f2 + R * f2) / (3 * R * (1 + f1**2) ** 2)
            assert got == pytest.approx(want, rel=1e-11)


# -- covariance ------------------------------------------------------------------------------------

SCENES = ["x - 0.5*r^2", "x - (" + F_GENERIC + ")"]


@pytest.mark.parametrize("omega", OMEGAS)
@pytest.mark.parametrize("sigma", SCENES)
def test_weight_covariance(omega, sigma):
    om = parse(omega)
    sig = parse(sigma)
    g2 = conformal_rescale(CYL, om)
    sig2 = conformal_rescale(ConformalDensity(1, sig), om)
    pt = cyl_points(100)
    scale = ev(CYL, om, pt)

    def check(a, b, w, rtol=1e-8):
        va, vb = ev(CYL, a, pt), ev(g2, b, pt)
        assert np.allclose(vb, va * scale**w, rtol=rtol, atol=1e-12)

    check(s_curvature(sig, CYL).rep, s_curvature(sig2, g2).rep, 0)
    phi = ConformalDensity(-1, parse("1 + x^2 + 0.3*r*cos(t)"))
    check(laplace_robin(sig, phi, CYL).rep, laplace_robin(sig2, conformal_rescale(phi, om), g2).rep, -2)
    psi = ConformalDensity(0.5, parse("2 + x*r"))
    check(laplace_robin(sig, psi, CYL).rep, laplace_robin(sig2, psi.rescaled(om), g2).rep, -0.5)
    lam = LogDensity(1, parse("0.2*x"))
    check(laplace_robin_log(sig, lam, CYL).rep, laplace_robin_log(sig2, lam.rescaled(om), g2).rep, -1)
    check(operator_L(sig, CYL, lam).rep, operator_L(sig2, g2, lam.rescaled(om)).rep, -1)
    cg1 = coupled_gradient(sig, psi, CYL)
    cg2 = coupled_gradient(sig2, psi.rescaled(om), g2)
    for a, b in zip(cg1.components, cg2.components):
        check(a, b, cg1.weight)
    cl1 = coupled_gradient(sig, lam, CYL)
    cl2 = coupled_gradient(sig2, lam.rescaled(om), g2)
    for a, b in zip(cl1.components, cl2.components):
        check(a, b, 1)


def test_rescale_rules():
    om = parse("exp(0.1*x)")
    d = conformal_rescale(ConformalDensity(1, parse("x")), om)
    assert float(d.rep.__class__ and CYL.evaluate(d.rep, {"x": 2.0})) == pytest.approx(2 * math.exp(0.2))
    l = conformal_rescale(LogDensity(1, parse("0")), om)
    assert float(CYL.evaluate(l.rep, {"x": 2.0})) == pytest.approx(0.2)


# -- formal self-adjointness -----------------------------------------------------------------------

coef = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.tuples(coef, coef, coef, coef, coef, coef), st.sampled_from([-0.5, 0.0, 0.5, 1.0, -1.0]),
       st.tuples(st.floats(-0.5, 0.5), st.floats(0.2, 1.5), st.floats(0, 6.2)))
def test_self_adjointness_residual(c, w, p):
    f = parse(f"{c[0]} + {c[1]}*x + {c[2]}*r^2*cos(t)")
    g = parse(f"{c[3]} + {c[4]}*x*r + {c[5]}*x^2")
    sig = parse("x - 0.5*r^2")
    res = self_adjointness_residual(sig, ConformalDensity(-2 - w, f), ConformalDensity(w, g), CYL,
                                    {"x": p[0], "r": p[1], "t": p[2]})
    assert abs(float(res)) < 1e-8


def test_self_adjointness_trivial_cases():
    g = flat()
    res = self_adjointness_residual(parse("x"), ConformalDensity(-2, parse("2")), ConformalDensity(0, ONE), g,
                                    {"x": 0.3, "y": 0.1, "z": 0.0}, relative=False)
    assert abs(float(res)) < 1e-14
    res = self_adjointness_residual(parse("x"), ConformalDensity(-1, parse("3")), ConformalDensity(-1, parse("5")), g,
                                    {"x": 0.3, "y": 0.1, "z": 0.0}, relative=False)
    assert abs(float(res)) < 1e-14
    gc = cylindrical(omega=parse("1 + 0.2*r^2"))
    res = self_adjointness_residual(parse("x - 0.5*r^2"), ConformalDensity(-2, parse("x^2 + r")),
                                    ConformalDensity(0, ONE), gc, {"x": 0.3, "r": 0.8, "t": 0.0})
    assert abs(float(res)) < 1e-8
