import math

import numpy as np
import pytest

from renvol import volume as vol
from renvol.conformal import flat
from renvol.expr import parse
from renvol.hypersurface import ParamAxis
from renvol.scenes import builtin_scene

SCHEDULE = vol.default_schedule()


@pytest.fixture(scope="module")
def rect():
    return builtin_scene("rectangle")


@pytest.fixture(scope="module")
def rev():
    return builtin_scene("revolution")


@pytest.fixture(scope="module")
def half():
    return builtin_scene("flat_half_space")


def test_normalize_identity(rect):
    assert vol.normalize_regulator(rect) is rect


def test_normalize_rectangle_regulator(rect):
    sc = vol.normalize_regulator(rect.with_regulator(parse("exp(x)")))
    pt = {"x": 0.3, "y": 0.7}
    assert math.isclose(float(sc.ev(sc.sigma, pt)), 0.7 / math.exp(0.3))
    assert math.isclose(float(sc.ev(sc.measure.density, pt)), 1.7 / math.exp(0.6))


def test_regulated_volume_rectangle(rect):
    eps = np.array([0.1, 0.01, 0.001])
    exact = 2 / eps - 2 * np.log(eps) + 2 * math.log(2) - 1
    assert np.allclose(vol.regulated_volume(rect, eps), exact, rtol=1e-10)


def test_regulated_volume_revolution(rev):
    for e in (0.1, 0.02):
        assert math.isclose(vol.regulated_volume(rev, e), math.pi * (1 / (2 * e * e) - 0.5), rel_tol=1e-10)


def test_regulated_volume_empty_and_monotone(rect):
    assert vol.regulated_volume(rect, 2.5) == 0.0
    v = vol.regulated_volume(rect, SCHEDULE)
    assert np.all(np.diff(v) > 0)  # schedule is decreasing in eps


def test_regulated_volume_rejects_nonpositive(rect):
    with pytest.raises(ValueError):
        vol.regulated_volume(rect, 0.0)


def test_level_integral_fixtures(rect, rev):
    s = np.array([-0.2, 0.0, 0.3])
    assert np.allclose(vol.level_integral(rect, s), 2 + 2 * s, rtol=1e-12)
    assert np.allclose(vol.level_integral(rev, s), math.pi, rtol=1e-10)


def test_level_integral_window_error(rect):
    with pytest.raises(vol.WindowError):
        vol.level_integral(rect, 5.0)


def test_coarea_flat_half_space(half):
    lhs, rhs = vol.coarea_check(half)
    assert math.isclose(lhs, math.pi, rel_tol=1e-10) and math.isclose(lhs, rhs, rel_tol=1e-8)


def test_coarea_revolution(rev):
    lhs, rhs = vol.coarea_check(rev)
    assert abs(lhs - rhs) < 1e-8 * abs(rhs)


def test_delta_pairings(rect, rev):
    assert math.isclose(vol.delta_pairing(rect, 0), 2.0, rel_tol=1e-12)
    assert math.isclose(vol.delta_pairing(rect, 1), -2.0, rel_tol=1e-8)
    assert abs(vol.delta_pairing(rev, 2)) < 1e-6
    with pytest.raises(ValueError):
        vol.delta_pairing(rect, 2)


def test_richardson_reports_table_on_failure():
    noisy = lambda s: np.sin(1e4 * s) + np.random.default_rng(0).normal(size=np.shape(s))  # noqa: E731
    with pytest.raises(vol.NumericsError) as info:
        vol.richardson_derivative(noisy, 1, vol.FDSettings(0.05, 4, 1e-9))
    assert info.value.table


def test_richardson_polynomial():
    v, err, _ = vol.richardson_derivative(lambda s: np.exp(2 * s), 3, vol.FDSettings())
    assert math.isclose(v, 8.0, rel_tol=1e-7)


def test_expansion_rectangle(rect):
    r = vol.expansion_coefficients(rect)
    assert abs(r.coefficient(1) - 2) < 1e-9 and abs(r.anomaly + 2) < 1e-8
    assert math.isclose(r.renormalized_volume, 2 * math.log(2) - 1, abs_tol=1e-8)
    assert r.to_dict()["method"] == "level-derivative"


def test_expansion_revolution_and_half_space(rev, half):
    for sc in (rev, half):
        r = vol.expansion_coefficients(sc)
        assert math.isclose(r.coefficient(2), math.pi / 2, rel_tol=1e-8)
        assert abs(r.coefficient(1)) < 1e-6 and abs(r.anomaly) < 1e-6


def test_expansion_non_integer_k():
    g = flat(("x", "y"))
    sc = vol.Scene(g, parse("y"), "y", (-1, 3), (ParamAxis("x", -1, 1),),
                   measure=vol.Measure("explicit", parse("1+y"), 2.5), cutoff_U=2.0)
    r = vol.expansion_coefficients(sc)
    assert r.anomaly is None
    # I(s) = 2 + 2s: eps^-1.5 coefficient 2/1.5, eps^-0.5 coefficient 2/0.5
    assert math.isclose(r.coefficient(1.5), 2 / 1.5, rel_tol=1e-9)
    assert math.isclose(r.coefficient(0.5), 4.0, rel_tol=1e-8)
    fit = vol.sweep_fit(sc, SCHEDULE)
    assert math.isclose(fit.coefficient(0.5), 4.0, rel_tol=1e-3)
    assert math.isclose(fit.renormalized_volume, r.renormalized_volume, rel_tol=1e-3)


def test_sweep_fit_rectangle(rect):
    r = vol.sweep_fit(rect, SCHEDULE)
    assert abs(r.anomaly + 2) < 1e-4 and abs(r.coefficient(1) - 2) < 1e-6
    assert not r.diagnostics["ill_conditioned"]
    csv = vol.sweep_table(r).splitlines()
    assert csv[0] == "epsilon,volume,model_prediction,residual" and len(csv) == len(SCHEDULE) + 1


def test_sweep_fit_revolution(rev):
    r = vol.sweep_fit(rev, SCHEDULE)
    assert abs(r.coefficient(2) - math.pi / 2) < 1e-6
    assert abs(r.coefficient(1)) < 1e-4 and abs(r.anomaly) < 1e-4


def test_sweep_fit_needs_samples(rect):
    with pytest.raises(ValueError):
        vol.sweep_fit(rect, SCHEDULE[:4])


def test_cross_method_agreement(rect):
    a = vol.expansion_coefficients(rect)
    b = vol.sweep_fit(rect, SCHEDULE)
    assert abs(a.anomaly - b.anomaly) <= 1e-3 * abs(a.anomaly)
    assert abs(a.renormalized_volume - b.renormalized_volume) <= 1e-3 * abs(a.renormalized_volume)


def test_transform_rectangle(rect):
    lhs, rhs, res = vol.transform_check(rect, parse("x^2"))
    assert abs(lhs + 2 / 3) < 1e-5 and abs(rhs + 2 / 3) < 1e-5 and abs(res) < 1e-5


def test_transform_constant_shift(rect):
    lhs, rhs, _ = vol.transform_check(rect, parse("0.25"))
    assert math.isclose(lhs, 0.25 * -2, abs_tol=1e-5) and math.isclose(rhs, -0.5, abs_tol=1e-8)


def test_transform_revolution(rev):
    lhs, rhs, _ = vol.transform_check(rev, parse("0.3*r^2 + 0.1*cos(t)"))
    assert abs(lhs) < 1e-5 and abs(rhs) < 1e-5


def test_anomaly_regulator_and_cutoff_independence(rect):
    base = vol.expansion_coefficients(rect).anomaly
    moved = vol.expansion_coefficients(rect.with_regulator(parse("exp(0.3*x)"))).anomaly
    assert abs(base - moved) < 1e-5
    for U in (0.5, 2.0):
        r = vol.expansion_coefficients(rect.with_cutoff(U))
        assert abs(r.anomaly - base) < 1e-6 and abs(r.coefficient(1) - 2) < 1e-6


def test_anomaly_representative_independence(rev):
    base = vol.expansion_coefficients(rev)
    for om in ("exp(0.1*x)", "1 + 0.2*r^2"):
        r = vol.expansion_coefficients(rev.rescaled(parse(om)))
        assert abs(r.anomaly - base.anomaly) < 1e-6
        assert abs(r.coefficient(2) - base.coefficient(2)) < 1e-6


def test_line_anomaly_closed_curve():
    sc = builtin_scene("polar_curve")
    for f in ("1", "r^2*cos(t)^2", "1 + 0.3*sin(t)"):
        lhs, rhs, res = vol.line_anomaly_2d(sc, parse(f))
        assert abs(res) < 1e-6 * max(1.0, abs(rhs))


def test_line_anomaly_unit_circle_vanishes():
    sc = builtin_scene("polar_curve", b=0)
    lhs, rhs, _ = vol.line_anomaly_2d(sc, parse("1"))
    # S = |grad sigma|^2 + 2 rho sigma = 1/r, so grad_n(1/S) = 1 on r = 1
    assert math.isclose(rhs, -2 * math.pi, rel_tol=1e-9) and math.isclose(lhs, rhs, rel_tol=1e-6)


def test_line_anomaly_requires_closed_curve(rect):
    with pytest.raises(Exception):
        vol.line_anomaly_2d(builtin_scene("rectangle"), parse("1"))
