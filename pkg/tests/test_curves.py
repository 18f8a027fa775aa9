import numpy as np
import pytest
from scipy import stats

from app.exceptions import DomainError, InvertibilityError
from app.helpers.curves import (
    FunctionPropensity,
    GridCurveMte,
    GridPropensity,
    LinearPropensity,
    NormalParametricMte,
    PolyLambdaPrimeMte,
    ProbitPropensity,
    monotone_grid,
)
from app.utils.numerics import Grid, quad_integrate


def test_normal_mte_matches_plug_in_formula(wage_params):
    mte = NormalParametricMte(wage_params.level_coef, wage_params.mte_slope)
    u = np.array([0.1, 0.5, 0.9])
    expected = 985.853 - 1523.19 * stats.norm.ppf(u)
    assert mte.evaluate((1.0,), u) == pytest.approx(expected, rel=1e-4)
    assert mte.shape == "decreasing"


def test_normal_mte_closed_form_integral_matches_quadrature(wage_params):
    mte = NormalParametricMte(wage_params.level_coef, wage_params.mte_slope)
    numeric = quad_integrate(lambda t: mte.evaluate((0.0,), t), 0.2, 0.7)
    assert mte.integral((0.0,), 0.2, 0.7) == pytest.approx(numeric, rel=1e-9)
    # over the whole unit interval only the level survives
    assert mte.integral((1.0,), 0.0, 1.0) == pytest.approx(985.853, rel=1e-4)


def test_normal_mte_rejects_wrong_cell_dimension(wage_params):
    mte = NormalParametricMte(wage_params.level_coef, wage_params.mte_slope)
    with pytest.raises(DomainError):
        mte.evaluate((1.0, 2.0), 0.5)


def test_polynomial_mte_integral_and_shape(toy_mte, nonmonotone_mte):
    assert toy_mte.evaluate((), 0.25) == pytest.approx(3.5)
    assert toy_mte.integral((), 0.0, 1.0) == pytest.approx(3.0)
    assert toy_mte.shape == "decreasing"
    assert nonmonotone_mte.shape == "none"
    assert PolyLambdaPrimeMte([0.0], [1.0, 0.5]).shape == "increasing"


def test_zero_crossing(toy_mte, cosine_mte):
    assert cosine_mte.zero_crossing(()) == pytest.approx(0.5804, abs=1e-4)
    assert toy_mte.zero_crossing(()) == 1.0
    assert PolyLambdaPrimeMte([0.0], [-1.0, -1.0]).zero_crossing(()) == 0.0


def test_verify_shape(toy_mte, nonmonotone_mte):
    assert toy_mte.verify_shape(())
    assert not toy_mte.verify_shape((), "increasing")
    assert not nonmonotone_mte.verify_shape((), "decreasing")
    assert nonmonotone_mte.verify_shape(())


def test_grid_curve_integral_and_extrapolation():
    points = np.linspace(0.0, 1.0, 11)
    grid = Grid(points, 1.0 - points)
    mask = (points >= 0.2) & (points <= 0.8)
    curve = GridCurveMte({(): grid}, {(): mask}, shape="decreasing")
    assert curve.integral((), 0.0, 1.0) == pytest.approx(0.5)
    assert curve.integral((), 0.25, 0.35) == pytest.approx(0.1 * 0.7)
    assert curve.identified_range(()) == (pytest.approx(0.2), pytest.approx(0.8))
    assert not curve.extrapolated((), 0.3, 0.7)
    assert curve.extrapolated((), 0.1, 0.5)
    with pytest.raises(DomainError):
        curve.evaluate((1.0,), 0.5)


def test_monotone_grid_stays_inside_unit_interval():
    u = monotone_grid(4)
    assert u.tolist() == [0.125, 0.375, 0.625, 0.875]


def test_probit_propensity(wage_params):
    g = ProbitPropensity(wage_params.betaD, wage_params.gamma)
    assert g.evaluate((1.0,), (), 0.0) == pytest.approx(stats.norm.cdf(-0.6394), abs=1e-6)
    assert g.derivative((1.0,), (), 300.0) == pytest.approx(0.0017 * stats.norm.pdf(-0.6394 + 0.51), rel=1e-6)
    assert g.is_increasing((1.0,), (), 0.0, 900.0)
    rows = g.evaluate_rows(np.array([[1.0], [0.0]]), np.empty((2, 0)), np.array([0.0, 900.0]))
    assert rows == pytest.approx([g.evaluate((1.0,), (), 0.0), g.evaluate((0.0,), (), 900.0)])


def test_propensity_inverse_clips_unreachable_values(toy_g):
    assert toy_g.inverse((), (0.0,), 0.5, 0.0, 1.0) == pytest.approx(1.0)
    assert toy_g.inverse((), (0.0,), 0.1, 0.0, 1.0) == 0.0
    assert toy_g.inverse((), (0.0,), 0.9, 0.0, 1.0) == 1.0
    assert toy_g.inverse((), (0.0,), 0.375, 0.0, 1.0) == pytest.approx(0.5)


def test_linear_propensity_domain(toy_g):
    assert toy_g.is_concave((), (0.0,), 0.0, 1.0)
    with pytest.raises(DomainError):
        toy_g.evaluate((), (0.0,), 1.5)
    with pytest.raises(InvertibilityError):
        LinearPropensity(0.1, 0.0, (0.0, 1.0))


def test_grid_propensity_requires_strict_increase():
    z = np.array([0.0, 1.0, 2.0])
    g = GridPropensity({((), ()): Grid(z, np.array([0.1, 0.4, 0.6]))})
    assert g.evaluate((), (), 0.5) == pytest.approx(0.25)
    assert g.z_domain((), ()) == (0.0, 2.0)
    with pytest.raises(InvertibilityError):
        GridPropensity({((), ()): Grid(z, np.array([0.1, 0.4, 0.4]))})


def test_function_propensity_numeric_derivative():
    g = FunctionPropensity(lambda x, w, z: 1.0 - np.exp(-z), domain=(0.0, 5.0))
    assert g.derivative((), (), 1.0) == pytest.approx(np.exp(-1.0), rel=1e-6)
    assert g.is_concave((), (), 0.0, 5.0)
