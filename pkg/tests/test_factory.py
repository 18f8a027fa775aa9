import pytest

from app.exceptions import ConfigError
from app.helpers.curves import NormalParametricMte, ProbitPropensity
from app.helpers.factory import build_cost, build_mte, build_propensity, load_grid_curve
from app.models.model_type import CostConfig, MteConfig, PropensityConfig
from app.utils.io_utils import write_json, write_table


def test_params_sources(wage_params):
    mte = build_mte(MteConfig(source="params"), wage_params)
    g = build_propensity(PropensityConfig(source="params"), wage_params)
    assert isinstance(mte, NormalParametricMte)
    assert mte.slope == pytest.approx(wage_params.mte_slope)
    assert isinstance(g, ProbitPropensity)
    with pytest.raises(ConfigError):
        build_mte(MteConfig(source="params"))


def test_polynomial_source_keeps_declared_shape():
    mte = build_mte(MteConfig(source="polynomial", lambda_prime=[1.0, -1.0], shape="none"))
    assert mte.shape == "none"
    assert mte.evaluate((), 0.25) == pytest.approx(0.75)


def test_grid_source(tmp_path):
    rows = []
    for x1 in (0.0, 1.0):
        for u, identified in ((0.25, 1), (0.5, 1), (0.75, 0)):
            rows.append({"estimator": "liv", "x1": x1, "u": u, "mte": x1 + 1.0 - u, "identified": identified})
    rows.append({"estimator": "heckman", "x1": 0.0, "u": 0.5, "mte": 9.0, "identified": 1})
    path = tmp_path / "mte_curve.csv"
    write_table(path, rows, ["estimator", "x1", "u", "mte", "identified"])

    curve = load_grid_curve(str(path))
    assert set(curve.grids) == {(0.0,), (1.0,)}
    assert curve.evaluate((1.0,), 0.5) == pytest.approx(1.5)
    assert curve.identified_range((0.0,)) == (0.25, 0.5)
    assert curve.extrapolated((0.0,), 0.25, 0.75)
    with pytest.raises(ConfigError):
        load_grid_curve(str(path), estimator="semiparametric")


def test_fit_source_requires_known_estimator(tmp_path):
    path = tmp_path / "fit.json"
    write_json(path, {"propensity": {"beta_d": [0.1], "gamma": 0.5}})
    g = build_propensity(PropensityConfig(source="fit", path=str(path)))
    assert g.gamma == 0.5
    with pytest.raises(ConfigError):
        build_mte(MteConfig(source="fit", path=str(path), estimator="heckman"))


@pytest.mark.parametrize("kind", ["zero", "constant", "voucher"])
def test_cost_kinds(kind):
    assert build_cost(CostConfig(kind=kind, amount=2.0)).kind == kind


def test_table_cost_validation():
    with pytest.raises(ValueError):
        CostConfig(kind="table", z=[0.0], treated=[1.0], untreated=[0.0])
    cost = build_cost(CostConfig(kind="table", z=[0.0, 1.0], treated=[0.0, 1.0], untreated=[0.0, 0.0]))
    assert cost.kind == "general"
