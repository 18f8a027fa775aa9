import numpy as np
import pandas as pd
import pytest

from app.exceptions import ConfigError, DomainError, InsufficientDataError, OffSupportError, RankDeficiencyError
from app.helpers.curves import LinearPropensity
from app.helpers.dataset import Dataset
from app.helpers.estimation import (
    concave_policy_learn,
    empirical_welfare,
    fit_choice_probit,
    heckman_two_step,
    liv_estimate,
    mte_from_heckman,
    mte_from_semiparametric,
    params_from_heckman,
    semiparametric_two_stage,
)
from app.helpers.simulation import simulate_normal
from app.helpers.welfare import VoucherCost, ZeroCost
from app.schemas import Cell, Distribution, HeckmanFit, SelectionParams, SubsidyRule
from app.utils.seeding import make_rng

IDENTITY = LinearPropensity(0.0, 1.0, (0.0, 1.0))


def uniform_selection_data(n: int, seed: int, z=None) -> Dataset:
    """g(z) = z, D = 1{U_D <= z}, Y1 - Y0 = 1 - 2 U_D, so E[Y | p] = p - p^2."""
    rng = make_rng(seed)
    if z is None:
        z = rng.uniform(0.0, 1.0, n)
    u_d = rng.uniform(0.0, 1.0, n)
    y0 = rng.normal(0.0, 0.1, n)
    d = (u_d <= z).astype(float)
    y = y0 + d * (1.0 - 2.0 * u_d)
    return Dataset(y=y, d=d, x=np.empty((n, 0)), w=np.empty((n, 0)), z=z)


@pytest.fixture(scope="module")
def friendly_params() -> SelectionParams:
    return SelectionParams(
        beta1=[1.0, 0.5], beta0=[0.0, 0.2], betaD=[0.0, 0.5], gamma=1.0,
        sigma1=1.0, sigma0=1.0, rho1=0.5, rho0=-0.3,
    )


@pytest.fixture(scope="module")
def friendly_data(friendly_params) -> Dataset:
    return simulate_normal(
        friendly_params,
        100_000,
        [Distribution(kind="bernoulli", p=0.5)],
        Distribution(kind="normal", mean=0.0, sd=1.0),
        seed=21,
    )


def test_probit_choice_equation(friendly_data):
    g = fit_choice_probit(friendly_data)
    assert g.beta_d == pytest.approx([0.0, 0.5], abs=0.03)
    assert g.gamma == pytest.approx(1.0, abs=0.03)
    assert not g.warnings


def test_heckman_recovers_selection_model(friendly_data):
    fit = heckman_two_step(friendly_data)
    assert fit.beta1_hat == pytest.approx([1.0, 0.5], abs=0.05)
    assert fit.beta0_hat == pytest.approx([0.0, 0.2], abs=0.05)
    assert fit.rho1_sigma1 == pytest.approx(0.5, abs=0.08)
    assert fit.rho0_sigma0 == pytest.approx(-0.3, abs=0.08)
    assert fit.sigma1_hat == pytest.approx(1.0, abs=0.05)
    assert fit.n == 100_000
    curve = mte_from_heckman(fit)
    assert curve.shape == "decreasing"
    assert curve.evaluate((1.0,), 0.5) == pytest.approx(1.3, abs=0.1)
    rows = fit.table_rows(["medical"], "voucher")
    assert set(rows) >= {"choice.intercept", "choice.medical", "choice.voucher", "y1.medical", "rho0", "sigma1"}


def test_params_from_heckman_round_trip(friendly_data):
    params = params_from_heckman(heckman_two_step(friendly_data))
    assert params.rho01 == 0.0
    assert params.mte_slope == pytest.approx(0.8, abs=0.15)


def test_params_from_heckman_rejects_instrument_coefficients():
    fit = HeckmanFit(
        betaD_hat=[0.0], betaW_hat=[0.3], gamma_hat=1.0, beta1_hat=[1.0], beta0_hat=[0.0],
        rho1_sigma1=0.1, rho0_sigma0=0.1, rho1_hat=0.1, rho0_hat=0.1, sigma1_hat=1.0, sigma0_hat=1.0, n=10,
    )
    with pytest.raises(DomainError):
        params_from_heckman(fit)


@pytest.mark.slow
def test_probit_on_wage_subsidy_design(wage_params):
    data = simulate_normal(
        wage_params,
        200_000,
        [Distribution(kind="bernoulli", p=0.5)],
        Distribution(kind="uniform", low=0.0, high=900.0),
        seed=1,
    )
    g = fit_choice_probit(data)
    assert g.beta_d == pytest.approx([-0.9359, 0.2965], abs=0.03)
    assert g.gamma == pytest.approx(0.0017, abs=1e-4)


def test_semiparametric_recovers_linear_mte():
    data = uniform_selection_data(200_000, seed=4)
    fit = semiparametric_two_stage(data, degree=3, propensity=IDENTITY)
    assert fit.theta_hat[:2] == [0.0, 0.0]
    curve = mte_from_semiparametric(fit)
    for u in (0.3, 0.5, 0.7):
        assert curve.evaluate((), u) == pytest.approx(1.0 - 2.0 * u, abs=0.1)


def test_semiparametric_detects_collinear_propensity():
    z = np.tile([0.2, 0.8], 500)
    data = uniform_selection_data(z.size, seed=5, z=z)
    with pytest.raises(RankDeficiencyError):
        semiparametric_two_stage(data, degree=3, propensity=IDENTITY)
    with pytest.raises(DomainError):
        semiparametric_two_stage(data, degree=7, propensity=IDENTITY)


def test_liv_recovers_linear_mte():
    data = uniform_selection_data(200_000, seed=6)
    u_grid = np.linspace(0.05, 0.95, 19)
    curve = liv_estimate(data, IDENTITY, u_grid, bandwidth=0.1)
    for u in (0.3, 0.5, 0.7):
        assert curve.evaluate((), u) == pytest.approx(1.0 - 2.0 * u, abs=0.25)
    assert curve.masks[()].all()
    assert curve.metadata["bandwidths"]["()"] == 0.1


def test_liv_masks_unsupported_region():
    data = uniform_selection_data(20_000, seed=7, z=make_rng(7, 1).uniform(0.0, 0.5, 20_000))
    u_grid = np.linspace(0.05, 0.95, 19)
    curve = liv_estimate(data, IDENTITY, u_grid, bandwidth=0.05)
    mask = curve.masks[()]
    assert mask[u_grid < 0.4].all()
    assert not mask[u_grid > 0.6].any()
    assert curve.extrapolated((), 0.0, 0.9)


def test_liv_requires_enough_records():
    data = uniform_selection_data(100, seed=8)
    with pytest.raises(InsufficientDataError):
        liv_estimate(data, IDENTITY, [0.5], bandwidth=0.1)
    with pytest.raises(DomainError):
        liv_estimate(data, IDENTITY, [0.5], bandwidth=0.0)


def test_concave_learner_finds_the_peak():
    rng = make_rng(9)
    p = rng.uniform(0.0, 1.0, 20_000)
    y = -((p - 0.6) ** 2) + rng.normal(0.0, 0.1, p.size)
    data = Dataset(y=y, d=np.zeros(p.size), x=np.empty((p.size, 0)), w=np.empty((p.size, 0)), z=p)
    fit = concave_policy_learn(data, IDENTITY)
    assert fit.regressor == "propensity"
    assert fit.argmax == pytest.approx(0.6, abs=0.05)
    assert fit.max_slope_change <= 1e-9
    assert concave_policy_learn(data).regressor == "subsidy"


def test_concave_learner_needs_three_values():
    data = Dataset(y=[1.0, 2.0, 3.0], d=[0, 1, 0], x=np.empty((3, 0)), w=np.empty((3, 0)), z=[0.0, 1.0, 1.0])
    with pytest.raises(InsufficientDataError):
        concave_policy_learn(data)


def test_empirical_welfare_on_and_off_support():
    z = np.repeat([0.0, 1.0], 4)
    d = np.array([0, 0, 1, 1, 1, 1, 1, 0], dtype=float)
    y = np.array([1.0, 1.0, 3.0, 3.0, 2.0, 2.0, 2.0, 2.0])
    data = Dataset(y=y, d=d, x=np.empty((8, 0)), w=np.empty((8, 0)), z=z)
    cells = [Cell(label="all")]
    rule = SubsidyRule(cells=cells, assignment=[1.0], action_space=(0.0, 1.0))
    assert empirical_welfare(data, rule, ZeroCost(), 1e-9) == pytest.approx(2.0)
    assert empirical_welfare(data, rule, VoucherCost(), 1e-9) == pytest.approx(2.0 - 0.75)
    off = SubsidyRule(cells=cells, assignment=[0.5], action_space=(0.0, 1.0))
    with pytest.raises(OffSupportError) as info:
        empirical_welfare(data, off, ZeroCost(), 0.1)
    assert info.value.details["nearest"]["all"] in (0.0, 1.0)


def test_dataset_validation(tmp_path):
    path = tmp_path / "data.csv"
    pd.DataFrame({"y": [1.0, 2.0], "d": [0, 1], "x1": [0.0, 1.0], "z": [0.1, 0.2]}).to_csv(path, index=False)
    data = Dataset.from_csv(path, ["medical"])
    assert data.k == 1 and data.m == 0
    assert data.x_names == ["medical"]
    pd.DataFrame({"y": [1.0], "d": [2], "z": [0.0]}).to_csv(path, index=False)
    with pytest.raises(ConfigError):
        Dataset.from_csv(path)
    pd.DataFrame({"y": [1.0], "d": [1], "q": [0.0], "z": [0.0]}).to_csv(path, index=False)
    with pytest.raises(ConfigError):
        Dataset.from_csv(path)
    with pytest.raises(ConfigError):
        Dataset.from_csv(tmp_path / "missing.csv")
