import numpy as np
import pytest
from scipy import stats

from app.exceptions import SimulationError
from app.helpers.curves import NormalParametricMte
from app.helpers.simulation import (
    GeneralizedRoySpec,
    discrete_cells,
    linear_utility,
    roy_mte_curve,
    simulate_generalized_roy,
    simulate_normal,
    true_mte,
)
from app.schemas import Distribution, SelectionParams

BERNOULLI = Distribution(kind="bernoulli", p=0.5)
SUBSIDY = Distribution(kind="uniform", low=0.0, high=900.0)
STANDARD_NORMAL = Distribution(kind="normal")


@pytest.fixture(scope="module")
def roy_result():
    model = GeneralizedRoySpec(
        phi=linear_utility(coef_z=1.0, coef_delta=1.0, coef_v=-1.0),
        delta_dist=Distribution(kind="normal", mean=1.0, sd=1.0),
        v_dist=STANDARD_NORMAL,
    )
    return simulate_generalized_roy(model, 50_000, [], [], Distribution(kind="uniform", low=-2.0, high=2.0), seed=13)


def test_normal_simulation_is_reproducible(wage_params):
    first = simulate_normal(wage_params, 5_000, [BERNOULLI], SUBSIDY, seed=42)
    second = simulate_normal(wage_params, 5_000, [BERNOULLI], SUBSIDY, seed=42)
    other = simulate_normal(wage_params, 5_000, [BERNOULLI], SUBSIDY, seed=43)
    assert np.array_equal(first.y, second.y)
    assert np.array_equal(first.d, second.d)
    assert not np.array_equal(first.y, other.y)


def test_streams_do_not_depend_on_sample_size(wage_params):
    short = simulate_normal(wage_params, 1_000, [BERNOULLI], SUBSIDY, seed=42)
    long = simulate_normal(wage_params, 2_000, [BERNOULLI], SUBSIDY, seed=42)
    assert np.array_equal(short.z, long.z[:1_000])


def test_non_psd_shock_covariance_is_rejected():
    params = SelectionParams(
        beta1=[0.0], beta0=[0.0], betaD=[0.0], gamma=1.0,
        sigma1=1.0, sigma0=1.0, rho1=0.9, rho0=0.9, rho01=-0.9,
    )
    assert not params.is_psd()
    with pytest.raises(SimulationError):
        simulate_normal(params, 10, [], STANDARD_NORMAL, seed=1)


def test_covariate_dimension_must_match(wage_params):
    with pytest.raises(SimulationError):
        simulate_normal(wage_params, 10, [], SUBSIDY)
    with pytest.raises(SimulationError):
        simulate_normal(wage_params, 0, [BERNOULLI], SUBSIDY)


def test_true_mte_matches_parametric_curve(wage_params):
    curve = NormalParametricMte(wage_params.level_coef, wage_params.mte_slope)
    u = np.array([0.05, 0.5, 0.95])
    assert true_mte(wage_params, (1.0,), u) == pytest.approx(curve.evaluate((1.0,), u))


@pytest.mark.slow
def test_wage_subsidy_takeup_at_full_subsidy(wage_params):
    data = simulate_normal(
        wage_params, 200_000, [Distribution(kind="constant", value=1.0)],
        Distribution(kind="constant", value=900.0), seed=2,
    )
    assert data.d.mean() == pytest.approx(0.8134, abs=0.005)


def test_generalized_roy_latent_u_is_uniform(roy_result):
    assert stats.kstest(roy_result.latent_u, "uniform").pvalue > 0.01


def test_generalized_roy_mte_decreases(roy_result):
    mte = roy_result.mte
    grid = mte.grid(())
    se = roy_result.bin_std_errors
    assert mte.shape == "decreasing"
    assert mte.metadata["bins"] == 37
    rises = np.diff(grid.values) - 2.0 * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)
    assert np.all(rises <= 0)


def test_generalized_roy_propensity_matches_takeup(roy_result):
    data = roy_result.dataset
    fitted = roy_result.propensity.evaluate_rows(data.x, data.w, data.z)
    assert fitted.mean() == pytest.approx(data.d.mean(), abs=0.01)
    lo, hi = roy_result.propensity.z_domain((), ())
    assert roy_result.propensity.is_increasing((), (), lo, hi, n=50)


def test_rank_invariance_violation_is_detected():
    model = GeneralizedRoySpec(
        phi=lambda x, w, z, delta, v: z * delta + v,
        delta_dist=STANDARD_NORMAL,
        v_dist=STANDARD_NORMAL,
        reference=(1.0, 0.0),
    )
    with pytest.raises(SimulationError, match="rank invariance"):
        simulate_generalized_roy(model, 5_000, [], [], Distribution(kind="uniform", low=-2.0, high=2.0), seed=3)


def test_propensity_tabulation_needs_discrete_cells():
    assert discrete_cells([BERNOULLI], "covariate") == [(0.0,), (1.0,)]
    assert discrete_cells([], "instrument") == [()]
    with pytest.raises(SimulationError):
        discrete_cells([STANDARD_NORMAL], "covariate")


def test_roy_curve_shape():
    curve = roy_mte_curve(lambda u: stats.norm.ppf(u))
    assert curve.shape == "increasing"
    assert curve.evaluate((), 0.5) == pytest.approx(0.0)
