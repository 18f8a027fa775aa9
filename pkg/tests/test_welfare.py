import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import ConfigError, DomainError, MissingCellError
from app.helpers.curves import GridCurveMte, NormalParametricMte, ProbitPropensity
from app.helpers.welfare import (
    ConstantPerEligibleCost,
    GeneralTableCost,
    VoucherCost,
    ZeroCost,
    baseline_from_params,
    mc_oracle_summary,
    welfare_of_rule,
)
from app.schemas import Cell, SubsidyRule
from app.utils.numerics import Grid


@pytest.fixture
def toy_rule(toy_cell):
    cells = [toy_cell(0.0, 0.25), toy_cell(0.5, 0.5), toy_cell(1.0, 0.25)]
    return SubsidyRule(cells=cells, assignment=[1.0, 0.7, 0.4], action_space=(0.0, 1.0))


def test_single_cell_welfare_decomposition(toy_mte, toy_g, toy_cell):
    rule = SubsidyRule(cells=[toy_cell(0.0)], assignment=[1.0], action_space=(0.0, 1.0))
    report = welfare_of_rule(toy_mte, toy_g, VoucherCost(), rule)
    assert report.gross == pytest.approx(1.75)
    assert report.cost == pytest.approx(0.5)
    assert report.net_above_baseline == pytest.approx(1.25)
    assert report.net is None
    assert report.per_cell["w=0"].takeup == pytest.approx(0.5)


def test_welfare_at_optimum_for_highest_w(toy_mte, toy_g, toy_cell):
    rule = SubsidyRule(cells=[toy_cell(1.0)], assignment=[0.4], action_space=(0.0, 1.0))
    report = welfare_of_rule(toy_mte, toy_g, VoucherCost(), rule, baseline=10.0)
    assert report.net_above_baseline == pytest.approx(1.80)
    assert report.net == pytest.approx(11.80)


def test_welfare_weights_cells(toy_mte, toy_g, toy_rule):
    report = welfare_of_rule(toy_mte, toy_g, VoucherCost(), toy_rule)
    per_cell = report.per_cell
    weighted = sum(c.weight * c.net for c in per_cell.values())
    assert report.net_above_baseline == pytest.approx(weighted)
    assert not report.warnings


def test_cost_kinds(toy_mte, toy_g, toy_cell):
    rule = SubsidyRule(cells=[toy_cell(0.0)], assignment=[1.0], action_space=(0.0, 1.0))
    assert welfare_of_rule(toy_mte, toy_g, ZeroCost(), rule).cost == 0.0
    assert welfare_of_rule(toy_mte, toy_g, ConstantPerEligibleCost(0.3), rule).cost == pytest.approx(0.3)
    table = GeneralTableCost.from_table([0.0, 1.0], [0.0, 2.0], [0.0, 0.0])
    # treated pay 2z at z=1, half take up
    assert welfare_of_rule(toy_mte, toy_g, table, rule).cost == pytest.approx(1.0)
    assert table.derivative((), (), 0.5, 1) == pytest.approx(2.0)


def test_cost_table_validation():
    with pytest.raises(ConfigError):
        GeneralTableCost.from_table([0.0], [1.0], [0.0])
    with pytest.raises(ConfigError):
        GeneralTableCost.from_table([1.0, 0.0], [1.0, 1.0], [0.0, 0.0])


def test_rule_validation(toy_cell):
    cells = [toy_cell(0.0, 0.5), toy_cell(1.0, 0.4)]
    with pytest.raises(ValidationError):
        SubsidyRule(cells=cells, assignment=[0.0, 0.0], action_space=(0.0, 1.0))
    cells = [toy_cell(0.0, 0.5), toy_cell(1.0, 0.5)]
    with pytest.raises(ValidationError):
        SubsidyRule(cells=cells, assignment=[0.0, 2.0], action_space=(0.0, 1.0))
    with pytest.raises(ValidationError):
        SubsidyRule(cells=cells, assignment=[0.0], action_space=(0.0, 1.0))
    with pytest.raises(ValidationError):
        SubsidyRule(cells=[toy_cell(0.0, 0.5), toy_cell(0.0, 0.5)], assignment=[0.0, 0.0], action_space=(0.0, 1.0))


def test_subsidy_outside_propensity_domain(toy_mte, toy_g, toy_cell):
    rule = SubsidyRule(cells=[toy_cell(0.0)], assignment=[2.0], action_space=(0.0, 2.0))
    with pytest.raises(DomainError):
        welfare_of_rule(toy_mte, toy_g, VoucherCost(), rule)


def test_extrapolation_is_reported(toy_g, toy_cell):
    points = np.linspace(0.0, 1.0, 11)
    mask = points >= 0.3
    curve = GridCurveMte({(): Grid(points, 4.0 - 2.0 * points)}, {(): mask})
    rule = SubsidyRule(cells=[toy_cell(0.0)], assignment=[0.5], action_space=(0.0, 1.0))
    report = welfare_of_rule(curve, toy_g, VoucherCost(), rule)
    assert len(report.warnings) == 1
    assert "extrapolated" in report.warnings[0]


def test_baseline_from_params(wage_params, medical, other):
    expected = 0.5 * (607.5856 + 1743.904) + 0.5 * 607.5856
    assert baseline_from_params(wage_params, [medical, other]) == pytest.approx(expected)


@pytest.mark.slow
def test_monte_carlo_oracle_agrees_with_closed_form(wage_params, medical, other):
    mte = NormalParametricMte(wage_params.level_coef, wage_params.mte_slope)
    g = ProbitPropensity(wage_params.betaD, wage_params.gamma)
    cells = [medical, other]
    rule = SubsidyRule.constant(cells, 300.0, (0.0, 900.0))
    cost = VoucherCost()
    analytic = welfare_of_rule(mte, g, cost, rule, baseline_from_params(wage_params, cells))
    oracle = mc_oracle_summary(wage_params, cost, rule, n=400_000, seed=7)
    assert abs(oracle.mean - analytic.net) <= 4.0 * oracle.std_error


def test_monte_carlo_oracle_is_deterministic(wage_params, medical, other):
    rule = SubsidyRule.constant([medical, other], 100.0, (0.0, 900.0))
    first = mc_oracle_summary(wage_params, VoucherCost(), rule, n=20_000, seed=3, batch_size=5_000)
    second = mc_oracle_summary(wage_params, VoucherCost(), rule, n=20_000, seed=3, batch_size=5_000)
    assert first == second


def test_constant_rule_requires_cells_in_rule(toy_cell):
    rule = SubsidyRule.constant([toy_cell(0.0)], 0.5, (0.0, 1.0), name="flat")
    with pytest.raises(MissingCellError) as info:
        rule.z_for(Cell(w=(3.0,), label="elsewhere"))
    assert info.value.details == {"cells": ["elsewhere"]}
    assert info.value.exit_code == 4
    assert "flat" in info.value.message


@pytest.mark.parametrize("baseline", [-5.0, 0.0, 12.5, 1523.19])
def test_baseline_cancels_from_rule_differences(toy_mte, toy_g, toy_rule, baseline):
    flat = SubsidyRule.constant(toy_rule.cells, 0.2, (0.0, 1.0))
    without = [welfare_of_rule(toy_mte, toy_g, VoucherCost(), r) for r in (toy_rule, flat)]
    with_baseline = [welfare_of_rule(toy_mte, toy_g, VoucherCost(), r, baseline=baseline) for r in (toy_rule, flat)]
    gap = without[0].net_above_baseline - without[1].net_above_baseline
    assert with_baseline[0].net - with_baseline[1].net == pytest.approx(gap, abs=1e-12)
    assert with_baseline[0].gross == without[0].gross


@pytest.mark.parametrize("assignment", [[1.0, 0.7, 0.4], [0.2, 0.2, 0.2], [1.0, 1.0, 1.0]])
def test_welfare_falls_as_voucher_cost_rises(toy_mte, toy_g, toy_rule, assignment):
    rule = SubsidyRule(cells=toy_rule.cells, assignment=assignment, action_space=(0.0, 1.0))
    multipliers = [0.0, 0.5, 1.0, 1.5, 3.0]
    costs = [GeneralTableCost.from_table([0.0, 1.0], [0.0, k], [0.0, 0.0]) for k in multipliers]
    nets = [welfare_of_rule(toy_mte, toy_g, cost, rule).net_above_baseline for cost in costs]
    assert np.all(np.diff(nets) < 0)
    voucher = welfare_of_rule(toy_mte, toy_g, VoucherCost(), rule).net_above_baseline
    assert nets[multipliers.index(1.0)] == pytest.approx(voucher, abs=1e-12)
