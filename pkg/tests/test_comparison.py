import numpy as np
import pytest

from app.exceptions import AssumptionError, DomainError
from app.helpers.comparison import first_best_policy, identified_support, merge_intervals, mte_crossings, welfare_ladder
from app.helpers.curves import FunctionMte, PolyLambdaPrimeMte, ProbitPropensity
from app.schemas import Cell
from app.utils.seeding import make_rng

FULL = (0.0, 1.0)


def test_merge_intervals():
    assert merge_intervals([(0.7, 0.8), (0.0, 0.3), (0.2, 0.5)]) == [(0.0, 0.5), (0.7, 0.8)]
    assert merge_intervals([(0.0, 0.5), (0.5, 0.6)]) == [(0.0, 0.6)]
    assert merge_intervals([]) == []


def test_identified_support_of_linear_takeup(toy_g, toy_cell):
    cells = [toy_cell(0.0, 0.25), toy_cell(0.5, 0.5), toy_cell(1.0, 0.25)]
    support = identified_support(toy_g, cells, FULL)
    assert support == {"()": [(0.25, 0.75)]}


def test_identified_support_of_probit_takeup(wage_params, medical, other):
    g = ProbitPropensity(wage_params.betaD, wage_params.gamma)
    support = identified_support(g, [medical, other], {"medical": (0.0, 900.0), "other": (0.0, 900.0)})
    (lo, hi), = support["(1)"]
    assert lo == pytest.approx(0.2613, abs=1e-3)
    assert hi == pytest.approx(0.8134, abs=1e-3)
    with pytest.raises(DomainError):
        identified_support(g, [medical], {"other": (0.0, 900.0)})


def test_cosine_ladder_reaches_first_best(cosine_mte, identity_g):
    ladder = welfare_ladder(cosine_mte, identity_g, (), [Cell(label="all")], FULL)
    assert ladder.first_best_threshold == pytest.approx(0.5804, abs=1e-4)
    assert ladder.s_fb == pytest.approx(0.4533, abs=1e-4)
    assert ladder.s_sub == pytest.approx(ladder.s_fb, abs=1e-9)
    assert ladder.s_dir == pytest.approx(0.25, abs=1e-9)
    assert ladder.s_con == ladder.s_dir
    assert ladder.first_best_attained
    assert ladder.ordering_holds


def test_decreasing_curve_mandate_gains_nothing(identity_g):
    mte = PolyLambdaPrimeMte([0.0], [0.5, -1.0])
    ladder = welfare_ladder(mte, identity_g, (), [Cell(label="all")], FULL)
    assert ladder.s_dir == pytest.approx(0.0, abs=1e-12)
    assert ladder.s_sub == pytest.approx(0.125)
    assert ladder.s_fb == pytest.approx(0.125)
    assert ladder.first_best_threshold == pytest.approx(0.5)


def test_partial_support_can_break_the_ordering(toy_mte, toy_g, toy_cell):
    cells = [toy_cell(0.0, 0.25), toy_cell(0.5, 0.5), toy_cell(1.0, 0.25)]
    ladder = welfare_ladder(toy_mte, toy_g, (), cells, FULL)
    assert ladder.identified_support == [(0.25, 0.75)]
    assert ladder.s_dir == pytest.approx(1.5)
    assert ladder.s_fb == pytest.approx(1.5)
    assert ladder.s_sub == pytest.approx(1.1640625)
    assert not ladder.ordering_holds
    assert not ladder.first_best_attained


def test_random_curves_with_full_reach_keep_the_ordering(identity_g):
    rng = make_rng(5)
    cells = [Cell(label="a", weight=0.4), Cell(label="b", weight=0.6)]
    for _ in range(20):
        mte = PolyLambdaPrimeMte([0.0], rng.normal(size=4))
        ladder = welfare_ladder(mte, identity_g, (), cells, FULL)
        assert ladder.ordering_holds, ladder
        assert ladder.s_dir <= ladder.s_sub + 1e-9 <= ladder.s_fb + 2e-9


def test_nonmonotone_ladder_has_no_threshold(nonmonotone_mte, identity_g):
    ladder = welfare_ladder(nonmonotone_mte, identity_g, (), [Cell(label="all")], FULL)
    assert ladder.first_best_threshold is None
    assert ladder.s_sub <= ladder.s_fb + 1e-9
    assert len(mte_crossings(nonmonotone_mte, ())) >= 2
    with pytest.raises(AssumptionError):
        first_best_policy(nonmonotone_mte, ())


def test_ladder_requires_cells_for_x(toy_mte, toy_g, toy_cell):
    with pytest.raises(DomainError):
        welfare_ladder(toy_mte, toy_g, (1.0,), [toy_cell(0.0)], FULL)


@pytest.mark.parametrize(
    "fn,lo,root",
    [
        (lambda u: u - 2e-4, 0.0, 2e-4),
        (lambda u: 0.9999 - u, 0.0, 0.9999),
        (lambda u: 0.3 + 1e-6 - u, 0.3, 0.3 + 1e-6),
    ],
)
def test_crossings_between_the_ends_and_the_first_grid_point(fn, lo, root):
    mte = FunctionMte(fn)
    assert mte_crossings(mte, (), lo=lo) == pytest.approx([root], abs=1e-9)


def test_crossings_outside_the_window_are_ignored():
    mte = FunctionMte(lambda u: u - 0.2)
    assert mte_crossings(mte, (), lo=0.5, hi=0.9) == []
    assert mte_crossings(mte, (), lo=0.6, hi=0.6) == []
