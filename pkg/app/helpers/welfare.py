from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np
from tqdm import tqdm

from app.config import settings
from app.exceptions import ConfigError, DomainError
from app.helpers.curves import Key, MteCurve, PropensityFn, ProbitPropensity, as_key
from app.helpers.simulation import draw_shocks
from app.schemas import Cell, CellWelfare, MonteCarloSummary, SelectionParams, SubsidyRule, WelfareReport
from app.utils.log_utils import get_logger
from app.utils.seeding import make_rng

logger = get_logger("WELFARE")

# ---------------------------------------------------------------- cost specs


class CostSpec(ABC):
    """Per-person cost c(x, w, z, d) paid by the policy maker."""

    kind: str = "general"

    @abstractmethod
    def value(self, x: Key, w: Key, z, d):
        ...

    def derivative(self, x: Key, w: Key, z: float, d: int) -> float:
        h = 1e-6 * max(1.0, abs(z))
        return (float(self.value(x, w, z + h, d)) - float(self.value(x, w, z - h, d))) / (2 * h)

    def expected(self, x: Key, w: Key, z: float, takeup: float) -> float:
        return float(self.value(x, w, z, 1)) * takeup + float(self.value(x, w, z, 0)) * (1.0 - takeup)


class ZeroCost(CostSpec):
    kind = "zero"

    def value(self, x, w, z, d):
        return np.zeros_like(np.asarray(d, dtype=float) * np.asarray(z, dtype=float))

    def derivative(self, x, w, z, d):
        return 0.0


class ConstantPerEligibleCost(CostSpec):
    """A fixed amount per eligible person, paid whether or not they take up."""

    kind = "constant"

    def __init__(self, amount: float):
        self.amount = float(amount)

    def value(self, x, w, z, d):
        return self.amount + 0.0 * np.asarray(d, dtype=float) * np.asarray(z, dtype=float)

    def derivative(self, x, w, z, d):
        return 0.0


class VoucherCost(CostSpec):
    """c = z * d: the subsidy is paid only on take-up."""

    kind = "voucher"

    def value(self, x, w, z, d):
        return np.asarray(z, dtype=float) * np.asarray(d, dtype=float)

    def derivative(self, x, w, z, d):
        return float(d)


class GeneralTableCost(CostSpec):
    """Arbitrary cost callable; the subsidy derivative is taken numerically."""

    kind = "general"

    def __init__(self, fn: Callable[[Key, Key, np.ndarray, np.ndarray], np.ndarray]):
        self.fn = fn

    def value(self, x, w, z, d):
        return self.fn(as_key(x), as_key(w), np.asarray(z, dtype=float), np.asarray(d, dtype=float))

    @classmethod
    def from_table(
        cls, z_points: Sequence[float], treated: Sequence[float], untreated: Sequence[float]
    ) -> "GeneralTableCost":
        z_points = np.asarray(z_points, dtype=float)
        treated = np.asarray(treated, dtype=float)
        untreated = np.asarray(untreated, dtype=float)
        if not (z_points.size == treated.size == untreated.size) or z_points.size < 2:
            raise ConfigError("cost table needs at least two z points with matching cost columns")
        if np.any(np.diff(z_points) <= 0):
            raise ConfigError("cost table z points must be strictly increasing")

        def fn(x, w, z, d):
            c1 = np.interp(z, z_points, treated)
            c0 = np.interp(z, z_points, untreated)
            return np.where(d == 1, c1, c0)

        return cls(fn)


# ---------------------------------------------------------------- analytic welfare


def takeup_under_rule(g: PropensityFn, rule: SubsidyRule, cell: Cell) -> float:
    """u = g(x, w, pi(x, w))."""
    z = rule.z_for(cell)
    g.check_domain(cell.x, cell.w, z)
    return float(g.evaluate(cell.x, cell.w, z))


def _cell_welfare(mte: MteCurve, g: PropensityFn, cost: CostSpec, rule: SubsidyRule, cell: Cell):
    z = rule.z_for(cell)
    u = takeup_under_rule(g, rule, cell)
    gross = mte.integral(cell.x, 0.0, u)
    paid = cost.expected(cell.x, cell.w, z, u)
    warning = None
    if mte.extrapolated(cell.x, 0.0, u):
        warning = f"{cell.key}: MTE extrapolated beyond its identified region on [0, {u:.6g}]"
    return CellWelfare(takeup=u, subsidy=z, gross=gross, cost=paid, net=gross - paid, weight=cell.weight), warning


def welfare_of_rule(
    mte: MteCurve,
    g: PropensityFn,
    cost: CostSpec,
    rule: SubsidyRule,
    baseline: Optional[float] = None,
) -> WelfareReport:
    """
    S(pi) = E[Y0] + E[int_0^u MTE(x, t) dt] - E[c1 u + c0 (1 - u)], per cell then weighted.

    Args:
        mte: Curve evaluable on [0, u] for every cell's induced take-up u.
        g: Propensity used to map the rule to take-ups.
        cost: Cost specification.
        rule: Cells, weights and subsidies.
        baseline: E[Y0] if known; otherwise `net` stays None.

    Returns:
        WelfareReport with the per-cell breakdown and extrapolation warnings.
    """
    with ThreadPoolExecutor(max_workers=settings.MAX_WORKERS) as pool:
        results = list(pool.map(lambda c: _cell_welfare(mte, g, cost, rule, c), rule.cells))

    per_cell = {}
    warnings = []
    gross = paid = 0.0
    for cell, (breakdown, warning) in zip(rule.cells, results):
        per_cell[cell.key] = breakdown
        gross += cell.weight * breakdown.gross
        paid += cell.weight * breakdown.cost
        if warning:
            logger.warning(warning)
            warnings.append(warning)

    net_above = gross - paid
    return WelfareReport(
        gross=gross,
        baseline=baseline,
        cost=paid,
        net_above_baseline=net_above,
        net=None if baseline is None else baseline + net_above,
        per_cell=per_cell,
        warnings=warnings,
    )


def baseline_from_params(params: SelectionParams, cells: Sequence[Cell]) -> float:
    """E[Y0] over the cell distribution of a normal model."""
    total = 0.0
    for cell in cells:
        row = np.concatenate([[1.0], as_key(cell.x)])
        total += cell.weight * float(row @ np.asarray(params.beta0))
    return total


# ---------------------------------------------------------------- Monte-Carlo oracle


def mc_oracle_summary(
    params: SelectionParams,
    cost: CostSpec,
    rule: SubsidyRule,
    n: int,
    seed: Optional[int] = None,
    batch_size: Optional[int] = None,
) -> MonteCarloSummary:
    """
    Brute-force S(pi): draw individuals, apply the rule's subsidy, realise D^pi and Y^pi
    and average Y^pi minus the realised cost.
    """
    if n < 1:
        raise DomainError("oracle needs n >= 1")
    batch_size = batch_size or settings.MC_BATCH_SIZE
    g = ProbitPropensity(params.betaD, params.gamma)
    weights = np.array([c.weight for c in rule.cells])
    beta1, beta0 = np.asarray(params.beta1), np.asarray(params.beta0)

    total = total_sq = 0.0
    batches = range(0, n, batch_size)
    for b, start in enumerate(tqdm(batches, desc="oracle", disable=not settings.SHOW_PROGRESS)):
        m = min(batch_size, n - start)
        rng = make_rng(seed, b)
        which = rng.choice(len(rule.cells), size=m, p=weights)
        shocks = draw_shocks(params, rng, m)
        outcome = np.empty(m)
        for j, cell in enumerate(rule.cells):
            sel = which == j
            if not sel.any():
                continue
            z = rule.z_for(cell)
            row = np.concatenate([[1.0], as_key(cell.x)])
            index = float(g.index(cell.x, (), z))
            d = (index + shocks[sel, 2] >= 0).astype(float)
            y = np.where(d == 1, row @ beta1 + shocks[sel, 0], row @ beta0 + shocks[sel, 1])
            outcome[sel] = y - np.asarray(cost.value(cell.x, cell.w, z, d), dtype=float)
        total += float(outcome.sum())
        total_sq += float(np.dot(outcome, outcome))

    mean = total / n
    variance = max(total_sq / n - mean * mean, 0.0)
    return MonteCarloSummary(mean=mean, std_error=float(np.sqrt(variance / n)), n=n)


def mc_oracle_welfare(
    params: SelectionParams, cost: CostSpec, rule: SubsidyRule, n: int, seed: Optional[int] = None
) -> float:
    return mc_oracle_summary(params, cost, rule, n, seed).mean
