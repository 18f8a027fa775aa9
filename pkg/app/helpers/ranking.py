"""
Partial welfare ranking of subsidy rules when the MTE is only set-identified.

The MTE is represented by its values m at knots of a u-grid on [0, 1] and interpolated
linearly between them. For two rules A and B the gross welfare difference is the linear
functional <F_B - F_A, m>; rank_pair bounds it over the identified set by two LPs.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from tqdm import tqdm

from app.config import settings
from app.exceptions import DomainError, EmptySetError, InfeasibleError
from app.helpers.curves import MteCurve, PropensityFn, as_key
from app.helpers.welfare import CostSpec, ZeroCost
from app.schemas import Cell, PartialOrder, RankVerdict, SubsidyRule, format_key
from app.utils.log_utils import get_logger
from app.utils.numerics import lp_min_linear

logger = get_logger("RANKING")

SHAPES = ("none", "decreasing", "increasing")


@dataclass
class IdentifiedMteSet:
    """
    MTE curves on `u_grid` that match `pinned` knot values, respect `shape` and stay in the
    box `bounds` at unpinned knots.
    """

    u_grid: np.ndarray
    pinned: Dict[int, float] = field(default_factory=dict)
    shape: str = "none"
    bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.u_grid = np.asarray(self.u_grid, dtype=float)
        if self.u_grid.ndim != 1 or self.u_grid.size < 2 or np.any(np.diff(self.u_grid) <= 0):
            raise DomainError("u_grid must be strictly increasing with at least two knots")
        if abs(self.u_grid[0]) > 1e-12 or abs(self.u_grid[-1] - 1.0) > 1e-12:
            raise DomainError("u_grid must start at 0 and end at 1")
        if self.shape not in SHAPES:
            raise DomainError(f"shape must be one of {', '.join(SHAPES)}")
        self.pinned = {int(k): float(v) for k, v in self.pinned.items()}
        bad = [k for k in self.pinned if not 0 <= k < self.u_grid.size]
        if bad:
            raise DomainError(f"pinned knot indices out of range: {bad}")
        if self.bounds is not None and self.bounds[0] > self.bounds[1]:
            raise DomainError("bounds must satisfy m_lo <= m_hi")

    @property
    def size(self) -> int:
        return int(self.u_grid.size)

    def effective_bounds(self) -> Tuple[float, float]:
        if self.bounds is not None:
            return float(self.bounds[0]), float(self.bounds[1])
        scale = 10.0 * max((abs(v) for v in self.pinned.values()), default=0.0)
        scale = scale if scale > 0 else 1.0
        return -scale, scale

    def constraints(self, offset: int = 0, width: Optional[int] = None):
        """(equalities, inequalities, bounds) rows over a vector of `width` variables starting at `offset`."""
        width = width or self.size
        equalities, inequalities = [], []
        for k, value in sorted(self.pinned.items()):
            row = np.zeros(width)
            row[offset + k] = 1.0
            equalities.append((row, value))
        if self.shape != "none":
            sign = 1.0 if self.shape == "decreasing" else -1.0
            for k in range(self.size - 1):
                row = np.zeros(width)
                row[offset + k + 1] = sign
                row[offset + k] = -sign
                inequalities.append((row, 0.0))
        lo, hi = self.effective_bounds()
        bounds = [(None, None) if k in self.pinned else (lo, hi) for k in range(self.size)]
        return equalities, inequalities, bounds

    def is_nonempty(self) -> bool:
        equalities, inequalities, bounds = self.constraints()
        try:
            lp_min_linear(np.zeros(self.size), equalities, inequalities, bounds)
        except InfeasibleError:
            return False
        return True

    def require_nonempty(self) -> None:
        if self.is_nonempty():
            return
        reason = "pinned values violate the box bounds"
        pins = [v for _, v in sorted(self.pinned.items())]
        if self.shape == "decreasing" and np.any(np.diff(pins) > 0):
            reason = "pinned values are not decreasing"
        elif self.shape == "increasing" and np.any(np.diff(pins) < 0):
            reason = "pinned values are not increasing"
        raise EmptySetError(f"identified MTE set is empty: {reason}", {"pinned": self.pinned})

    def contains(self, values: Sequence[float], tol: float = 1e-9) -> bool:
        m = np.asarray(values, dtype=float)
        if m.size != self.size:
            return False
        if any(abs(m[k] - v) > tol for k, v in self.pinned.items()):
            return False
        lo, hi = self.effective_bounds()
        free = np.array([k not in self.pinned for k in range(self.size)])
        if np.any(m[free] < lo - tol) or np.any(m[free] > hi + tol):
            return False
        steps = np.diff(m)
        if self.shape == "decreasing" and np.any(steps > tol):
            return False
        if self.shape == "increasing" and np.any(steps < -tol):
            return False
        return True

    @classmethod
    def from_curve(
        cls,
        curve: MteCurve,
        x: Sequence[float],
        u_grid: Sequence[float],
        shape: str = "none",
        bounds: Optional[Tuple[float, float]] = None,
        region: Optional[Sequence[Tuple[float, float]]] = None,
    ) -> "IdentifiedMteSet":
        """
        Pin the knots where `curve` is identified: inside `region` when given, otherwise where
        the curve reports no extrapolation.
        """
        u_grid = np.asarray(u_grid, dtype=float)
        pinned = {}
        for k, u in enumerate(u_grid):
            if region is not None:
                inside = any(lo - 1e-12 <= u <= hi + 1e-12 for lo, hi in region)
            else:
                inside = not curve.extrapolated(x, u, u)
            if inside and 0.0 < u < 1.0:
                pinned[k] = float(curve.evaluate(x, u))
        return cls(u_grid=u_grid, pinned=pinned, shape=shape, bounds=bounds)


def hat_cumulative(u_grid: np.ndarray, t: float) -> np.ndarray:
    """Integral over [0, t] of each piecewise-linear hat basis function on `u_grid`."""
    u = np.asarray(u_grid, dtype=float)
    out = np.zeros(u.size)
    left = u[1:] - u[:-1]
    s = np.clip(t, u[:-1], u[1:])
    # rising half of knot k+1 on [u_k, u_{k+1}]
    out[1:] += (s - u[:-1]) ** 2 / (2.0 * left)
    # falling half of knot k on [u_k, u_{k+1}]
    out[:-1] += left / 2.0 - (u[1:] - s) ** 2 / (2.0 * left)
    return out


def induced_cdf(g: PropensityFn, rule: SubsidyRule, x: Sequence[float], u_grid: Sequence[float]) -> np.ndarray:
    """F(u) = P(g(x, W, pi(x, W)) <= u | X = x) at each grid point."""
    u_grid = np.asarray(u_grid, dtype=float)
    cells = [c for c in rule.cells if as_key(c.x) == as_key(x)]
    if not cells:
        raise DomainError(f"rule has no cells at x={format_key(as_key(x))}")
    total = sum(c.weight for c in cells)
    cdf = np.zeros(u_grid.size)
    for cell, z in zip(rule.cells, rule.assignment):
        if as_key(cell.x) != as_key(x):
            continue
        takeup = float(g.evaluate(cell.x, cell.w, z))
        cdf += (cell.weight / total) * (takeup <= u_grid)
    return cdf


MteSets = Union[IdentifiedMteSet, Dict[str, IdentifiedMteSet]]


def _blocks(sets: MteSets, cells: Sequence[Cell]):
    """Variable layout: one block per distinct set; cells at x map to the block of their set."""
    if isinstance(sets, IdentifiedMteSet):
        return [sets], {cell.x_key: 0 for cell in cells}
    ordered, index, where = [], {}, {}
    for cell in cells:
        if cell.x_key not in sets:
            raise DomainError(f"no identified MTE set for x-cell {cell.x_key}")
        member = sets[cell.x_key]
        if id(member) not in index:
            index[id(member)] = len(ordered)
            ordered.append(member)
        where[cell.x_key] = index[id(member)]
    return ordered, where


def _check_same_population(rule_a: SubsidyRule, rule_b: SubsidyRule) -> None:
    a = {c.key: c.weight for c in rule_a.cells}
    b = {c.key: c.weight for c in rule_b.cells}
    if a.keys() != b.keys() or any(abs(a[k] - b[k]) > 1e-12 for k in a):
        raise DomainError("rules must be defined on the same cells with the same weights")


def rank_pair(
    sets: MteSets,
    g: PropensityFn,
    rule_a: SubsidyRule,
    rule_b: SubsidyRule,
    cost: Optional[CostSpec] = None,
    names: Tuple[str, str] = ("A", "B"),
) -> RankVerdict:
    """
    Compare A and B over every MTE in the identified set.

    S(A) - S(B) = <F_B - F_A, m> - (C_A - C_B). With v_min and v_max its extremes over the set,
    v_min >= -tol means A is weakly better, v_max <= tol means B is; neither yields two
    member curves as certificates of the opposite orderings.

    Raises:
        EmptySetError: the identified set has no member.
    """
    cost = cost or ZeroCost()
    _check_same_population(rule_a, rule_b)
    blocks, where = _blocks(sets, rule_a.cells)
    offsets = np.cumsum([0] + [b.size for b in blocks])
    width = int(offsets[-1])

    equalities, inequalities, bounds = [], [], []
    for block, offset in zip(blocks, offsets[:-1]):
        block.require_nonempty()
        eq, ineq, bd = block.constraints(int(offset), width)
        equalities += eq
        inequalities += ineq
        bounds += bd

    functional = np.zeros(width)
    cost_offset = 0.0
    for cell, z_a in zip(rule_a.cells, rule_a.assignment):
        z_b = rule_b.z_for(cell)
        block = where[cell.x_key]
        start = int(offsets[block])
        grid = blocks[block].u_grid
        u_a = float(g.evaluate(cell.x, cell.w, z_a))
        u_b = float(g.evaluate(cell.x, cell.w, z_b))
        functional[start : start + grid.size] += cell.weight * (hat_cumulative(grid, u_a) - hat_cumulative(grid, u_b))
        cost_offset += cell.weight * (
            cost.expected(cell.x, cell.w, z_a, u_a) - cost.expected(cell.x, cell.w, z_b, u_b)
        )

    low, m_min = lp_min_linear(functional, equalities, inequalities, bounds)
    neg_high, m_max = lp_min_linear(-functional, equalities, inequalities, bounds)
    v_min, v_max = low - cost_offset, -neg_high - cost_offset

    box = [b.effective_bounds() for b in blocks]
    scale = max(max(abs(lo), abs(hi)) for lo, hi in box)
    tol = settings.LP_TOL * max(1.0, scale)
    left = v_min >= -tol
    right = v_max <= tol
    certificates = None
    if left and right:
        verdict = "equivalent"
    elif left:
        verdict = "left_weakly_better"
    elif right:
        verdict = "right_weakly_better"
    else:
        verdict = "incomparable"
        certificates = {"min_curve": m_min.tolist(), "max_curve": m_max.tolist()}
    logger.info("%s vs %s: %s (v_min=%.6g, v_max=%.6g)", names[0], names[1], verdict, v_min, v_max)
    return RankVerdict(
        pair=names,
        verdict=verdict,
        v_min=v_min,
        v_max=v_max,
        tol=tol,
        bounds={x_key: box[block] for x_key, block in where.items()},
        cost_offset=cost_offset,
        certificates=certificates,
    )


def certificate_value(
    sets: MteSets, g: PropensityFn, rule_a: SubsidyRule, rule_b: SubsidyRule, curve: Sequence[float]
) -> float:
    """<F_B - F_A, m> for a stacked knot vector `curve`, recomputed independently of the LP."""
    blocks, where = _blocks(sets, rule_a.cells)
    offsets = np.cumsum([0] + [b.size for b in blocks])
    m = np.asarray(curve, dtype=float)
    total = 0.0
    for cell, z_a in zip(rule_a.cells, rule_a.assignment):
        block = where[cell.x_key]
        grid = blocks[block].u_grid
        values = m[int(offsets[block]) : int(offsets[block]) + grid.size]
        for z, sign in ((z_a, 1.0), (rule_b.z_for(cell), -1.0)):
            u = float(g.evaluate(cell.x, cell.w, z))
            if u <= 0:
                continue
            knots = np.concatenate([grid[grid < u], [u]])
            total += sign * cell.weight * float(integrate.trapezoid(np.interp(knots, grid, values), knots))
    return total


def _rule_names(rules: Sequence[SubsidyRule]) -> List[str]:
    return [rule.name or f"rule{i + 1}" for i, rule in enumerate(rules)]


def rank_list(
    sets: MteSets,
    g: PropensityFn,
    rules: Sequence[SubsidyRule],
    cost: Optional[CostSpec] = None,
) -> PartialOrder:
    """Pairwise verdicts reduced to Hasse edges (better -> worse), plus equivalent and incomparable pairs."""
    if not rules:
        raise DomainError("rank_list needs at least one rule")
    names = _rule_names(rules)
    pairs = list(combinations(range(len(rules)), 2))

    def compare(pair):
        i, j = pair
        return rank_pair(sets, g, rules[i], rules[j], cost, (names[i], names[j]))

    with ThreadPoolExecutor(max_workers=settings.MAX_WORKERS) as pool:
        verdicts = list(
            tqdm(pool.map(compare, pairs), total=len(pairs), desc="ranking", disable=not settings.SHOW_PROGRESS)
        )

    strict = set()
    equivalent, incomparable = [], []
    for (i, j), verdict in zip(pairs, verdicts):
        if verdict.verdict == "left_weakly_better":
            strict.add((i, j))
        elif verdict.verdict == "right_weakly_better":
            strict.add((j, i))
        elif verdict.verdict == "equivalent":
            equivalent.append((names[i], names[j]))
        else:
            incomparable.append((names[i], names[j]))

    reduced = sorted(
        (a, c) for a, c in strict if not any((a, b) in strict and (b, c) in strict for b in range(len(rules)))
    )
    edges = [(names[a], names[c]) for a, c in reduced]
    return PartialOrder(
        rules=names, edges=edges, equivalent=equivalent, incomparable=incomparable, verdicts=verdicts
    )


def to_dot(order: PartialOrder) -> str:
    lines = ["digraph ranking {", "  rankdir=TB;"]
    lines += [f'  "{name}";' for name in order.rules]
    lines += [f'  "{a}" -> "{b}";' for a, b in order.edges]
    lines += [f'  "{a}" -> "{b}" [dir=none, style=dashed, label="equivalent"];' for a, b in order.equivalent]
    lines += [f'  "{a}" -> "{b}" [dir=none, style=dotted, color=gray, label="incomparable"];' for a, b in order.incomparable]
    lines.append("}")
    return "\n".join(lines) + "\n"
