from typing import Dict, List, Sequence, Union

import numpy as np

from app.exceptions import AssumptionError, DomainError
from app.helpers.curves import MteCurve, PropensityFn, monotone_grid
from app.schemas import Cell, Interval, ThresholdPolicy, WelfareLadder, format_key
from app.utils.log_utils import get_logger
from app.utils.numerics import find_root_bracketed

logger = get_logger("COMPARISON")

LADDER_SLACK = 1e-7
EDGE = 1e-12

ZRanges = Union[Interval, Dict[str, Interval]]


def _z_range(z_ranges: ZRanges, cell: Cell) -> Interval:
    if isinstance(z_ranges, dict):
        if cell.key not in z_ranges:
            raise DomainError(f"no subsidy range given for {cell.key}")
        return z_ranges[cell.key]
    return z_ranges


def merge_intervals(intervals: Sequence[Interval]) -> List[Interval]:
    merged: List[List[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(float(lo), float(hi)) for lo, hi in merged]


def takeup_interval(g: PropensityFn, cell: Cell, z_range: Interval) -> Interval:
    return float(g.evaluate(cell.x, cell.w, z_range[0])), float(g.evaluate(cell.x, cell.w, z_range[1]))


def identified_support(g: PropensityFn, cells: Sequence[Cell], z_ranges: ZRanges) -> Dict[str, List[Interval]]:
    """Per x-cell, the merged union over w of [g(x, w, z_min), g(x, w, z_max)]."""
    by_x: Dict[str, List[Interval]] = {}
    for cell in cells:
        by_x.setdefault(cell.x_key, []).append(takeup_interval(g, cell, _z_range(z_ranges, cell)))
    return {key: merge_intervals(parts) for key, parts in by_x.items()}


def mte_crossings(mte: MteCurve, x, lo: float = 0.0, hi: float = 1.0) -> List[float]:
    """
    Sign changes of MTE(x, .) on [lo, hi], located on a fine grid closed by both ends then polished.

    Ends at 0 or 1 are pulled in by EDGE so quantile-based curves stay finite.
    """
    a, b = max(lo, EDGE), min(hi, 1.0 - EDGE)
    if b <= a:
        return []
    inner = monotone_grid()
    grid = np.concatenate([[a], inner[(inner > a) & (inner < b)], [b]])
    values = np.asarray(mte.evaluate(x, grid), dtype=float)
    roots = grid[1:-1][values[1:-1] == 0.0].tolist()
    for i in np.flatnonzero(values[:-1] * values[1:] < 0):
        roots.append(find_root_bracketed(lambda t: float(mte.evaluate(x, t)), grid[i], grid[i + 1]))
    return sorted(roots)


def _running_integral(mte: MteCurve, x, support: Sequence[Interval], u: float) -> float:
    """F(u) = integral of MTE over [0, u] intersected with the support."""
    total = 0.0
    for lo, hi in support:
        if u > lo:
            total += mte.integral(x, lo, min(u, hi))
    return total


def first_best_policy(mte: MteCurve, x) -> ThresholdPolicy:
    """Treat iff U_D <= u*, where u* is the zero of the decreasing MTE (clipped to [0, 1])."""
    if not mte.verify_shape(x, "decreasing"):
        raise AssumptionError(f"first-best threshold needs a decreasing MTE at x={tuple(x)}")
    return ThresholdPolicy(u_star=mte.zero_crossing(x))


def welfare_ladder(
    mte: MteCurve,
    g: PropensityFn,
    x: Sequence[float],
    w_cells: Sequence[Cell],
    z_ranges: ZRanges,
) -> WelfareLadder:
    """
    Optimal welfare (cost omitted) of the four policy classes for one x-cell.

    Args:
        mte: Curve evaluable on the identified support.
        g: Propensity giving each w-cell's achievable take-up interval.
        x: The covariate cell.
        w_cells: Cells sharing `x`; their weights are renormalised.
        z_ranges: Subsidy range, one for all cells or keyed by cell.

    Returns:
        WelfareLadder with s_dir = s_con = max(0, int_S MTE), s_fb = int_S max(MTE, 0) and s_sub the
        weighted best running integral reachable in each w-cell.
    """
    x = tuple(float(v) for v in x)
    cells = [c for c in w_cells if tuple(c.x) == x]
    if not cells:
        raise DomainError(f"no w-cells for x={x}")
    total_weight = sum(c.weight for c in cells)
    if total_weight <= 0:
        raise DomainError(f"w-cell weights for x={x} must be positive")

    intervals = {c.key: takeup_interval(g, c, _z_range(z_ranges, c)) for c in cells}
    support = merge_intervals(list(intervals.values()))
    crossings = mte_crossings(mte, x)

    warnings = []
    for lo, hi in support:
        if mte.extrapolated(x, lo, hi):
            warnings.append(f"x={format_key(x)}: MTE extrapolated on support piece [{lo:.6g}, {hi:.6g}]")
    for message in warnings:
        logger.warning(message)

    s_dir = max(0.0, _running_integral(mte, x, support, 1.0))
    s_con = s_dir

    s_fb = 0.0
    for lo, hi in support:
        cuts = [lo] + [c for c in crossings if lo < c < hi] + [hi]
        for a, b in zip(cuts, cuts[1:]):
            s_fb += max(0.0, mte.integral(x, a, b))

    s_sub = 0.0
    for cell in cells:
        a, b = intervals[cell.key]
        reachable = [a, b] + [c for c in crossings if a < c < b]
        best = max(_running_integral(mte, x, support, u) for u in reachable)
        s_sub += cell.weight / total_weight * best

    threshold = None
    if mte.verify_shape(x, "decreasing"):
        threshold = mte.zero_crossing(x)
    attained = abs(s_sub - s_fb) <= LADDER_SLACK * max(1.0, abs(s_fb))
    ordering = s_dir <= s_sub + LADDER_SLACK * max(1.0, abs(s_sub)) and s_sub <= s_fb + LADDER_SLACK * max(
        1.0, abs(s_fb)
    )
    if not ordering:
        logger.warning("x=%s: ladder ordering does not hold (dir %.6g, sub %.6g, fb %.6g)", x, s_dir, s_sub, s_fb)

    return WelfareLadder(
        x_cell=format_key(x),
        s_sub=s_sub,
        s_dir=s_dir,
        s_con=s_con,
        s_fb=s_fb,
        identified_support=support,
        first_best_threshold=threshold,
        first_best_attained=attained,
        ordering_holds=ordering,
        warnings=warnings,
    )
