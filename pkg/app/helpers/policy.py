"""
Marginal benefit of subsidy and the optimal-subsidy solvers.

Every solver works on one (x, w) cell at a time; `solve_cells` maps a solver over
cells in a thread pool and reduces in cell order.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from app.config import settings
from app.exceptions import AssumptionError, CrossingError, DomainError, InvertibilityError, MissingCellError
from app.helpers.curves import MteCurve, PropensityFn
from app.helpers.welfare import CostSpec, VoucherCost, ZeroCost
from app.schemas import Cell, Interval, SolveResult, SubsidyRule
from app.utils.log_utils import get_logger
from app.utils.numerics import find_root_bracketed

logger = get_logger("SOLVER")

SOLVERS = ("auto", "positive", "negative", "general")


def lambda_eval(mte: MteCurve, g: PropensityFn, cell: Cell, z: float) -> float:
    """Voucher-cost marginal benefit: MTE(x, g) - z - g / (dg/dz)."""
    u = float(g.evaluate(cell.x, cell.w, z))
    slope = g.derivative(cell.x, cell.w, z)
    if slope <= 0:
        raise InvertibilityError(f"take-up is not increasing at z={z} in {cell.key}", {"derivative": slope})
    return float(mte.evaluate(cell.x, u)) - z - u / slope


def marginal_benefit(mte: MteCurve, g: PropensityFn, cost: CostSpec, cell: Cell, z: float) -> float:
    """
    First-order condition for a general cost, scaled by 1 / (dg/dz):

        MTE(x, u) - c1 + c0 - (u * dc1/dz + (1 - u) * dc0/dz) / (dg/dz)

    Reduces to `lambda_eval` for vouchers.
    """
    u = float(g.evaluate(cell.x, cell.w, z))
    slope = g.derivative(cell.x, cell.w, z)
    if slope <= 0:
        raise InvertibilityError(f"take-up is not increasing at z={z} in {cell.key}", {"derivative": slope})
    c1 = float(cost.value(cell.x, cell.w, z, 1))
    c0 = float(cost.value(cell.x, cell.w, z, 0))
    dc1 = cost.derivative(cell.x, cell.w, z, 1)
    dc0 = cost.derivative(cell.x, cell.w, z, 0)
    return float(mte.evaluate(cell.x, u)) - c1 + c0 - (u * dc1 + (1.0 - u) * dc0) / slope


def welfare_at(mte: MteCurve, g: PropensityFn, cost: CostSpec, cell: Cell, z: float) -> float:
    u = float(g.evaluate(cell.x, cell.w, z))
    return mte.integral(cell.x, 0.0, u) - cost.expected(cell.x, cell.w, z, u)


def _result(mte, g, cost, cell, z, kind, solver) -> SolveResult:
    return SolveResult(
        cell=cell.key,
        z_star=float(z),
        u_star=float(g.evaluate(cell.x, cell.w, z)),
        kind=kind,
        lambda_at_solution=marginal_benefit(mte, g, cost, cell, z),
        welfare_at_solution=welfare_at(mte, g, cost, cell, z),
        solver=solver,
    )


def _check_action_space(g: PropensityFn, cell: Cell, action_space: Interval) -> Tuple[float, float]:
    z_l, z_u = float(action_space[0]), float(action_space[1])
    if z_l > z_u:
        raise DomainError(f"action space [{z_l}, {z_u}] is empty")
    g.check_domain(cell.x, cell.w, [z_l, z_u])
    return z_l, z_u


def solve_positive_selection(
    mte: MteCurve,
    g: PropensityFn,
    cell: Cell,
    action_space: Interval,
    cost: Optional[CostSpec] = None,
) -> SolveResult:
    """
    Three-case rule for a decreasing MTE, a concave take-up and voucher cost.

    Lambda(z_l) <= 0 gives the low corner, Lambda(z_u) >= 0 the high corner (boundary-stationary
    ties go to the corner), otherwise the unique root of Lambda is interior.

    Raises:
        AssumptionError: cost is not a voucher, the curve is not decreasing, or g is not concave.
    """
    cost = cost or VoucherCost()
    if cost.kind != "voucher":
        raise AssumptionError("positive-selection rule applies to voucher cost only")
    if mte.shape != "decreasing" or not mte.verify_shape(cell.x, "decreasing"):
        raise AssumptionError(f"MTE is not verified decreasing in {cell.key}")
    z_l, z_u = _check_action_space(g, cell, action_space)
    if z_l == z_u:
        return _result(mte, g, cost, cell, z_l, "corner_low", "positive_selection")
    if not g.is_concave(cell.x, cell.w, z_l, z_u):
        raise AssumptionError(f"take-up is not concave in z on [{z_l}, {z_u}] for {cell.key}")

    tol = settings.ROOT_TOL * mte.scale(cell.x)
    lam_l = lambda_eval(mte, g, cell, z_l)
    lam_u = lambda_eval(mte, g, cell, z_u)
    if lam_l <= tol:
        kind, z_star = "corner_low", z_l
    elif lam_u >= -tol:
        kind, z_star = "corner_high", z_u
    else:
        kind = "interior"
        z_star = find_root_bracketed(
            lambda t: lambda_eval(mte, g, cell, t), z_l, z_u, tol=1e-12 * max(1.0, z_u - z_l)
        )
    logger.info("%s: %s at z=%.6g (Lambda(z_l)=%.6g, Lambda(z_u)=%.6g)", cell.key, kind, z_star, lam_l, lam_u)
    return _result(mte, g, cost, cell, z_star, kind, "positive_selection")


def solve_negative_selection(
    mte: MteCurve,
    g: PropensityFn,
    cell: Cell,
    action_space: Interval,
    cost: Optional[CostSpec] = None,
) -> SolveResult:
    """Increasing MTE with zero cost: z_l iff the MTE integral over [g(z_l), g(z_u)] is <= 0, else z_u."""
    cost = cost or ZeroCost()
    if cost.kind != "zero":
        raise AssumptionError("negative-selection rule requires zero cost")
    if mte.shape != "increasing" or not mte.verify_shape(cell.x, "increasing"):
        raise AssumptionError(f"MTE is not verified increasing in {cell.key}")
    z_l, z_u = _check_action_space(g, cell, action_space)
    u_l = float(g.evaluate(cell.x, cell.w, z_l))
    u_u = float(g.evaluate(cell.x, cell.w, z_u))
    gain = mte.integral(cell.x, u_l, u_u)
    tol = settings.QUAD_TOL * mte.scale(cell.x)
    if gain <= tol:
        return _result(mte, g, cost, cell, z_l, "corner_low", "negative_selection")
    return _result(mte, g, cost, cell, z_u, "corner_high", "negative_selection")


def _classify(z: float, z_l: float, z_u: float) -> str:
    slack = 1e-9 * max(1.0, z_u - z_l)
    if z - z_l <= slack:
        return "corner_low"
    if z_u - z <= slack:
        return "corner_high"
    return "interior"


def solve_general(
    mte: MteCurve,
    g: PropensityFn,
    cost: CostSpec,
    cell: Cell,
    action_space: Interval,
    grid_n: Optional[int] = None,
) -> SolveResult:
    """
    Global search: endpoints, polished sign changes of the marginal benefit and a refined
    grid argmax are compared by welfare; the best candidate wins (lower z on ties).
    """
    grid_n = grid_n or settings.SOLVER_GRID_N
    if grid_n < 64:
        raise DomainError("solve_general needs grid_n >= 64")
    z_l, z_u = _check_action_space(g, cell, action_space)
    if z_l == z_u:
        return _result(mte, g, cost, cell, z_l, "corner_low", "general")

    zs = np.linspace(z_l, z_u, grid_n)
    welfare = np.array([welfare_at(mte, g, cost, cell, z) for z in zs])
    benefit = np.array([marginal_benefit(mte, g, cost, cell, z) for z in zs])

    candidates: List[float] = [z_l, z_u]
    candidates.extend(zs[benefit == 0.0].tolist())
    for i in np.flatnonzero(benefit[:-1] * benefit[1:] < 0):
        candidates.append(
            find_root_bracketed(lambda t: marginal_benefit(mte, g, cost, cell, t), zs[i], zs[i + 1])
        )
    best = int(np.argmax(welfare))
    lo, hi = zs[max(best - 1, 0)], zs[min(best + 1, grid_n - 1)]
    refined = optimize.minimize_scalar(
        lambda t: -welfare_at(mte, g, cost, cell, t),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 * max(1.0, z_u - z_l)},
    )
    candidates.extend([float(zs[best]), float(refined.x)])

    scored = sorted((-welfare_at(mte, g, cost, cell, z), z) for z in set(candidates))
    z_star = scored[0][1]
    kind = _classify(z_star, z_l, z_u)
    if kind == "corner_low":
        z_star = z_l
    elif kind == "corner_high":
        z_star = z_u
    logger.info("%s: %s at z=%.6g among %d candidates", cell.key, kind, z_star, len(scored))
    return _result(mte, g, cost, cell, z_star, kind, "general")


def bound_optimal(
    mte: MteCurve,
    g: PropensityFn,
    cell: Cell,
    probes: Sequence[float],
    action_space: Interval,
) -> Tuple[float, float]:
    """
    Bracket the optimal subsidy from the sign of Lambda at the queried subsidies.

    Lambda >= 0 at z means the optimum is at least z; Lambda <= 0 means at most z. Queried subsidies whose
    take-up falls where the curve is extrapolated are skipped.

    Raises:
        CrossingError: Lambda increases between queried subsidies, or the bounds cross.
    """
    z_l, z_u = float(action_space[0]), float(action_space[1])
    evaluated = []
    for z in sorted(float(p) for p in probes):
        if z < z_l or z > z_u:
            raise DomainError(f"queried subsidy {z} outside the action space [{z_l}, {z_u}]")
        u = float(g.evaluate(cell.x, cell.w, z))
        if mte.extrapolated(cell.x, u, u):
            logger.warning("%s: query z=%.6g skipped, MTE not identified at u=%.6g", cell.key, z, u)
            continue
        evaluated.append((z, lambda_eval(mte, g, cell, z)))

    tol = settings.ROOT_TOL * mte.scale(cell.x)
    for (z_a, lam_a), (z_b, lam_b) in zip(evaluated, evaluated[1:]):
        if lam_b > lam_a + tol:
            raise CrossingError(
                f"Lambda increases from {lam_a:.6g} at z={z_a} to {lam_b:.6g} at z={z_b}",
                {"z": [z_a, z_b], "lambda": [lam_a, lam_b]},
            )

    lower = max([z for z, lam in evaluated if lam >= 0] + [z_l])
    upper = min([z for z, lam in evaluated if lam <= 0] + [z_u])
    if lower > upper:
        raise CrossingError(f"bounds cross: lower {lower} > upper {upper}")
    return lower, upper


def optimal_subsidy_from_takeup(mte: MteCurve, g: PropensityFn, cell: Cell, action_space: Interval) -> SolveResult:
    """Zero-cost rule: invert g at the MTE root u*, clipped to the action space."""
    z_l, z_u = _check_action_space(g, cell, action_space)
    u_star = mte.zero_crossing(cell.x)
    z = g.inverse(cell.x, cell.w, u_star, z_l, z_u)
    return _result(mte, g, ZeroCost(), cell, z, _classify(z, z_l, z_u), "takeup_inversion")


def assemble_rule(
    results: Dict[str, SolveResult],
    cells: Sequence[Cell],
    action_space: Interval,
    name: Optional[str] = None,
) -> SubsidyRule:
    missing = [cell.key for cell in cells if cell.key not in results]
    if missing:
        raise MissingCellError(f"no solution for cells: {', '.join(missing)}", {"cells": missing})
    return SubsidyRule(
        cells=list(cells),
        assignment=[results[cell.key].z_star for cell in cells],
        action_space=action_space,
        name=name,
    )


def pick_solver(mte: MteCurve, cost: CostSpec) -> str:
    """
    Solver implied by the declared MTE shape and the cost kind.

    An increasing MTE always maps to the negative-selection rule, which rejects
    any cost other than zero; only `fallback` turns that into a global search.
    """
    if cost.kind == "voucher" and mte.shape == "decreasing":
        return "positive"
    if mte.shape == "increasing":
        return "negative"
    return "general"


def solve_cell(
    mte: MteCurve,
    g: PropensityFn,
    cost: CostSpec,
    cell: Cell,
    action_space: Interval,
    solver: str = "auto",
    fallback: bool = False,
    grid_n: Optional[int] = None,
) -> SolveResult:
    if solver not in SOLVERS:
        raise DomainError(f"unknown solver {solver!r}; expected one of {', '.join(SOLVERS)}")
    chosen = pick_solver(mte, cost) if solver == "auto" else solver
    try:
        if chosen == "positive":
            return solve_positive_selection(mte, g, cell, action_space, cost)
        if chosen == "negative":
            return solve_negative_selection(mte, g, cell, action_space, cost)
    except AssumptionError as exc:
        if not fallback:
            raise
        logger.warning("%s: %s; falling back to the global solver", cell.key, exc.message)
    return solve_general(mte, g, cost, cell, action_space, grid_n)


def solve_cells(
    mte: MteCurve,
    g: PropensityFn,
    cost: CostSpec,
    cells: Sequence[Cell],
    action_space: Interval,
    solver: str = "auto",
    fallback: bool = False,
    grid_n: Optional[int] = None,
) -> Dict[str, SolveResult]:
    """Solve every cell independently; results keep the order of `cells`."""
    with ThreadPoolExecutor(max_workers=settings.MAX_WORKERS) as pool:
        results = list(
            pool.map(lambda c: solve_cell(mte, g, cost, c, action_space, solver, fallback, grid_n), cells)
        )
    return {cell.key: result for cell, result in zip(cells, results)}
