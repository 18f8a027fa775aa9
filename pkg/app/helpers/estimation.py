"""
Estimators that turn a Dataset into propensity and MTE objects.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from scipy import optimize, special

from app.exceptions import (
    AssumptionError,
    ComputationError,
    DomainError,
    InsufficientDataError,
    OffSupportError,
    RankDeficiencyError,
)
from app.helpers.curves import GridCurveMte, NormalParametricMte, PolyLambdaPrimeMte, ProbitPropensity, PropensityFn
from app.helpers.dataset import Dataset
from app.helpers.welfare import CostSpec
from app.schemas import HeckmanFit, SelectionParams, SemiparametricFit, SubsidyRule
from app.utils.log_utils import get_logger
from app.utils.numerics import Grid, ols_fit, probit_fit

logger = get_logger("ESTIMATION")

MILLS_CUTOFF = 1e-12
LIV_MIN_CELL = 500
LIV_MIN_NEIGHBORS = 30


def fit_choice_probit(data: Dataset) -> ProbitPropensity:
    """Probit of d on [1, x, w, z]; warns when the subsidy coefficient is not positive."""
    design = np.hstack([np.ones((data.n, 1)), data.x, data.w, data.z[:, None]])
    beta = probit_fit(design, data.d)
    k, m = data.k, data.m
    propensity = ProbitPropensity(beta[: 1 + k], beta[-1], beta[1 + k : 1 + k + m])
    if propensity.gamma <= 0:
        message = f"subsidy coefficient {propensity.gamma:.6g} is not positive; take-up is not invertible in z"
        logger.warning(message)
        propensity.warnings.append(message)
    logger.info("probit choice equation: %s", np.array2string(beta, precision=6))
    return propensity


def _choice_index(propensity: ProbitPropensity, data: Dataset) -> np.ndarray:
    return (
        propensity.beta_d[0]
        + data.x @ propensity.beta_d[1:]
        + data.w @ propensity.beta_w
        + propensity.gamma * data.z
    )


def heckman_two_step(data: Dataset, propensity: Optional[ProbitPropensity] = None) -> HeckmanFit:
    """
    Heckman two-step for both outcome equations.

    Step 1 is the probit choice equation. Step 2 regresses y on [1, x, mills] separately by
    treatment arm, with mills = phi/Phi for d=1 and -phi/(1-Phi) for d=0. The Mills coefficients
    are rho1*sigma1 and rho0*sigma0; each sigma comes from the residual variance plus the
    truncation correction b^2 * mean(mills * (mills + index)).
    """
    propensity = propensity or fit_choice_probit(data)
    index = _choice_index(propensity, data)
    log_pdf = -0.5 * index * index - 0.5 * np.log(2.0 * np.pi)
    log_cdf = special.log_ndtr(index)
    log_sf = special.log_ndtr(-index)

    warnings: List[str] = list(propensity.warnings)
    clipped: List[str] = []
    outcome = {}
    excluded = {}
    for arm in (1, 0):
        in_arm = data.d == arm
        log_mass = log_cdf if arm == 1 else log_sf
        usable = in_arm & (log_mass > np.log(MILLS_CUTOFF))
        excluded[arm] = int(in_arm.sum() - usable.sum())
        if excluded[arm]:
            message = f"excluded {excluded[arm]} d={arm} records with selection probability below {MILLS_CUTOFF:g}"
            logger.warning(message)
            warnings.append(message)
        mills = np.exp(log_pdf[usable] - log_mass[usable])
        if arm == 0:
            mills = -mills
        design = np.hstack([np.ones((usable.sum(), 1)), data.x[usable], mills[:, None]])
        coef = ols_fit(design, data.y[usable])
        beta, b = coef[:-1], float(coef[-1])
        resid = data.y[usable] - design @ coef
        correction = float(np.mean(mills * (mills + index[usable])))
        sigma_sq = float(np.mean(resid * resid)) + b * b * correction
        if sigma_sq <= 0:
            raise ComputationError(f"recovered outcome variance for d={arm} is not positive", {"sigma_sq": sigma_sq})
        sigma = float(np.sqrt(sigma_sq))
        rho = b / sigma
        if abs(rho) > 1:
            message = f"rho{arm} estimate {rho:.6g} clipped to [-1, 1]"
            logger.warning(message)
            clipped.append(f"rho{arm}")
            warnings.append(message)
            rho = float(np.clip(rho, -1.0, 1.0))
        outcome[arm] = (beta, b, sigma, rho)

    beta1, b1, sigma1, rho1 = outcome[1]
    beta0, b0, sigma0, rho0 = outcome[0]
    logger.info("Heckman two-step: rho1*sigma1=%.6g, rho0*sigma0=%.6g, n=%d", b1, b0, data.n)
    return HeckmanFit(
        betaD_hat=propensity.beta_d.tolist(),
        betaW_hat=propensity.beta_w.tolist(),
        gamma_hat=propensity.gamma,
        beta1_hat=beta1.tolist(),
        beta0_hat=beta0.tolist(),
        rho1_sigma1=b1,
        rho0_sigma0=b0,
        rho1_hat=rho1,
        rho0_hat=rho0,
        sigma1_hat=sigma1,
        sigma0_hat=sigma0,
        n=data.n,
        excluded_treated=excluded[1],
        excluded_untreated=excluded[0],
        clipped=clipped,
        warnings=warnings,
    )


def mte_from_heckman(fit: HeckmanFit) -> NormalParametricMte:
    """Decreasing when rho1*sigma1 - rho0*sigma0 > 0, increasing when < 0, flat otherwise."""
    level = np.asarray(fit.beta1_hat) - np.asarray(fit.beta0_hat)
    slope = fit.rho1_hat * fit.sigma1_hat - fit.rho0_hat * fit.sigma0_hat
    curve = NormalParametricMte(level, slope)
    if curve.shape == "increasing":
        logger.info("fitted MTE is increasing in u: negative selection on gains")
    return curve


def params_from_heckman(fit: HeckmanFit) -> SelectionParams:
    """SelectionParams for the fitted model; rho01 is not identified and set to 0."""
    if fit.betaW_hat:
        raise DomainError("instrument coefficients in the choice equation have no SelectionParams counterpart")
    try:
        return SelectionParams(
            beta1=fit.beta1_hat,
            beta0=fit.beta0_hat,
            betaD=fit.betaD_hat,
            gamma=fit.gamma_hat,
            sigma1=fit.sigma1_hat,
            sigma0=fit.sigma0_hat,
            rho1=fit.rho1_hat,
            rho0=fit.rho0_hat,
            rho01=0.0,
        )
    except ValidationError as exc:
        raise AssumptionError(f"fitted parameters are not a valid selection model: {exc.errors()[0]['msg']}")


def semiparametric_two_stage(
    data: Dataset, degree: int = 3, propensity: Optional[PropensityFn] = None
) -> SemiparametricFit:
    """
    Least squares of y on [1, x, P, x*P, P^2, ..., P^degree] with P the fitted propensity.

    The constant and linear terms of the selection polynomial are absorbed by the intercept
    and the P block, so only powers 2..degree are free.
    """
    if not 2 <= degree <= 5:
        raise DomainError(f"polynomial degree must be in [2, 5], got {degree}")
    propensity = propensity or fit_choice_probit(data)
    p = propensity.evaluate_rows(data.x, data.w, data.z)
    base = np.hstack([np.ones((data.n, 1)), data.x])
    powers = np.column_stack([p**j for j in range(2, degree + 1)])
    design = np.hstack([base, base * p[:, None], powers])
    try:
        coef = ols_fit(design, data.y)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            f"propensity polynomial is collinear with the covariates (column {exc.column})", column=exc.column
        )
    width = base.shape[1]
    beta0 = coef[:width]
    beta1 = beta0 + coef[width : 2 * width]
    theta = [0.0, 0.0] + coef[2 * width :].tolist()
    propensity_beta: List[float] = []
    if isinstance(propensity, ProbitPropensity):
        propensity_beta = propensity.beta_d.tolist() + propensity.beta_w.tolist() + [propensity.gamma]
    return SemiparametricFit(
        beta1_hat=beta1.tolist(),
        beta0_hat=beta0.tolist(),
        theta_hat=theta,
        degree=degree,
        propensity_beta=propensity_beta,
    )


def mte_from_semiparametric(fit: SemiparametricFit) -> PolyLambdaPrimeMte:
    level = np.asarray(fit.beta1_hat) - np.asarray(fit.beta0_hat)
    # d/du of sum_j theta_j u^j, j >= 2
    lambda_prime = [0.0] + [j * fit.theta_hat[j] for j in range(2, fit.degree + 1)]
    return PolyLambdaPrimeMte(level, lambda_prime)


def default_bandwidth(p: np.ndarray) -> float:
    return float(1.06 * np.std(p) * p.size ** (-0.2))


def liv_estimate(
    data: Dataset,
    g: PropensityFn,
    u_grid: Sequence[float],
    bandwidth: Optional[float] = None,
    min_cell: int = LIV_MIN_CELL,
    min_neighbors: int = LIV_MIN_NEIGHBORS,
) -> GridCurveMte:
    """
    Local-linear derivative of E[Y | X = x, P = p] in p, per x-cell, at each grid point.

    Epanechnikov weights; a knot is identified when at least `min_neighbors` records lie within
    one bandwidth and their propensities vary. Knots outside the mask take values interpolated
    from identified ones.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if bandwidth is not None and bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    p_all = g.evaluate_rows(data.x, data.w, data.z)

    grids: Dict[tuple, Grid] = {}
    masks: Dict[tuple, np.ndarray] = {}
    bandwidths: Dict[str, float] = {}
    warnings: List[str] = []
    for cell in data.x_cells():
        rows = data.cell_mask(cell)
        if rows.sum() < min_cell:
            raise InsufficientDataError(
                f"x-cell {cell} has {int(rows.sum())} records; LIV needs at least {min_cell}",
                {"cell": list(cell), "records": int(rows.sum())},
            )
        order = np.argsort(p_all[rows], kind="stable")
        p = p_all[rows][order]
        y = data.y[rows][order]
        h = bandwidth if bandwidth is not None else default_bandwidth(p)
        if h <= 0:
            raise InsufficientDataError(f"propensity has no spread in x-cell {cell}")
        bandwidths[str(cell)] = h

        values = np.zeros(u_grid.size)
        mask = np.zeros(u_grid.size, dtype=bool)
        for i, u in enumerate(u_grid):
            lo = np.searchsorted(p, u - h, side="left")
            hi = np.searchsorted(p, u + h, side="right")
            if hi - lo < min_neighbors:
                continue
            t = (p[lo:hi] - u) / h
            k = 0.75 * (1.0 - t * t)
            k_sum = k.sum()
            p_bar = np.dot(k, p[lo:hi]) / k_sum
            y_bar = np.dot(k, y[lo:hi]) / k_sum
            spread = np.dot(k, (p[lo:hi] - p_bar) ** 2)
            if spread <= 1e-14 * k_sum:
                continue
            values[i] = np.dot(k, (p[lo:hi] - p_bar) * (y[lo:hi] - y_bar)) / spread
            mask[i] = True

        if not mask.any():
            message = f"x-cell {cell}: no grid point has enough propensity variation; MTE unidentified"
            logger.warning(message)
            warnings.append(message)
        else:
            values[~mask] = np.interp(u_grid[~mask], u_grid[mask], values[mask])
            if mask.mean() < 0.1:
                message = f"x-cell {cell}: only {int(mask.sum())} of {mask.size} grid points identified"
                logger.warning(message)
                warnings.append(message)
        grids[cell] = Grid(u_grid, values)
        masks[cell] = mask

    return GridCurveMte(grids, masks, shape="none", metadata={"bandwidths": bandwidths, "warnings": warnings})


@dataclass
class ConcavePolicyFit:
    curve: Grid
    argmax: float
    regressor: str
    max_slope_change: float


def _bin_regressor(t: np.ndarray, y: np.ndarray, max_knots: int):
    values, inverse = np.unique(t, return_inverse=True)
    if values.size > max_knots:
        edges = np.quantile(t, np.linspace(0.0, 1.0, max_knots + 1))
        inverse = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, max_knots - 1)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse).astype(float)
    keep = counts > 0
    knots = np.bincount(inverse, weights=t)[keep] / counts[keep]
    means = np.bincount(inverse, weights=y)[keep] / counts[keep]
    counts = counts[keep]
    # bins sharing a mean regressor value collapse into one knot
    knots, merge = np.unique(knots, return_inverse=True)
    merge = merge.reshape(-1)
    merged_counts = np.bincount(merge, weights=counts)
    merged_means = np.bincount(merge, weights=means * counts) / merged_counts
    return knots, merged_means, merged_counts


def concave_policy_learn(
    data: Dataset, g: Optional[PropensityFn] = None, max_knots: int = 512
) -> ConcavePolicyFit:
    """
    Concave least-squares fit of y on the propensity (or on z when g is None) and its argmax.

    The fit lives in the cone alpha + beta*t - sum_j c_j (t - t_j)_+ with c_j >= 0 over the
    interior knots, solved as bounded least squares on binned means.
    """
    if g is not None:
        t, regressor = g.evaluate_rows(data.x, data.w, data.z), "propensity"
    else:
        t, regressor = data.z.copy(), "subsidy"
    if np.unique(t).size < 3:
        raise InsufficientDataError("concave regression needs at least 3 distinct regressor values")

    knots, means, counts = _bin_regressor(t, data.y, max_knots)
    if knots.size < 3:
        raise InsufficientDataError("fewer than 3 distinct knots after binning")
    s = (knots - knots[0]) / (knots[-1] - knots[0])
    hinges = np.maximum(s[:, None] - s[None, 1:-1], 0.0)
    basis = np.hstack([np.ones((s.size, 1)), s[:, None], -hinges])
    root_w = np.sqrt(counts)
    lower = np.r_[-np.inf, -np.inf, np.zeros(hinges.shape[1])]
    upper = np.full(basis.shape[1], np.inf)
    solution = optimize.lsq_linear(
        basis * root_w[:, None], means * root_w, bounds=(lower, upper), method="bvls", tol=1e-12
    )
    if not solution.success:
        raise ComputationError(f"concave least squares failed: {solution.message}")
    fitted = basis @ solution.x
    slopes = np.diff(fitted) / np.diff(knots)
    max_change = float(np.max(np.diff(slopes))) if slopes.size > 1 else 0.0
    best = int(np.argmax(fitted))
    logger.info("concave fit over %d knots; argmax %s = %.6g", knots.size, regressor, knots[best])
    return ConcavePolicyFit(
        curve=Grid(knots, fitted), argmax=float(knots[best]), regressor=regressor, max_slope_change=max_change
    )


def empirical_welfare(data: Dataset, rule: SubsidyRule, cost: CostSpec, match_tol: float) -> float:
    """
    Welfare of an on-support rule from sample means: per cell, the mean outcome and take-up
    among records whose subsidy is within `match_tol` of the assigned one.
    """
    total = 0.0
    off_support: Dict[str, float] = {}
    for cell, z in zip(rule.cells, rule.assignment):
        in_cell = data.cell_mask(cell.x, cell.w)
        if not in_cell.any():
            off_support[cell.key] = float("nan")
            continue
        matched = in_cell & (np.abs(data.z - z) <= match_tol)
        if not matched.any():
            candidates = data.z[in_cell]
            off_support[cell.key] = float(candidates[np.argmin(np.abs(candidates - z))])
            continue
        takeup = float(data.d[matched].mean())
        total += cell.weight * (float(data.y[matched].mean()) - cost.expected(cell.x, cell.w, z, takeup))
    if off_support:
        listing = ", ".join(f"{key} (nearest z={value:g})" for key, value in off_support.items())
        raise OffSupportError(f"assigned subsidies are off the observed support: {listing}", {"nearest": off_support})
    return total
