"""
Data-generating processes: the normal selection model, the Roy model and the
generalized Roy construction with an explicitly built U_D.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import DomainError, SimulationError
from app.helpers.curves import FunctionMte, GridCurveMte, GridPropensity, as_key
from app.helpers.dataset import Dataset
from app.schemas import Distribution, SelectionParams
from app.utils.log_utils import get_logger
from app.utils.numerics import Grid, norm_quantile
from app.utils.seeding import make_rng

logger = get_logger("SIMULATION")

# stream ids under the run seed
_X_STREAM, _W_STREAM, _Z_STREAM, _SHOCK_STREAM, _DELTA_STREAM, _V_STREAM, _Y0_STREAM, _CHECK_STREAM = range(8)

Utility = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _draw_columns(dists: Sequence[Distribution], n: int, seed: Optional[int], stream: int) -> np.ndarray:
    columns = [dist.sample(make_rng(seed, stream, j), n) for j, dist in enumerate(dists)]
    return np.column_stack(columns) if columns else np.empty((n, 0))


def draw_shocks(params: SelectionParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """(U1, U0, V) draws, one row per individual."""
    if not params.is_psd():
        raise SimulationError(
            "selection covariance is not positive semidefinite",
            {"eigenvalues": np.linalg.eigvalsh(params.covariance()).tolist()},
        )
    return rng.multivariate_normal(np.zeros(3), params.covariance(), size=n, method="eigh")


def simulate_normal(
    params: SelectionParams,
    n: int,
    x_dists: Sequence[Distribution],
    z_dist: Distribution,
    w_dists: Sequence[Distribution] = (),
    seed: Optional[int] = None,
) -> Dataset:
    """
    Draw n records from the normal selection model.

    Args:
        params: Model coefficients; len(betaD) - 1 must equal len(x_dists).
        n: Number of records (>= 1).
        x_dists: One marginal per covariate.
        z_dist: Subsidy distribution, independent of the shocks.
        w_dists: Marginals of excluded instruments; they do not enter the choice index.
        seed: Run seed; every column has its own counter-based stream.

    Returns:
        Dataset with D = 1{[1,x]'betaD + z*gamma + V >= 0}.
    """
    if n < 1:
        raise SimulationError("n must be at least 1")
    if len(x_dists) != params.n_covariates:
        raise SimulationError(f"{len(x_dists)} covariate distributions for {params.n_covariates} coefficients")

    x = _draw_columns(x_dists, n, seed, _X_STREAM)
    w = _draw_columns(w_dists, n, seed, _W_STREAM)
    z = z_dist.sample(make_rng(seed, _Z_STREAM), n)
    shocks = draw_shocks(params, make_rng(seed, _SHOCK_STREAM), n)

    design = np.hstack([np.ones((n, 1)), x])
    index = design @ np.asarray(params.betaD) + params.gamma * z
    d = (index + shocks[:, 2] >= 0).astype(float)
    y1 = design @ np.asarray(params.beta1) + shocks[:, 0]
    y0 = design @ np.asarray(params.beta0) + shocks[:, 1]
    y = np.where(d == 1, y1, y0)
    logger.info("simulated %d records from the normal selection model (take-up %.4f)", n, d.mean())
    return Dataset(y=y, d=d, x=x, w=w, z=z)


def true_mte(params: SelectionParams, x: Sequence[float], u):
    """MTE(x, u) = [1, x]'(beta1 - beta0) - (rho1*sigma1 - rho0*sigma0) * Phi^-1(u), for 0 < u < 1."""
    row = np.concatenate([[1.0], as_key(x)])
    if row.size != len(params.beta1):
        raise DomainError(f"covariate cell {tuple(x)} does not match the model dimension")
    return float(row @ params.level_coef) - params.mte_slope * norm_quantile(u)


def roy_mte(delta_quantile: Callable[[float], float], u: float) -> float:
    return float(delta_quantile(u))


def roy_mte_curve(delta_quantile: Callable[[np.ndarray], np.ndarray]) -> FunctionMte:
    """In the Roy model people select on gains, so the curve rises in u."""
    return FunctionMte(delta_quantile, shape="increasing")


# ---------------------------------------------------------------- generalized Roy


@dataclass
class GeneralizedRoySpec:
    """
    Choice utility phi(x, w, z, delta, v); D = 1{phi >= 0}.

    phi must be increasing in z. `direction` is the sign of its dependence on delta.
    Y0 is drawn from `y0_dist` and Y1 = Y0 + delta.
    """

    phi: Utility
    delta_dist: Distribution
    v_dist: Distribution
    direction: str = "increasing"
    y0_dist: Distribution = field(default_factory=lambda: Distribution(kind="normal"))
    reference: Tuple[float, float] = (0.0, 0.0)
    z_search: Tuple[float, float] = (-50.0, 50.0)

    def __post_init__(self):
        if self.direction not in ("increasing", "decreasing"):
            raise SimulationError(f"direction must be increasing or decreasing, got {self.direction!r}")


def linear_utility(
    coef_z: float,
    coef_delta: float,
    coef_v: float,
    intercept: float = 0.0,
    coef_x: Sequence[float] = (),
    coef_w: Sequence[float] = (),
) -> Utility:
    coef_x = np.asarray(coef_x, dtype=float)
    coef_w = np.asarray(coef_w, dtype=float)

    def phi(x, w, z, delta, v):
        out = intercept + coef_z * z + coef_delta * delta + coef_v * v
        if coef_x.size:
            out = out + x @ coef_x
        if coef_w.size:
            out = out + w @ coef_w
        return out

    return phi


@dataclass
class GeneralizedRoyResult:
    dataset: Dataset
    propensity: GridPropensity
    mte: GridCurveMte
    latent_u: np.ndarray
    bin_std_errors: np.ndarray


def check_rank_invariance(
    roy: GeneralizedRoySpec,
    x: np.ndarray,
    w: np.ndarray,
    z: np.ndarray,
    delta: np.ndarray,
    v: np.ndarray,
    rng: np.random.Generator,
    pairs: int = 2000,
) -> None:
    """Instrument orderings of phi must not depend on (delta, v); raises SimulationError otherwise."""
    n = z.size
    a, b, i = rng.integers(0, n, pairs), rng.integers(0, n, pairs), rng.integers(0, n, pairs)
    d0 = np.full(pairs, roy.reference[0])
    v0 = np.full(pairs, roy.reference[1])
    ref = roy.phi(x[a], w[a], z[a], d0, v0) - roy.phi(x[b], w[b], z[b], d0, v0)
    own = roy.phi(x[a], w[a], z[a], delta[i], v[i]) - roy.phi(x[b], w[b], z[b], delta[i], v[i])
    flips = int(np.sum(np.sign(ref) * np.sign(own) < 0))
    if flips:
        raise SimulationError(
            f"rank invariance violated in {flips} of {pairs} sampled instrument pairs",
            {"violations": flips, "pairs": pairs},
        )


def _threshold_instruments(roy, x_ref, w_ref, delta, v, iterations: int = 100) -> np.ndarray:
    """Subsidy at which each (delta, v) is indifferent at the reference cell; +-inf when never/always."""
    n = delta.size
    X = np.repeat(x_ref[None, :], n, axis=0)
    W = np.repeat(w_ref[None, :], n, axis=0)
    lo = np.full(n, float(roy.z_search[0]))
    hi = np.full(n, float(roy.z_search[1]))
    always = roy.phi(X, W, lo, delta, v) >= 0
    never = roy.phi(X, W, hi, delta, v) < 0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        up = roy.phi(X, W, mid, delta, v) >= 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    threshold = hi
    threshold[always] = -np.inf
    threshold[never] = np.inf
    return threshold


def discrete_cells(dists: Sequence[Distribution], what: str) -> List[Tuple[float, ...]]:
    supports = []
    for dist in dists:
        support = dist.support()
        if support is None:
            raise SimulationError(f"{what} distributions must be discrete to tabulate the propensity")
        supports.append([value for value, prob in support if prob > 0])
    return [tuple(c) for c in itertools.product(*supports)] if supports else [()]


def simulate_generalized_roy(
    roy: GeneralizedRoySpec,
    n: int,
    x_dists: Sequence[Distribution],
    w_dists: Sequence[Distribution],
    z_dist: Distribution,
    seed: Optional[int] = None,
    z_grid_n: int = 101,
    bins: Optional[int] = None,
    mismatch_tol: float = 1e-3,
) -> GeneralizedRoyResult:
    """
    Simulate D = 1{phi(X, W, Z, Delta, V) >= 0} and construct its index representation.

    phi1(x, w, z) = phi(x, w, z, delta0, v0) and phi3(delta, v) is the value of phi1 at which
    (delta, v) is indifferent. Then U_D = F3(phi3) via the empirical CDF, g = F3(phi1) on a
    subsidy grid per (x, w) cell, and MTE(u) is the mean of Delta within ceil(n^(1/3)) U_D bins.
    """
    if n < 1:
        raise SimulationError("n must be at least 1")
    x = _draw_columns(x_dists, n, seed, _X_STREAM)
    w = _draw_columns(w_dists, n, seed, _W_STREAM)
    z = z_dist.sample(make_rng(seed, _Z_STREAM), n)
    delta = roy.delta_dist.sample(make_rng(seed, _DELTA_STREAM), n)
    v = roy.v_dist.sample(make_rng(seed, _V_STREAM), n)
    y0 = roy.y0_dist.sample(make_rng(seed, _Y0_STREAM), n)

    check_rank_invariance(roy, x, w, z, delta, v, make_rng(seed, _CHECK_STREAM))

    x_ref, w_ref = np.zeros(x.shape[1]), np.zeros(w.shape[1])
    d0, v0 = roy.reference

    def phi1(X, W, Z):
        m = Z.size
        return roy.phi(X, W, Z, np.full(m, d0), np.full(m, v0))

    thresholds = _threshold_instruments(roy, x_ref, w_ref, delta, v)
    finite = np.isfinite(thresholds)
    phi3 = np.where(thresholds > 0, np.inf, -np.inf)
    phi3[finite] = phi1(
        np.repeat(x_ref[None, :], finite.sum(), axis=0),
        np.repeat(w_ref[None, :], finite.sum(), axis=0),
        thresholds[finite],
    )

    index = phi1(x, w, z)
    d = (roy.phi(x, w, z, delta, v) >= 0).astype(float)
    mismatch = float(np.mean(d != (index >= phi3)))
    if mismatch > mismatch_tol:
        raise SimulationError(
            f"index representation disagrees with direct choices for {mismatch:.4%} of records",
            {"mismatch": mismatch},
        )

    sorted_phi3 = np.sort(phi3)
    latent_u = np.searchsorted(sorted_phi3, phi3, side="right") / n

    z_lo, z_hi = float(z.min()), float(z.max())
    if not z_hi > z_lo:
        raise SimulationError("subsidy draws are degenerate; the propensity cannot be tabulated")
    z_grid = np.linspace(z_lo, z_hi, z_grid_n)
    ramp = np.linspace(0.0, 1.0, z_grid_n)
    grids = {}
    for xc in discrete_cells(x_dists, "covariate"):
        for wc in discrete_cells(w_dists, "instrument"):
            X = np.repeat(np.asarray(xc, dtype=float).reshape(1, -1), z_grid_n, axis=0)
            W = np.repeat(np.asarray(wc, dtype=float).reshape(1, -1), z_grid_n, axis=0)
            takeup = np.searchsorted(sorted_phi3, phi1(X, W, z_grid), side="right") / n
            takeup = np.maximum.accumulate(takeup)
            if np.any(np.diff(takeup) <= 0):
                logger.debug("flat take-up steps in cell x=%s w=%s; tilting by 1e-9", xc, wc)
            # keep the tabulated map strictly increasing
            takeup = takeup * (1.0 - 1e-9) + 1e-9 * ramp
            grids[(xc, wc)] = Grid(z_grid, takeup)

    n_bins = bins or int(math.ceil(n ** (1.0 / 3.0)))
    which = np.minimum((latent_u * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(which, minlength=n_bins).astype(float)
    sums = np.bincount(which, weights=delta, minlength=n_bins)
    squares = np.bincount(which, weights=delta * delta, minlength=n_bins)
    filled = counts > 0
    means = np.zeros(n_bins)
    means[filled] = sums[filled] / counts[filled]
    variance = np.zeros(n_bins)
    variance[filled] = np.maximum(squares[filled] / counts[filled] - means[filled] ** 2, 0.0)
    std_errors = np.full(n_bins, np.inf)
    std_errors[filled] = np.sqrt(variance[filled] / counts[filled])
    centers = (np.arange(n_bins) + 0.5) / n_bins
    if filled.sum() < 2:
        raise SimulationError("fewer than two populated U_D bins")
    means[~filled] = np.interp(centers[~filled], centers[filled], means[filled])

    shape = "decreasing" if roy.direction == "increasing" else "increasing"
    mte_grids = {xc: Grid(centers, means) for xc in discrete_cells(x_dists, "covariate")}
    mte_masks = {xc: filled for xc in mte_grids}
    mte = GridCurveMte(mte_grids, mte_masks, shape=shape, metadata={"bins": n_bins})

    y = y0 + d * delta
    logger.info(
        "generalized Roy sample: n=%d, take-up %.4f, %d bins, index mismatch %.2e", n, d.mean(), n_bins, mismatch
    )
    return GeneralizedRoyResult(
        dataset=Dataset(y=y, d=d, x=x, w=w, z=z),
        propensity=GridPropensity(grids),
        mte=mte,
        latent_u=latent_u,
        bin_std_errors=std_errors,
    )
