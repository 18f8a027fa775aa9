from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from app.config import settings
from app.exceptions import SimulationError
from app.helpers.curves import monotone_grid
from app.helpers.simulation import (
    GeneralizedRoySpec,
    discrete_cells,
    linear_utility,
    simulate_generalized_roy,
    simulate_normal,
    true_mte,
)
from app.models.model_type import SimulateConfig
from app.schemas import Distribution, format_key
from app.utils import io_utils
from app.utils.log_utils import get_logger

logger = get_logger("SIMULATE")


def _truth_cells(dists: Sequence[Distribution]) -> List[Tuple[float, ...]]:
    """Every support point when all covariates are discrete, else the covariate means."""
    if all(d.support() is not None for d in dists):
        return discrete_cells(dists, "covariate")
    return [tuple(d.expectation() for d in dists)]


def _simulate_normal(config: SimulateConfig, seed: int, out_dir: Path) -> Dict[str, Any]:
    params = config.params
    data = simulate_normal(params, config.n, config.x, config.z, config.w, seed)
    data.to_csv(out_dir / "data.csv", settings.FLOAT_DIGITS)

    u = monotone_grid(config.truth_grid_n)
    curves = {format_key(x): {"u": u, "mte": true_mte(params, x, u)} for x in _truth_cells(config.x)}
    truth = {
        "model": "normal",
        "seed": seed,
        "n": config.n,
        "takeup_rate": float(data.d.mean()),
        "params": params,
        "mte_slope": params.mte_slope,
        "mte_shape": "decreasing" if params.mte_slope > 0 else "increasing" if params.mte_slope < 0 else "none",
        "mte": curves,
    }
    io_utils.write_json(out_dir / "truth.json", truth)
    return truth


def _simulate_roy(config: SimulateConfig, seed: int, out_dir: Path) -> Dict[str, Any]:
    roy = config.roy
    model = GeneralizedRoySpec(
        phi=linear_utility(roy.coef_z, roy.coef_delta, roy.coef_v, roy.intercept, roy.coef_x, roy.coef_w),
        delta_dist=roy.delta,
        v_dist=roy.v,
        direction="increasing" if roy.coef_delta >= 0 else "decreasing",
        y0_dist=roy.y0,
        z_search=roy.z_search,
    )
    if len(roy.coef_x) not in (0, len(config.x)) or len(roy.coef_w) not in (0, len(config.w)):
        raise SimulationError("utility coefficients do not match the covariate and instrument distributions")
    result = simulate_generalized_roy(model, config.n, config.x, config.w, config.z, seed, roy.z_grid_n, roy.bins)
    result.dataset.to_csv(out_dir / "data.csv", settings.FLOAT_DIGITS)

    curves = {}
    for key, grid in result.mte.grids.items():
        curves[format_key(key)] = {
            "u": grid.points,
            "mte": grid.values,
            "identified": result.mte.masks[key],
            "std_error": np.where(np.isfinite(result.bin_std_errors), result.bin_std_errors, np.nan),
        }
    propensity = {
        f"x={format_key(x)};w={format_key(w)}": {"z": grid.points, "takeup": grid.values}
        for (x, w), grid in result.propensity.grids.items()
    }
    truth = {
        "model": "generalized_roy",
        "seed": seed,
        "n": config.n,
        "takeup_rate": float(result.dataset.d.mean()),
        "mte_shape": result.mte.shape,
        "bins": result.mte.metadata.get("bins"),
        "mte": curves,
        "propensity": propensity,
    }
    io_utils.write_json(out_dir / "truth.json", truth)
    return truth


def run_simulate(config: SimulateConfig, out_dir: Path) -> Dict[str, Any]:
    """
    Draw a dataset and its ground truth.

    Writes data.csv and truth.json under `out_dir`.
    """
    out_dir = io_utils.ensure_dir(out_dir)
    seed = config.seed if config.seed is not None else settings.DEFAULT_SEED
    logger.info("simulating %d records from the %s model (seed %d)", config.n, config.model, seed)
    if config.model == "normal":
        truth = _simulate_normal(config, seed, out_dir)
    else:
        truth = _simulate_roy(config, seed, out_dir)
    return {
        "model": config.model,
        "n": config.n,
        "seed": seed,
        "takeup_rate": truth["takeup_rate"],
        "files": ["data.csv", "truth.json"],
    }
