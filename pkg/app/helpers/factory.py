"""
Build curves, propensities and costs from run-config sections.
"""
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from app.exceptions import ConfigError
from app.helpers.curves import (
    GridCurveMte,
    LinearPropensity,
    MteCurve,
    NormalParametricMte,
    PolyLambdaPrimeMte,
    ProbitPropensity,
    PropensityFn,
)
from app.helpers.estimation import mte_from_heckman, mte_from_semiparametric
from app.helpers.welfare import ConstantPerEligibleCost, CostSpec, GeneralTableCost, VoucherCost, ZeroCost
from app.models.model_type import CostConfig, MteConfig, PropensityConfig
from app.schemas import HeckmanFit, SelectionParams, SemiparametricFit
from app.utils.io_utils import read_json, read_table
from app.utils.numerics import Grid


def _require_params(params: Optional[SelectionParams], what: str) -> SelectionParams:
    if params is None:
        raise ConfigError(f"{what} source 'params' needs a top-level params block")
    return params


def _fit_section(path: str, estimator: str) -> Dict:
    fit = read_json(Path(path))
    if estimator not in fit:
        raise ConfigError(f"{path} has no {estimator} fit; available: {', '.join(sorted(fit))}")
    return fit[estimator]


def build_mte(config: MteConfig, params: Optional[SelectionParams] = None) -> MteCurve:
    if config.source == "params":
        params = _require_params(params, "mte")
        return NormalParametricMte(params.level_coef, params.mte_slope)
    if config.source == "normal":
        return NormalParametricMte(config.level_coef, config.slope)
    if config.source == "polynomial":
        return PolyLambdaPrimeMte(config.level_coef, config.lambda_prime, config.shape)
    if config.source == "fit":
        estimator = config.estimator or "heckman"
        section = _fit_section(config.path, estimator)
        if estimator == "heckman":
            return mte_from_heckman(HeckmanFit(**section["fit"]))
        if estimator == "semiparametric":
            return mte_from_semiparametric(SemiparametricFit(**section["fit"]))
        raise ConfigError("liv curves are read with source 'grid' from mte_curve.csv")
    return load_grid_curve(config.path, config.estimator or "liv", config.shape or "none")


def load_grid_curve(path: str, estimator: str = "liv", shape: str = "none") -> GridCurveMte:
    """Rebuild a tabulated curve from the `estimator`, x1..xk, u, mte, identified columns."""
    frame = read_table(Path(path))
    missing = {"estimator", "u", "mte", "identified"} - set(frame.columns)
    if missing:
        raise ConfigError(f"{path} lacks columns: {', '.join(sorted(missing))}")
    frame = frame[frame["estimator"] == estimator]
    if frame.empty:
        raise ConfigError(f"{path} has no rows for estimator {estimator!r}")
    x_columns = sorted((c for c in frame.columns if c.startswith("x") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    grids, masks = {}, {}
    groups = frame.groupby(x_columns, sort=True) if x_columns else [((), frame)]
    for key, rows in groups:
        key = key if isinstance(key, tuple) else (key,)
        rows = rows.sort_values("u")
        grids[tuple(float(v) for v in key)] = Grid(rows["u"].to_numpy(float), rows["mte"].to_numpy(float))
        masks[tuple(float(v) for v in key)] = rows["identified"].to_numpy().astype(bool)
    return GridCurveMte(grids, masks, shape=shape, metadata={"source": str(path)})


def build_propensity(config: PropensityConfig, params: Optional[SelectionParams] = None) -> PropensityFn:
    if config.source == "params":
        params = _require_params(params, "propensity")
        return ProbitPropensity(params.betaD, params.gamma)
    if config.source == "probit":
        return ProbitPropensity(config.beta_d, config.gamma, config.beta_w)
    if config.source == "linear":
        return LinearPropensity(config.intercept, config.coef_z, config.domain, config.coef_x, config.coef_w)
    section = read_json(Path(config.path)).get("propensity")
    if not section:
        raise ConfigError(f"{config.path} has no propensity section")
    return ProbitPropensity(section["beta_d"], section["gamma"], section.get("beta_w", []))


def build_cost(config: CostConfig) -> CostSpec:
    if config.kind == "zero":
        return ZeroCost()
    if config.kind == "constant":
        return ConstantPerEligibleCost(config.amount)
    if config.kind == "voucher":
        return VoucherCost()
    return GeneralTableCost.from_table(
        np.asarray(config.z), np.asarray(config.treated), np.asarray(config.untreated)
    )
