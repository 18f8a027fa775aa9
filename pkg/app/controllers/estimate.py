from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from app.helpers.curves import MteCurve, monotone_grid
from app.helpers.dataset import Dataset
from app.helpers.estimation import (
    concave_policy_learn,
    fit_choice_probit,
    heckman_two_step,
    liv_estimate,
    mte_from_heckman,
    mte_from_semiparametric,
    semiparametric_two_stage,
)
from app.models.model_type import EstimateConfig
from app.schemas import format_key
from app.utils import io_utils, plot_utils
from app.utils.log_utils import get_logger

logger = get_logger("ESTIMATE")

MAX_REPORTED_CELLS = 50


def _report_cells(data: Dataset) -> List[Tuple[float, ...]]:
    cells = data.x_cells()
    if len(cells) <= MAX_REPORTED_CELLS:
        return cells
    logger.info("%d distinct covariate cells; reporting curves at the covariate means", len(cells))
    return [tuple(float(v) for v in data.x.mean(axis=0))]


def _curve_rows(name: str, curve: MteCurve, cells, u: np.ndarray) -> List[Dict[str, Any]]:
    rows = []
    for cell in cells:
        values = np.asarray(curve.evaluate(cell, u), dtype=float)
        identified = [not curve.extrapolated(cell, t, t) for t in u]
        for t, value, known in zip(u, values, identified):
            row = {"estimator": name}
            row.update({f"x{j + 1}": v for j, v in enumerate(cell)})
            row.update({"u": float(t), "mte": float(value), "identified": int(known)})
            rows.append(row)
    return rows


def run_estimate(config: EstimateConfig, out_dir: Path) -> Dict[str, Any]:
    """
    Fit the requested estimators on one dataset.

    Writes fit.json and mte_curve.csv, plus mte.svg and propensity.svg when plotting.
    """
    out_dir = io_utils.ensure_dir(out_dir)
    data = Dataset.from_csv(Path(config.dataset), config.covariate_names or None)
    propensity = fit_choice_probit(data)

    fit: Dict[str, Any] = {
        "dataset": config.dataset,
        "n": data.n,
        "propensity": {
            "beta_d": propensity.beta_d,
            "beta_w": propensity.beta_w,
            "gamma": propensity.gamma,
            "warnings": propensity.warnings,
        },
    }
    curves: Dict[str, MteCurve] = {}
    u = monotone_grid(config.u_grid_n)

    for estimator in config.estimators:
        logger.info("running %s on %d records", estimator, data.n)
        if estimator == "heckman":
            heckman = heckman_two_step(data, propensity)
            fit["heckman"] = {"table": heckman.table_rows(data.x_names, config.subsidy_name), "fit": heckman}
            curves["heckman"] = mte_from_heckman(heckman)
        elif estimator == "semiparametric":
            semi = semiparametric_two_stage(data, config.degree, propensity)
            fit["semiparametric"] = {"fit": semi}
            curves["semiparametric"] = mte_from_semiparametric(semi)
        elif estimator == "liv":
            liv = liv_estimate(data, propensity, u, config.bandwidth)
            fit["liv"] = liv.metadata
            curves["liv"] = liv
        else:
            g = propensity if config.concave_regressor == "propensity" else None
            concave = concave_policy_learn(data, g, config.max_knots)
            fit["concave"] = {
                "regressor": concave.regressor,
                "argmax": concave.argmax,
                "max_slope_change": concave.max_slope_change,
                "knots": concave.curve.points,
                "fitted": concave.curve.values,
            }

    io_utils.write_json(out_dir / "fit.json", fit)
    files = ["fit.json"]
    cells = _report_cells(data)
    rows = [row for name, curve in curves.items() for row in _curve_rows(name, curve, cells, u)]
    columns = ["estimator"] + [f"x{j + 1}" for j in range(data.k)] + ["u", "mte", "identified"]
    io_utils.write_table(out_dir / "mte_curve.csv", rows, columns)
    files.append("mte_curve.csv")

    if config.plot:
        if curves:
            series = {
                f"{name} x={format_key(cell)}": (u, np.asarray(curve.evaluate(cell, u), dtype=float))
                for name, curve in curves.items()
                for cell in cells[:4]
            }
            plot_utils.plot_mte_curves(out_dir / "mte.svg", series)
            files.append("mte.svg")
        z = np.linspace(float(data.z.min()), float(data.z.max()), 101)
        w = tuple(float(v) for v in data.w.mean(axis=0))
        takeup = {f"x={format_key(cell)}": (z, propensity.evaluate(cell, w, z)) for cell in cells[:4]}
        plot_utils.plot_propensity(out_dir / "propensity.svg", takeup)
        files.append("propensity.svg")

    summary = {"n": data.n, "estimators": list(config.estimators), "files": files}
    if "heckman" in fit:
        summary["heckman"] = fit["heckman"]["table"]
    if "concave" in fit:
        summary["concave_argmax"] = fit["concave"]["argmax"]
    return summary
