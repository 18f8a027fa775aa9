from pathlib import Path
from typing import Any, Dict

import numpy as np

from app.helpers.factory import build_cost, build_mte, build_propensity
from app.helpers.policy import assemble_rule, bound_optimal, marginal_benefit, solve_cells
from app.helpers.welfare import baseline_from_params, welfare_of_rule
from app.models.model_type import SolveConfig
from app.utils import io_utils, plot_utils
from app.utils.log_utils import get_logger

logger = get_logger("SOLVE")

SOLVE_COLUMNS = ["cell", "z_star", "u_star", "kind", "lambda", "welfare"]


def run_solve(config: SolveConfig, out_dir: Path) -> Dict[str, Any]:
    """
    Optimal subsidy per cell, the assembled rule and its welfare.

    Writes solve.json, solve.csv, rule.json and welfare.json, plus policy.svg for the
    first cell when plotting.
    """
    out_dir = io_utils.ensure_dir(out_dir)
    mte = build_mte(config.mte, config.params)
    g = build_propensity(config.propensity, config.params)
    cost = build_cost(config.cost)
    cells = [c.to_cell() for c in config.cells]
    action_space = tuple(config.action_space)

    results = solve_cells(mte, g, cost, cells, action_space, config.solver, config.fallback, config.grid_n)
    rule = assemble_rule(results, cells, action_space, name="optimal")
    baseline = config.baseline
    if baseline is None and config.params is not None:
        baseline = baseline_from_params(config.params, cells)
    welfare = welfare_of_rule(mte, g, cost, rule, baseline)

    bounds = {}
    if config.probes:
        for cell in cells:
            lower, upper = bound_optimal(mte, g, cell, config.probes, action_space)
            bounds[cell.key] = {"lower": lower, "upper": upper}

    ordered = [results[cell.key] for cell in cells]
    io_utils.write_json(out_dir / "solve.json", {"results": ordered, "bounds": bounds, "mte_shape": mte.shape})
    io_utils.write_table(
        out_dir / "solve.csv",
        [
            {
                "cell": r.cell,
                "z_star": r.z_star,
                "u_star": r.u_star,
                "kind": r.kind,
                "lambda": r.lambda_at_solution,
                "welfare": r.welfare_at_solution,
            }
            for r in ordered
        ],
        SOLVE_COLUMNS,
    )
    io_utils.write_json(out_dir / "rule.json", rule)
    io_utils.write_json(out_dir / "welfare.json", welfare)
    files = ["solve.json", "solve.csv", "rule.json", "welfare.json"]

    if config.plot:
        cell = cells[0]
        zs = np.linspace(action_space[0], action_space[1], 129)
        u = np.array([float(g.evaluate(cell.x, cell.w, z)) for z in zs])
        curve = np.asarray(mte.evaluate(cell.x, u), dtype=float)
        # marginal cost = MTE - marginal benefit
        cost_line = curve - np.array([marginal_benefit(mte, g, cost, cell, z) for z in zs])
        plot_utils.plot_policy(
            out_dir / "policy.svg", u, curve, cost_line, results[cell.key].u_star, title=f"Optimal subsidy {cell.key}"
        )
        files.append("policy.svg")

    logger.info("solved %d cells; net welfare above baseline %.6g", len(cells), welfare.net_above_baseline)
    return {
        "cells": len(cells),
        "assignment": rule.assignment,
        "kinds": [r.kind for r in ordered],
        "net_above_baseline": welfare.net_above_baseline,
        "net": welfare.net,
        "files": files,
    }
