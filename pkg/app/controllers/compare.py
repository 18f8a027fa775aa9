from pathlib import Path
from typing import Any, Dict

import numpy as np

from app.helpers.comparison import welfare_ladder
from app.helpers.curves import monotone_grid
from app.helpers.factory import build_mte, build_propensity
from app.models.model_type import CompareConfig
from app.utils import io_utils, plot_utils


def run_compare(config: CompareConfig, out_dir: Path) -> Dict[str, Any]:
    """Welfare ladder per covariate cell; writes ladder.json and, when plotting, ladder.svg."""
    out_dir = io_utils.ensure_dir(out_dir)
    mte = build_mte(config.mte, config.params)
    g = build_propensity(config.propensity, config.params)
    cells = [c.to_cell() for c in config.cells]
    z_range = tuple(config.z_range)

    x_cells = list(dict.fromkeys(tuple(c.x) for c in cells))
    ladders = [welfare_ladder(mte, g, x, cells, z_range) for x in x_cells]
    io_utils.write_json(out_dir / "ladder.json", {"ladders": ladders})
    files = ["ladder.json"]

    if config.plot:
        u = monotone_grid(401)
        first = ladders[0]
        plot_utils.plot_ladder(
            out_dir / "ladder.svg",
            u,
            np.asarray(mte.evaluate(x_cells[0], u), dtype=float),
            first.identified_support,
            title=f"Welfare ladder x={first.x_cell}",
        )
        files.append("ladder.svg")

    return {
        "ladders": [
            {"x_cell": l.x_cell, "s_dir": l.s_dir, "s_sub": l.s_sub, "s_fb": l.s_fb, "ordering_holds": l.ordering_holds}
            for l in ladders
        ],
        "files": files,
    }
