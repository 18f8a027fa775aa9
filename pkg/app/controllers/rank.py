from pathlib import Path
from typing import Any, Dict

from app.helpers.factory import build_cost, build_mte, build_propensity
from app.helpers.ranking import IdentifiedMteSet, MteSets, rank_list, to_dot
from app.models.model_type import RankConfig
from app.schemas import SubsidyRule
from app.utils import io_utils


def build_sets(config: RankConfig, cells) -> MteSets:
    """One shared set from explicit pins, or one per x-cell pinned from the curve over `region`."""
    identified = config.identified_set
    if not identified.region:
        return IdentifiedMteSet(identified.u_grid, dict(identified.pinned), identified.shape, identified.bounds)
    mte = build_mte(config.mte, config.params)
    sets = {}
    for cell in cells:
        if cell.x_key in sets:
            continue
        member = IdentifiedMteSet.from_curve(
            mte, cell.x, identified.u_grid, identified.shape, identified.bounds, identified.region
        )
        member.pinned.update({int(k): float(v) for k, v in identified.pinned.items()})
        sets[cell.x_key] = member
    return sets


def run_rank(config: RankConfig, out_dir: Path) -> Dict[str, Any]:
    """Partial order of the configured rules; writes verdicts.json and ranking.dot."""
    out_dir = io_utils.ensure_dir(out_dir)
    g = build_propensity(config.propensity, config.params)
    cost = build_cost(config.cost)
    cells = [c.to_cell() for c in config.cells]
    rules = [
        SubsidyRule(cells=cells, assignment=r.assignment, action_space=tuple(config.action_space), name=r.name)
        for r in config.rules
    ]
    sets = build_sets(config, cells)
    order = rank_list(sets, g, rules, cost)

    io_utils.write_json(out_dir / "verdicts.json", order)
    io_utils.write_text(out_dir / "ranking.dot", to_dot(order))
    return {
        "rules": order.rules,
        "edges": order.edges,
        "equivalent": order.equivalent,
        "incomparable": order.incomparable,
        "files": ["verdicts.json", "ranking.dot"],
    }
