from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.utils.log_utils import get_logger  # noqa: E402

logger = get_logger("PLOT")

# fixed salt and no date stamp keep the SVG bytes reproducible
plt.rcParams.update(
    {
        "svg.hashsalt": "subsidy-welfare",
        "svg.fonttype": "none",
        "axes.grid": True,
        "grid.alpha": 0.25,
        "font.size": 10,
    }
)

Series = Tuple[Sequence[float], Sequence[float]]


def save_svg(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    logger.info("wrote %s", path)
    return path


def plot_mte_curves(path: Path, curves: Dict[str, Series], title: str = "Marginal treatment effect") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (u, values) in curves.items():
        ax.plot(u, values, linewidth=1.2, label=label)
    ax.axhline(0.0, color="#333", linewidth=0.6)
    ax.set(xlabel="u", ylabel="MTE", title=title)
    if len(curves) > 1:
        ax.legend(fontsize=8)
    return save_svg(fig, path)


def plot_propensity(path: Path, curves: Dict[str, Series]) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (z, takeup) in curves.items():
        ax.plot(z, takeup, linewidth=1.2, label=label)
    ax.set(xlabel="subsidy z", ylabel="take-up g(z)", title="Propensity score", ylim=(0.0, 1.0))
    if len(curves) > 1:
        ax.legend(fontsize=8)
    return save_svg(fig, path)


def plot_policy(
    path: Path,
    u: Sequence[float],
    mte: Sequence[float],
    marginal_cost: Sequence[float],
    u_star: Optional[float] = None,
    title: str = "Optimal subsidy",
) -> Path:
    """MTE against the marginal cost of moving take-up, with the chosen take-up marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(u, mte, linewidth=1.2, label="MTE")
    ax.plot(u, marginal_cost, linewidth=1.2, linestyle="--", label="marginal cost")
    if u_star is not None:
        ax.axvline(u_star, color="#DE2D26", linewidth=0.8, label=f"u* = {u_star:.4g}")
    ax.set(xlabel="u", ylabel="value", title=title)
    ax.legend(fontsize=8)
    return save_svg(fig, path)


def plot_ladder(
    path: Path,
    u: Sequence[float],
    mte: Sequence[float],
    support: Sequence[Tuple[float, float]],
    title: str = "Welfare ladder",
) -> Path:
    """MTE with its positive and negative areas shaded inside the identified support."""
    u = np.asarray(u, dtype=float)
    mte = np.asarray(mte, dtype=float)
    inside = np.zeros(u.size, dtype=bool)
    for lo, hi in support:
        inside |= (u >= lo) & (u <= hi)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(u, mte, color="#2171B5", linewidth=1.2)
    ax.fill_between(u, mte, 0.0, where=inside & (mte >= 0), color="#31A354", alpha=0.35, label="gain")
    ax.fill_between(u, mte, 0.0, where=inside & (mte < 0), color="#DE2D26", alpha=0.35, label="loss")
    ax.axhline(0.0, color="#333", linewidth=0.6)
    ax.set(xlabel="u", ylabel="MTE", title=title)
    ax.legend(fontsize=8)
    return save_svg(fig, path)
