import json
from pathlib import Path

import numpy as np
import pytest

from app.helpers.curves import FunctionMte, LinearPropensity, PolyLambdaPrimeMte
from app.schemas import Cell, SelectionParams

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"

WAGE_SUBSIDY = dict(
    beta1=[660.1336, 2677.209],
    beta0=[607.5856, 1743.904],
    betaD=[-0.9359, 0.2965],
    gamma=0.0017,
    sigma1=3399.0894,
    sigma0=2596.7705,
    rho1=0.3802,
    rho0=-0.0889,
    rho01=0.0,
)

# lambda' of the non-monotone illustration, ascending powers
NONMONOTONE_COEFS = [0.399691, 4.956392, -74.935120, 275.423206, -426.853331, 298.923460, -78.211517]


@pytest.fixture
def wage_params() -> SelectionParams:
    return SelectionParams(**WAGE_SUBSIDY)


@pytest.fixture
def medical() -> Cell:
    return Cell(x=(1.0,), weight=0.5, label="medical")


@pytest.fixture
def other() -> Cell:
    return Cell(x=(0.0,), weight=0.5, label="other")


@pytest.fixture
def toy_mte() -> PolyLambdaPrimeMte:
    """MTE(u) = 4 - 2u."""
    return PolyLambdaPrimeMte([0.0], [4.0, -2.0])


@pytest.fixture
def toy_g() -> LinearPropensity:
    """g(w, z) = (1 + z + w) / 4 on z in [0, 1]."""
    return LinearPropensity(0.25, 0.25, (0.0, 1.0), coef_w=[0.25])


@pytest.fixture
def identity_g() -> LinearPropensity:
    return LinearPropensity(0.0, 1.0, (0.0, 1.0))


@pytest.fixture
def cosine_mte() -> FunctionMte:
    return FunctionMte(lambda u: np.cos(np.pi * u) + 0.25, shape="decreasing")


@pytest.fixture
def nonmonotone_mte() -> PolyLambdaPrimeMte:
    return PolyLambdaPrimeMte([0.0], NONMONOTONE_COEFS)


@pytest.fixture
def toy_cell():
    def _cell(w: float, weight: float = 1.0) -> Cell:
        return Cell(w=(w,), weight=weight, label=f"w={w:g}")

    return _cell


@pytest.fixture
def write_config(tmp_path):
    def _write(name: str, payload: dict) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR
