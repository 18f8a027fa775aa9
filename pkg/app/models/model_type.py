from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas import Cell, Distribution, SelectionParams, Shape


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CellConfig(StrictModel):
    x: List[float] = []
    w: List[float] = []
    weight: float = Field(ge=0.0)
    label: Optional[str] = None

    def to_cell(self) -> Cell:
        return Cell(x=tuple(self.x), w=tuple(self.w), weight=self.weight, label=self.label)


class CostConfig(StrictModel):
    kind: Literal["zero", "constant", "voucher", "table"] = "voucher"
    amount: float = 0.0
    z: List[float] = []
    treated: List[float] = []
    untreated: List[float] = []

    @model_validator(mode="after")
    def check_table(self):
        if self.kind == "table" and not (len(self.z) == len(self.treated) == len(self.untreated) >= 2):
            raise ValueError("table cost needs z, treated and untreated lists of equal length >= 2")
        return self


class MteConfig(StrictModel):
    """
    Where the MTE curve comes from.

    params: the normal model in the run's `params`; normal: level_coef and slope;
    polynomial: level_coef plus lambda' coefficients (ascending powers);
    fit: a fit.json written by `estimate` (heckman or semiparametric);
    grid: an mte_curve.csv written by `estimate` (liv).
    """

    source: Literal["params", "normal", "polynomial", "fit", "grid"]
    level_coef: List[float] = [0.0]
    slope: float = 0.0
    lambda_prime: List[float] = []
    shape: Optional[Shape] = None
    path: Optional[str] = None
    estimator: Optional[Literal["heckman", "semiparametric", "liv"]] = None

    @model_validator(mode="after")
    def check_source(self):
        if self.source in ("fit", "grid") and not self.path:
            raise ValueError(f"mte source {self.source!r} needs a path")
        if self.source == "polynomial" and not self.lambda_prime:
            raise ValueError("polynomial mte needs lambda_prime coefficients")
        return self


class PropensityConfig(StrictModel):
    """params: probit from the run's `params`; probit: explicit index; linear: bounded linear map; fit: fit.json."""

    source: Literal["params", "probit", "linear", "fit"]
    beta_d: List[float] = []
    beta_w: List[float] = []
    gamma: float = 0.0
    intercept: float = 0.0
    coef_z: float = 0.0
    coef_x: List[float] = []
    coef_w: List[float] = []
    domain: Tuple[float, float] = (0.0, 1.0)
    path: Optional[str] = None

    @model_validator(mode="after")
    def check_source(self):
        if self.source == "probit" and (not self.beta_d or self.gamma <= 0):
            raise ValueError("probit propensity needs beta_d and a positive gamma")
        if self.source == "linear" and self.coef_z <= 0:
            raise ValueError("linear propensity needs a positive coef_z")
        if self.source == "fit" and not self.path:
            raise ValueError("fit propensity needs a path")
        return self


class RoyConfig(StrictModel):
    """Linear utility phi = intercept + coef_z z + coef_delta delta + coef_v v + x'coef_x + w'coef_w."""

    coef_z: float = Field(gt=0.0)
    coef_delta: float
    coef_v: float
    intercept: float = 0.0
    coef_x: List[float] = []
    coef_w: List[float] = []
    delta: Distribution
    v: Distribution
    y0: Distribution = Distribution(kind="normal")
    z_search: Tuple[float, float] = (-50.0, 50.0)
    z_grid_n: int = Field(default=101, ge=2)
    bins: Optional[int] = Field(default=None, ge=2)


class SimulateConfig(StrictModel):
    model: Literal["normal", "generalized_roy"] = "normal"
    n: int = Field(ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    params: Optional[SelectionParams] = None
    roy: Optional[RoyConfig] = None
    x: List[Distribution] = []
    w: List[Distribution] = []
    z: Distribution
    truth_grid_n: int = Field(default=99, ge=2)

    @model_validator(mode="after")
    def check_model(self):
        if self.model == "normal" and self.params is None:
            raise ValueError("normal model needs params")
        if self.model == "generalized_roy" and self.roy is None:
            raise ValueError("generalized_roy model needs roy")
        return self


class EstimateConfig(StrictModel):
    dataset: str
    estimators: List[Literal["heckman", "semiparametric", "liv", "concave"]] = ["heckman"]
    covariate_names: List[str] = []
    subsidy_name: str = "subsidy"
    degree: int = Field(default=3, ge=2, le=5)
    bandwidth: Optional[float] = Field(default=None, gt=0.0)
    u_grid_n: int = Field(default=99, ge=2)
    concave_regressor: Literal["propensity", "subsidy"] = "propensity"
    max_knots: int = Field(default=512, ge=3)
    plot: bool = True


class SolveConfig(StrictModel):
    params: Optional[SelectionParams] = None
    mte: MteConfig
    propensity: PropensityConfig
    cost: CostConfig = CostConfig()
    cells: List[CellConfig] = Field(min_length=1)
    action_space: Tuple[float, float]
    solver: Literal["auto", "positive", "negative", "general"] = "auto"
    fallback: bool = False
    grid_n: Optional[int] = Field(default=None, ge=64)
    baseline: Optional[float] = None
    probes: List[float] = []
    plot: bool = True


class CompareConfig(StrictModel):
    params: Optional[SelectionParams] = None
    mte: MteConfig
    propensity: PropensityConfig
    cells: List[CellConfig] = Field(min_length=1)
    z_range: Tuple[float, float]
    plot: bool = True


class IdentifiedSetConfig(StrictModel):
    """Knot values are pinned explicitly (by knot index) or read off `mte` inside `region`."""

    u_grid: List[float] = Field(min_length=2)
    pinned: Dict[int, float] = {}
    region: List[Tuple[float, float]] = []
    shape: Shape = "none"
    bounds: Optional[Tuple[float, float]] = None


class RuleConfig(StrictModel):
    name: str
    assignment: List[float]


class RankConfig(StrictModel):
    params: Optional[SelectionParams] = None
    mte: Optional[MteConfig] = None
    propensity: PropensityConfig
    identified_set: IdentifiedSetConfig
    cost: CostConfig = CostConfig(kind="zero")
    cells: List[CellConfig] = Field(min_length=1)
    action_space: Tuple[float, float]
    rules: List[RuleConfig] = Field(min_length=1)

    @model_validator(mode="after")
    def check_rules(self):
        for rule in self.rules:
            if len(rule.assignment) != len(self.cells):
                raise ValueError(f"rule {rule.name!r} needs one assignment per cell")
        if self.identified_set.region and self.mte is None:
            raise ValueError("pinning by region needs an mte source")
        return self
