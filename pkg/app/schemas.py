from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.exceptions import MissingCellError

Interval = Tuple[float, float]
Shape = Literal["none", "decreasing", "increasing"]


def format_key(values: Tuple[float, ...]) -> str:
    return "(" + ",".join(f"{v:g}" for v in values) + ")"


class Cell(BaseModel):
    """A discrete covariate cell (x, w) with its population weight."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    x: Tuple[float, ...] = ()
    w: Tuple[float, ...] = ()
    weight: float = Field(default=1.0, ge=0.0)
    label: Optional[str] = None

    @property
    def key(self) -> str:
        if self.label:
            return self.label
        return f"x={format_key(self.x)};w={format_key(self.w)}"

    @property
    def x_key(self) -> str:
        return format_key(self.x)


class Distribution(BaseModel):
    """Samplable marginal used by the simulators."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "bernoulli", "uniform", "normal", "categorical"]
    value: float = 0.0
    p: float = Field(default=0.5, ge=0.0, le=1.0)
    low: float = 0.0
    high: float = 1.0
    mean: float = 0.0
    sd: float = Field(default=1.0, gt=0.0)
    values: List[float] = []
    probs: List[float] = []

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform needs low < high")
        if self.kind == "categorical":
            if not self.values or len(self.values) != len(self.probs):
                raise ValueError("categorical needs matching values and probs")
            if abs(sum(self.probs) - 1.0) > 1e-9 or min(self.probs) < 0:
                raise ValueError("categorical probs must be nonnegative and sum to 1")
        return self

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "bernoulli":
            return (rng.random(n) < self.p).astype(float)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, n)
        if self.kind == "normal":
            return rng.normal(self.mean, self.sd, n)
        return rng.choice(np.asarray(self.values, dtype=float), size=n, p=np.asarray(self.probs))

    def support(self) -> Optional[List[Tuple[float, float]]]:
        """(value, probability) pairs for discrete kinds, None for continuous ones."""
        if self.kind == "constant":
            return [(self.value, 1.0)]
        if self.kind == "bernoulli":
            return [(0.0, 1.0 - self.p), (1.0, self.p)]
        if self.kind == "categorical":
            return list(zip(self.values, self.probs))
        return None

    def expectation(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "bernoulli":
            return self.p
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        if self.kind == "normal":
            return self.mean
        return float(np.dot(self.values, self.probs))


class SelectionParams(BaseModel):
    """
    Normal selection model. Coefficient vectors carry the intercept first.

    The selection shock V enters D = 1{[1,x]'betaD + z*gamma + V >= 0}; (U1, U0, V) ~ N(0, Sigma).
    """

    model_config = ConfigDict(extra="forbid")

    beta1: List[float]
    beta0: List[float]
    betaD: List[float]
    gamma: float = Field(gt=0.0)
    sigma1: float = Field(gt=0.0)
    sigma0: float = Field(gt=0.0)
    rho1: float = Field(ge=-1.0, le=1.0)
    rho0: float = Field(ge=-1.0, le=1.0)
    rho01: float = Field(default=0.0, ge=-1.0, le=1.0)

    @model_validator(mode="after")
    def check_dimensions(self):
        if not (len(self.beta1) == len(self.beta0) == len(self.betaD)) or not self.beta1:
            raise ValueError("beta1, beta0 and betaD must have the same nonzero length")
        return self

    @property
    def n_covariates(self) -> int:
        return len(self.betaD) - 1

    def covariance(self) -> np.ndarray:
        s1, s0 = self.sigma1, self.sigma0
        return np.array(
            [
                [s1 * s1, self.rho01 * s0 * s1, self.rho1 * s1],
                [self.rho01 * s0 * s1, s0 * s0, self.rho0 * s0],
                [self.rho1 * s1, self.rho0 * s0, 1.0],
            ]
        )

    def is_psd(self, tol: float = 1e-10) -> bool:
        return bool(np.min(np.linalg.eigvalsh(self.covariance())) >= -tol)

    @property
    def mte_slope(self) -> float:
        return self.rho1 * self.sigma1 - self.rho0 * self.sigma0

    @property
    def level_coef(self) -> np.ndarray:
        return np.asarray(self.beta1) - np.asarray(self.beta0)


class SubsidyRule(BaseModel):
    """Per-cell subsidy assignment on the action space [z_l, z_u]."""

    model_config = ConfigDict(extra="forbid")

    cells: List[Cell]
    assignment: List[float]
    action_space: Interval
    name: Optional[str] = None

    @model_validator(mode="after")
    def check_rule(self):
        if len(self.cells) != len(self.assignment):
            raise ValueError("one assignment per cell is required")
        z_l, z_u = self.action_space
        if z_l > z_u:
            raise ValueError("action space must satisfy z_l <= z_u")
        weights = [c.weight for c in self.cells]
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"cell weights must sum to 1, got {sum(weights)!r}")
        slack = 1e-12 * max(1.0, abs(z_l), abs(z_u))
        for cell, z in zip(self.cells, self.assignment):
            if z < z_l - slack or z > z_u + slack:
                raise ValueError(f"assignment {z} for {cell.key} outside [{z_l}, {z_u}]")
        if len({c.key for c in self.cells}) != len(self.cells):
            raise ValueError("cell keys must be unique")
        return self

    def z_for(self, cell: Cell) -> float:
        for candidate, z in zip(self.cells, self.assignment):
            if candidate.key == cell.key:
                return z
        raise MissingCellError(f"rule {self.name or 'unnamed'} has no cell {cell.key}", {"cells": [cell.key]})

    @classmethod
    def constant(cls, cells: List[Cell], z: float, action_space: Interval, name: Optional[str] = None):
        return cls(cells=cells, assignment=[z] * len(cells), action_space=action_space, name=name)


class CellWelfare(BaseModel):
    takeup: float
    subsidy: float
    gross: float
    cost: float
    net: float
    weight: float


class WelfareReport(BaseModel):
    """Decomposed welfare S = E[Y0] + gross - cost; baseline None means unknown."""

    gross: float
    baseline: Optional[float] = None
    cost: float
    net_above_baseline: float
    net: Optional[float] = None
    per_cell: Dict[str, CellWelfare]
    warnings: List[str] = []


class MonteCarloSummary(BaseModel):
    mean: float
    std_error: float
    n: int


class SolveResult(BaseModel):
    cell: str
    z_star: float
    u_star: float
    kind: Literal["interior", "corner_low", "corner_high"]
    lambda_at_solution: float
    welfare_at_solution: float
    solver: str


class HeckmanFit(BaseModel):
    betaD_hat: List[float]
    betaW_hat: List[float] = []
    gamma_hat: float
    beta1_hat: List[float]
    beta0_hat: List[float]
    rho1_sigma1: float
    rho0_sigma0: float
    rho1_hat: float
    rho0_hat: float
    sigma1_hat: float = Field(gt=0.0)
    sigma0_hat: float = Field(gt=0.0)
    n: int
    excluded_treated: int = 0
    excluded_untreated: int = 0
    clipped: List[str] = []
    warnings: List[str] = []

    def table_rows(self, covariate_names: List[str], subsidy_name: str = "subsidy") -> Dict[str, float]:
        """Flatten into the row names of the selection-model table."""
        rows: Dict[str, float] = {"choice.intercept": self.betaD_hat[0]}
        for name, value in zip(covariate_names, self.betaD_hat[1:]):
            rows[f"choice.{name}"] = value
        for j, value in enumerate(self.betaW_hat, start=1):
            rows[f"choice.w{j}"] = value
        rows[f"choice.{subsidy_name}"] = self.gamma_hat
        for prefix, beta in (("y0", self.beta0_hat), ("y1", self.beta1_hat)):
            rows[f"{prefix}.intercept"] = beta[0]
            for name, value in zip(covariate_names, beta[1:]):
                rows[f"{prefix}.{name}"] = value
        rows.update(
            {"rho0": self.rho0_hat, "rho1": self.rho1_hat, "sigma0": self.sigma0_hat, "sigma1": self.sigma1_hat}
        )
        return rows


class SemiparametricFit(BaseModel):
    beta1_hat: List[float]
    beta0_hat: List[float]
    theta_hat: List[float]  # coefficient of p**j at index j; j = 0, 1 are normalised to zero
    degree: int = Field(ge=2, le=5)
    propensity_beta: List[float] = []
    note: str = (
        "lambda has no constant; its linear term is absorbed into the level, "
        "so lambda' is reported up to an additive constant folded into x'(beta1-beta0)"
    )


class ThresholdPolicy(BaseModel):
    """Treat iff U_D <= u_star."""

    u_star: float = Field(ge=0.0, le=1.0)


class WelfareLadder(BaseModel):
    x_cell: str
    s_sub: float
    s_dir: float
    s_con: float
    s_fb: float
    identified_support: List[Interval]
    first_best_threshold: Optional[float] = None
    first_best_attained: bool = False
    ordering_holds: bool = True
    warnings: List[str] = []


class RankVerdict(BaseModel):
    pair: Tuple[str, str]
    verdict: Literal["left_weakly_better", "right_weakly_better", "equivalent", "incomparable"]
    v_min: float
    v_max: float
    tol: float
    bounds: Dict[str, Interval]
    cost_offset: float = 0.0
    certificates: Optional[Dict[str, List[float]]] = None


class PartialOrder(BaseModel):
    rules: List[str]
    edges: List[Tuple[str, str]]
    equivalent: List[Tuple[str, str]] = []
    incomparable: List[Tuple[str, str]] = []
    verdicts: List[RankVerdict] = []

    @field_validator("rules")
    @classmethod
    def unique_names(cls, names: List[str]) -> List[str]:
        if len(set(names)) != len(names):
            raise ValueError("rule names must be unique")
        return names
