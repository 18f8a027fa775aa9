"""
Evaluable MTE curves and propensity functions.

Curves map (x, u) to the marginal treatment effect; propensities map (x, w, z) to
take-up. Both are keyed by covariate tuples; an empty tuple means "no covariates".
"""
from abc import ABC, abstractmethod
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, special

from app.config import settings
from app.exceptions import DomainError, InvertibilityError
from app.utils.numerics import ArrayLike, Grid, find_root_bracketed, norm_cdf, norm_pdf, quad_integrate

Key = Tuple[float, ...]


def as_key(values: Optional[Iterable[float]]) -> Key:
    if values is None:
        return ()
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


def monotone_grid(n: Optional[int] = None) -> np.ndarray:
    """Midpoints of n equal cells of [0, 1], so that quantile-based curves stay finite."""
    n = n or settings.MONOTONE_GRID_N
    return (np.arange(n) + 0.5) / n


def _pdf_of_quantile(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(norm_pdf(special.ndtri(p)))


class MteCurve(ABC):
    """Map (x, u) -> MTE. `shape` is the declared monotonicity in u."""

    shape: str = "none"

    @abstractmethod
    def evaluate(self, x: Sequence[float], u: ArrayLike):
        ...

    def integral(self, x: Sequence[float], a: float, b: float) -> float:
        return quad_integrate(lambda t: float(self.evaluate(x, t)), a, b, points=self.breakpoints(x))

    def breakpoints(self, x: Sequence[float]) -> Optional[np.ndarray]:
        return None

    def extrapolated(self, x: Sequence[float], a: float, b: float) -> bool:
        """True when [a, b] reaches u-values the curve is not backed by data for."""
        return False

    def scale(self, x: Sequence[float]) -> float:
        values = np.asarray(self.evaluate(x, monotone_grid()), dtype=float)
        return max(float(np.max(np.abs(values))), 1e-12)

    def zero_crossing(self, x: Sequence[float], eps: float = 1e-10) -> float:
        """Root of a decreasing MTE(x, .) in [0, 1], clipped to 0 or 1 when the curve is one-signed."""
        lo, hi = eps, 1.0 - eps
        f_lo, f_hi = float(self.evaluate(x, lo)), float(self.evaluate(x, hi))
        if f_lo < 0:
            return 0.0
        if f_hi >= 0:
            return 1.0
        return find_root_bracketed(lambda t: float(self.evaluate(x, t)), lo, hi)

    def verify_shape(self, x: Sequence[float], shape: Optional[str] = None, n: Optional[int] = None) -> bool:
        """Check the declared (or given) monotonicity on an n-point midpoint grid."""
        shape = shape or self.shape
        if shape == "none":
            return True
        values = np.asarray(self.evaluate(x, monotone_grid(n)), dtype=float)
        slack = 1e-12 * max(1.0, float(np.max(np.abs(values))))
        steps = np.diff(values)
        if shape == "decreasing":
            return bool(np.all(steps <= slack))
        return bool(np.all(steps >= -slack))


class NormalParametricMte(MteCurve):
    """MTE(x, u) = [1, x]'level_coef - slope * Phi^-1(u)."""

    def __init__(self, level_coef: Sequence[float], slope: float):
        self.level_coef = np.asarray(level_coef, dtype=float)
        self.slope = float(slope)
        if self.slope > 0:
            self.shape = "decreasing"
        elif self.slope < 0:
            self.shape = "increasing"
        else:
            self.shape = "none"

    def level(self, x: Sequence[float]) -> float:
        row = np.concatenate([[1.0], as_key(x)])
        if row.size != self.level_coef.size:
            raise DomainError(f"covariate cell {tuple(x)} does not match {self.level_coef.size - 1} coefficients")
        return float(row @ self.level_coef)

    def evaluate(self, x, u):
        out = self.level(x) - self.slope * special.ndtri(np.asarray(u, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, x, a, b):
        if b < a:
            raise DomainError(f"integral needs a <= b, got [{a}, {b}]")
        a, b = max(a, 0.0), min(b, 1.0)
        if b <= a:
            return 0.0
        # the antiderivative of Phi^-1 is -phi(Phi^-1)
        return self.level(x) * (b - a) - self.slope * (_pdf_of_quantile(a) - _pdf_of_quantile(b))


class PolyLambdaPrimeMte(MteCurve):
    """MTE(x, u) = [1, x]'level_coef + sum_j c_j u^j, coefficients in ascending powers."""

    def __init__(self, level_coef: Sequence[float], lambda_prime: Sequence[float], shape: Optional[str] = None):
        self.level_coef = np.asarray(level_coef, dtype=float)
        self.lambda_prime = Polynomial(np.asarray(lambda_prime, dtype=float))
        self._antiderivative = self.lambda_prime.integ()
        self.shape = shape or self._infer_shape()

    def _infer_shape(self) -> str:
        slope = self.lambda_prime.deriv()(monotone_grid())
        if np.allclose(slope, 0.0, atol=1e-14):
            return "none"
        if np.all(slope <= 0):
            return "decreasing"
        if np.all(slope >= 0):
            return "increasing"
        return "none"

    def level(self, x):
        row = np.concatenate([[1.0], as_key(x)])
        if row.size != self.level_coef.size:
            raise DomainError(f"covariate cell {tuple(x)} does not match {self.level_coef.size - 1} coefficients")
        return float(row @ self.level_coef)

    def evaluate(self, x, u):
        out = self.level(x) + self.lambda_prime(np.asarray(u, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, x, a, b):
        if b < a:
            raise DomainError(f"integral needs a <= b, got [{a}, {b}]")
        return self.level(x) * (b - a) + float(self._antiderivative(b) - self._antiderivative(a))


class GridCurveMte(MteCurve):
    """
    Piecewise-linear curve per x-cell, with a mask of knots backed by data.

    Knots outside the mask carry filled-in values; any integral that touches them is
    reported as extrapolation.
    """

    def __init__(
        self,
        grids: Dict[Key, Grid],
        masks: Optional[Dict[Key, np.ndarray]] = None,
        shape: str = "none",
        metadata: Optional[Dict[str, object]] = None,
    ):
        self.grids = {as_key(k): g for k, g in grids.items()}
        given = {as_key(k): np.asarray(m, dtype=bool) for k, m in (masks or {}).items()}
        self.masks = {}
        for key, grid in self.grids.items():
            mask = given.get(key, np.ones(grid.points.size, dtype=bool))
            if mask.shape != grid.points.shape:
                raise DomainError("identified mask must match grid knots")
            self.masks[key] = mask
        self.shape = shape
        self.metadata = metadata or {}

    def grid(self, x) -> Grid:
        key = as_key(x)
        if key not in self.grids:
            raise DomainError(f"no MTE grid for covariate cell {key}")
        return self.grids[key]

    def evaluate(self, x, u):
        out = self.grid(x).interpolate(u)
        return float(out) if np.ndim(out) == 0 else out

    def breakpoints(self, x):
        return self.grid(x).points

    def integral(self, x, a, b):
        if b < a:
            raise DomainError(f"integral needs a <= b, got [{a}, {b}]")
        if b == a:
            return 0.0
        grid = self.grid(x)
        inner = grid.points[(grid.points > a) & (grid.points < b)]
        knots = np.concatenate([[a], inner, [b]])
        return float(integrate.trapezoid(grid.interpolate(knots), knots))

    def identified_range(self, x) -> Optional[Tuple[float, float]]:
        grid, mask = self.grid(x), self.masks[as_key(x)]
        if not mask.any():
            return None
        return float(grid.points[mask].min()), float(grid.points[mask].max())

    def extrapolated(self, x, a, b):
        grid, mask = self.grid(x), self.masks[as_key(x)]
        hull = self.identified_range(x)
        if hull is None:
            return True
        tol = 1e-12
        if a < hull[0] - tol or b > hull[1] + tol:
            return True
        inside = (grid.points >= a - tol) & (grid.points <= b + tol)
        return bool(np.any(inside & ~mask))

    def scale(self, x):
        return max(float(np.max(np.abs(self.grid(x).values))), 1e-12)


class FunctionMte(MteCurve):
    """Wraps a vectorised callable u -> MTE(u); the covariate cell is ignored."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], shape: str = "none", points: Sequence[float] = ()):
        self.fn = fn
        self.shape = shape
        self._points = np.asarray(points, dtype=float)

    def evaluate(self, x, u):
        out = np.asarray(self.fn(np.asarray(u, dtype=float)), dtype=float)
        if np.ndim(u) == 0:
            return float(out)
        return np.broadcast_to(out, np.shape(u)).copy()

    def breakpoints(self, x):
        return self._points if self._points.size else None


# ---------------------------------------------------------------- propensities


class PropensityFn(ABC):
    """Take-up map g(x, w, z), strictly increasing in z on `z_domain`."""

    @abstractmethod
    def evaluate(self, x: Sequence[float], w: Sequence[float], z: ArrayLike):
        ...

    @abstractmethod
    def derivative(self, x: Sequence[float], w: Sequence[float], z: float) -> float:
        ...

    def z_domain(self, x: Sequence[float], w: Sequence[float]) -> Tuple[float, float]:
        return -np.inf, np.inf

    def evaluate_rows(self, X: np.ndarray, W: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """g for every dataset row, looping over distinct (x, w) cells."""
        X = np.asarray(X, dtype=float).reshape(len(Z), -1)
        W = np.asarray(W, dtype=float).reshape(len(Z), -1)
        out = np.empty(len(Z))
        cells = np.hstack([X, W])
        if cells.shape[1] == 0:
            return np.asarray(self.evaluate((), (), Z), dtype=float)
        unique, inverse = np.unique(cells, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        k = X.shape[1]
        for idx, row in enumerate(unique):
            sel = inverse == idx
            out[sel] = self.evaluate(row[:k], row[k:], Z[sel])
        return out

    def check_domain(self, x, w, z: ArrayLike) -> None:
        lo, hi = self.z_domain(x, w)
        arr = np.asarray(z, dtype=float)
        slack = 1e-12 * max(1.0, abs(lo) if np.isfinite(lo) else 1.0, abs(hi) if np.isfinite(hi) else 1.0)
        if np.any(arr < lo - slack) or np.any(arr > hi + slack):
            raise DomainError(
                f"subsidy outside the propensity domain [{lo}, {hi}] for cell x={tuple(x)} w={tuple(w)}",
                {"z": np.atleast_1d(arr).tolist()[:5], "domain": [lo, hi]},
            )

    def inverse(self, x, w, u: float, lo: float, hi: float) -> float:
        """The subsidy z in [lo, hi] with g(x, w, z) = u; clipped to the ends when u is not reachable."""
        g_lo, g_hi = float(self.evaluate(x, w, lo)), float(self.evaluate(x, w, hi))
        if u <= g_lo:
            return lo
        if u >= g_hi:
            return hi
        return find_root_bracketed(lambda t: float(self.evaluate(x, w, t)) - u, lo, hi)

    def is_concave(self, x, w, lo: float, hi: float, n: Optional[int] = None, tol: float = 1e-9) -> bool:
        zs = np.linspace(lo, hi, n or settings.MONOTONE_GRID_N)
        values = np.asarray(self.evaluate(x, w, zs), dtype=float)
        return bool(np.all(np.diff(values, 2) <= tol))

    def is_increasing(self, x, w, lo: float, hi: float, n: Optional[int] = None) -> bool:
        zs = np.linspace(lo, hi, n or settings.MONOTONE_GRID_N)
        return bool(np.all(np.diff(np.asarray(self.evaluate(x, w, zs), dtype=float)) > 0))


class ProbitPropensity(PropensityFn):
    """g = Phi([1, x]'beta_d + w'beta_w + gamma * z)."""

    def __init__(self, beta_d: Sequence[float], gamma: float, beta_w: Sequence[float] = ()):
        self.beta_d = np.asarray(beta_d, dtype=float)
        self.beta_w = np.asarray(beta_w, dtype=float)
        self.gamma = float(gamma)
        self.warnings = []

    def index(self, x, w, z):
        x, w = as_key(x), as_key(w)
        if len(x) != self.beta_d.size - 1 or len(w) != self.beta_w.size:
            raise DomainError(f"cell x={x} w={w} does not match the choice equation dimensions")
        base = self.beta_d[0] + float(np.dot(x, self.beta_d[1:])) + float(np.dot(w, self.beta_w))
        return base + self.gamma * np.asarray(z, dtype=float)

    def evaluate(self, x, w, z):
        out = norm_cdf(self.index(x, w, z))
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x, w, z):
        return float(self.gamma * norm_pdf(self.index(x, w, z)))

    def evaluate_rows(self, X, W, Z):
        X = np.asarray(X, dtype=float).reshape(len(Z), -1)
        W = np.asarray(W, dtype=float).reshape(len(Z), -1)
        idx = self.beta_d[0] + X @ self.beta_d[1:] + W @ self.beta_w + self.gamma * np.asarray(Z, dtype=float)
        return norm_cdf(idx)


class GridPropensity(PropensityFn):
    """Tabulated take-up per (x, w) cell, linear between subsidy knots."""

    def __init__(self, grids: Dict[Tuple[Key, Key], Grid]):
        self.grids = {}
        for (x, w), grid in grids.items():
            if np.any(np.diff(grid.values) <= 0):
                raise InvertibilityError(f"take-up grid for x={x} w={w} is not strictly increasing in z")
            if grid.values.min() < 0 or grid.values.max() > 1:
                raise DomainError(f"take-up grid for x={x} w={w} leaves [0, 1]")
            self.grids[(as_key(x), as_key(w))] = grid

    def grid(self, x, w) -> Grid:
        key = (as_key(x), as_key(w))
        if key not in self.grids:
            raise DomainError(f"no take-up grid for cell x={key[0]} w={key[1]}")
        return self.grids[key]

    def z_domain(self, x, w):
        grid = self.grid(x, w)
        return grid.lower, grid.upper

    def evaluate(self, x, w, z):
        self.check_domain(x, w, z)
        out = self.grid(x, w).interpolate(z)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x, w, z):
        grid = self.grid(x, w)
        h = grid.min_spacing()
        lo = max(grid.lower, z - h)
        hi = min(grid.upper, z + h)
        slope = (float(grid.interpolate(hi)) - float(grid.interpolate(lo))) / (hi - lo)
        if slope <= 0:
            raise InvertibilityError(f"nonpositive take-up slope at z={z}")
        return slope


class LinearPropensity(PropensityFn):
    """g = intercept + x'coef_x + w'coef_w + coef_z * z on a bounded subsidy domain."""

    def __init__(
        self,
        intercept: float,
        coef_z: float,
        domain: Tuple[float, float],
        coef_x: Sequence[float] = (),
        coef_w: Sequence[float] = (),
    ):
        if coef_z <= 0:
            raise InvertibilityError("linear take-up needs a positive subsidy coefficient")
        self.intercept = float(intercept)
        self.coef_z = float(coef_z)
        self.coef_x = np.asarray(coef_x, dtype=float)
        self.coef_w = np.asarray(coef_w, dtype=float)
        self.domain = (float(domain[0]), float(domain[1]))

    def z_domain(self, x, w):
        return self.domain

    def evaluate(self, x, w, z):
        self.check_domain(x, w, z)
        base = self.intercept + float(np.dot(as_key(x), self.coef_x)) + float(np.dot(as_key(w), self.coef_w))
        out = base + self.coef_z * np.asarray(z, dtype=float)
        if np.any(out < -1e-12) or np.any(out > 1 + 1e-12):
            raise DomainError(f"linear take-up leaves [0, 1] for x={tuple(x)} w={tuple(w)}")
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x, w, z):
        return self.coef_z


class FunctionPropensity(PropensityFn):
    """Wraps a callable g(x, w, z); the derivative is a central difference unless given."""

    def __init__(
        self,
        fn: Callable[[Key, Key, np.ndarray], np.ndarray],
        domain: Tuple[float, float] = (-np.inf, np.inf),
        dfn: Optional[Callable[[Key, Key, float], float]] = None,
    ):
        self.fn = fn
        self.dfn = dfn
        self.domain = domain

    def z_domain(self, x, w):
        return self.domain

    def evaluate(self, x, w, z):
        self.check_domain(x, w, z)
        out = self.fn(as_key(x), as_key(w), np.asarray(z, dtype=float))
        return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)

    def derivative(self, x, w, z):
        if self.dfn is not None:
            return float(self.dfn(as_key(x), as_key(w), z))
        h = 1e-6 * max(1.0, abs(z))
        lo, hi = max(self.domain[0], z - h), min(self.domain[1], z + h)
        return (float(self.evaluate(x, w, hi)) - float(self.evaluate(x, w, lo))) / (hi - lo)
