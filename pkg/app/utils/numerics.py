"""
Deterministic numerical kernels shared by every helper module.

All functions are pure: no module state, safe to call from worker threads.
"""
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg, optimize, special

from app.config import settings
from app.exceptions import (
    BracketError,
    ComputationError,
    ConvergenceError,
    DomainError,
    InfeasibleError,
    QuadratureError,
    RankDeficiencyError,
    SeparationError,
    UnboundedError,
)

ArrayLike = Union[np.ndarray, Sequence[float], float]

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Grid:
    """Knots `points` (strictly increasing) carrying `values`."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if points.ndim != 1 or points.shape != values.shape:
            raise DomainError("Grid points and values must be 1-d arrays of equal length")
        if points.size < 2:
            raise DomainError("Grid needs at least two knots")
        if not np.all(np.isfinite(points)) or np.any(np.diff(points) <= 0):
            raise DomainError("Grid points must be finite and strictly increasing")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    @property
    def lower(self) -> float:
        return float(self.points[0])

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    def interpolate(self, t: ArrayLike) -> np.ndarray:
        # np.interp holds the end values flat outside [lower, upper]
        return np.interp(np.asarray(t, dtype=float), self.points, self.values)

    def min_spacing(self) -> float:
        return float(np.min(np.diff(self.points)))


def norm_cdf(x: ArrayLike) -> Union[np.ndarray, float]:
    return special.ndtr(x)


def norm_pdf(x: ArrayLike) -> Union[np.ndarray, float]:
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def norm_quantile(p: ArrayLike) -> Union[np.ndarray, float]:
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(~np.isfinite(arr)):
        raise DomainError("norm_quantile requires 0 < p < 1", {"p": np.atleast_1d(arr).tolist()[:5]})
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def quad_integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: Optional[float] = None,
    points: Optional[Iterable[float]] = None,
) -> float:
    """
    Adaptive Gauss-Kronrod quadrature of `f` over [a, b].

    Args:
        f: Scalar integrand, bounded and piecewise continuous on [a, b].
        a, b: Limits with a <= b.
        tol: Absolute tolerance (defaults to settings.QUAD_TOL).
        points: Optional interior break points (knots, kinks, sign changes).

    Returns:
        The integral. Raises QuadratureError when the error estimate stays above tolerance.
    """
    tol = settings.QUAD_TOL if tol is None else tol
    if b < a:
        raise DomainError(f"quad_integrate needs a <= b, got [{a}, {b}]")
    if b == a:
        return 0.0
    breaks = None
    if points is not None:
        inner = sorted({float(p) for p in points if a < p < b})
        breaks = inner or None
    value, abserr, info, *rest = integrate.quad(
        f, a, b, epsabs=tol, epsrel=1e-12, limit=200, points=breaks, full_output=1
    )
    if abserr > max(tol, 1e-10 * abs(value)):
        message = rest[0] if rest else "tolerance not met"
        raise QuadratureError(
            f"Quadrature on [{a}, {b}] stopped with error estimate {abserr:.3e}: {message}",
            {"abserr": abserr, "subintervals": int(info.get("last", 0))},
        )
    return float(value)


def find_root_bracketed(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Optional[float] = None,
) -> float:
    """Brent root of `f` on a sign-changing bracket [lo, hi]."""
    tol = settings.ROOT_TOL if tol is None else tol
    if lo > hi:
        lo, hi = hi, lo
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"No sign change on [{lo}, {hi}]: f(lo)={f_lo:.6g}, f(hi)={f_hi:.6g}",
            {"lo": lo, "hi": hi, "f_lo": float(f_lo), "f_hi": float(f_hi)},
        )
    return float(optimize.brentq(f, lo, hi, xtol=tol, maxiter=500))


def ols_fit(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Least squares through a reduced QR factorisation; rank is checked on R's diagonal."""
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DomainError("design rows must match response length")
    if X.shape[0] < X.shape[1]:
        raise RankDeficiencyError("Fewer rows than columns", column=X.shape[0])
    q, r = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(r))
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    weak = np.flatnonzero(diag <= 1e-10 * scale)
    if weak.size:
        column = int(weak[0])
        raise RankDeficiencyError(f"Design is rank deficient at column {column}", column=column)
    return linalg.solve_triangular(r, q.T @ y)


def probit_loglik(design: np.ndarray, choices: np.ndarray, beta: np.ndarray) -> float:
    q = 2.0 * np.asarray(choices, dtype=float) - 1.0
    return float(np.sum(special.log_ndtr(q * (design @ beta))))


def probit_fit(
    design: np.ndarray,
    choices: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> np.ndarray:
    """
    Newton-Raphson maximum likelihood for P(D=1|x) = Phi(x'beta).

    Starts at zero and halves the step until the log-likelihood improves.
    Converged when the per-observation gradient norm is <= tol.
    """
    X = np.asarray(design, dtype=float)
    d = np.asarray(choices, dtype=float)
    if not np.all((d == 0) | (d == 1)):
        raise DomainError("probit choices must be 0/1")
    if d.min() == d.max():
        raise SeparationError("Only one choice value present", trace=[])
    n = X.shape[0]
    q = 2.0 * d - 1.0
    beta = np.zeros(X.shape[1])
    loglik = probit_loglik(X, d, beta)
    trace: List[float] = [loglik]

    for _ in range(max_iter):
        eta = X @ beta
        t = q * eta
        # inverse Mills ratio phi(t)/Phi(t) evaluated in log space
        mills = np.exp(-0.5 * t * t - 0.5 * np.log(2 * np.pi) - special.log_ndtr(t))
        # a coefficient vector that classifies every row correctly means no finite MLE
        if np.all(t > 0):
            raise SeparationError("Choices are perfectly separated by the design", trace=trace)
        grad = X.T @ (q * mills)
        if np.linalg.norm(grad) / n <= tol:
            return beta
        weights = mills * (mills + t)
        hessian = (X * weights[:, None]).T @ X
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("Probit information matrix is singular", trace=trace)

        scale = 1.0
        while scale > 1e-10:
            candidate = beta + scale * step
            cand_loglik = probit_loglik(X, d, candidate)
            if cand_loglik >= loglik:
                break
            scale *= 0.5
        else:
            # no ascent left along the Newton direction: numerically at the optimum
            return beta
        beta, loglik = candidate, cand_loglik
        trace.append(loglik)

    if loglik / n > -1e-8:
        raise SeparationError("Likelihood approaches its supremum without converging", trace=trace)
    raise ConvergenceError(f"Probit Newton iterations did not converge in {max_iter} steps", trace=trace)


def lp_min_linear(
    objective: Sequence[float],
    equalities: Sequence[Tuple[Sequence[float], float]] = (),
    inequalities: Sequence[Tuple[Sequence[float], float]] = (),
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None,
) -> Tuple[float, np.ndarray]:
    """
    Minimise objective'm subject to a'm = b (equalities) and a'm <= b (inequalities).

    Variables are free unless `bounds` is given. Solved by the HiGHS dual simplex.

    Returns:
        (minimum value, minimiser)
    """
    c = np.asarray(objective, dtype=float)
    n = c.size
    A_eq = np.array([row for row, _ in equalities], dtype=float).reshape(-1, n) if equalities else None
    b_eq = np.array([rhs for _, rhs in equalities], dtype=float) if equalities else None
    A_ub = np.array([row for row, _ in inequalities], dtype=float).reshape(-1, n) if inequalities else None
    b_ub = np.array([rhs for _, rhs in inequalities], dtype=float) if inequalities else None
    var_bounds = list(bounds) if bounds is not None else [(None, None)] * n

    res = optimize.linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=var_bounds, method="highs-ds"
    )
    if res.status == 4 and "unbounded or infeasible" in str(res.message).lower():
        # presolve could not tell the two apart; a zero objective settles feasibility
        feasibility = optimize.linprog(
            np.zeros(n), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=var_bounds, method="highs-ds"
        )
        if feasibility.status == 2:
            raise InfeasibleError("Linear program is infeasible")
        if feasibility.status == 0:
            raise UnboundedError("Linear program is unbounded in the objective direction")
    if res.status == 2:
        raise InfeasibleError("Linear program is infeasible")
    if res.status == 3:
        raise UnboundedError("Linear program is unbounded in the objective direction")
    if res.status != 0:
        raise ComputationError(f"Linear program failed: {res.message}")

    m = np.asarray(res.x, dtype=float)
    feas_tol = 1e-7 * (1.0 + np.max(np.abs(m), initial=0.0))
    if A_eq is not None and np.max(np.abs(A_eq @ m - b_eq)) > feas_tol:
        raise ComputationError("LP solution violates equality constraints")
    if A_ub is not None and np.max(A_ub @ m - b_ub) > feas_tol:
        raise ComputationError("LP solution violates inequality constraints")
    return float(c @ m), m
