"""Multistart quasi-Newton maximization for the herding objectives.

Local runs use scipy's BFGS on the negated objective with a Wolfe line
search. Start points come from the target mixture's component means and
axis-aligned standard deviations.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from ._validation import ContractViolation, OptimizationError, check_vector
from .mixtures import conditional_params


@dataclass(frozen=True)
class OptimConfig:
    grad_tol: float = 1e-8
    max_iters: int = 200
    fd_step: float = 1e-5
    c1: float = 1e-4
    c2: float = 0.9

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ContractViolation("optim.grad_tol must be > 0")
        if int(self.max_iters) < 1:
            raise ContractViolation("optim.max_iters must be >= 1")
        if not self.fd_step > 0:
            raise ContractViolation("optim.fd_step must be > 0")
        if not 0 < self.c1 < self.c2 < 1:
            raise ContractViolation("optim line search needs 0 < c1 < c2 < 1")


class SmoothObjective:
    """A differentiable function of ``arity`` real arguments.

    When ``gradient_fn`` is omitted the gradient is taken by central
    differences with step ``fd_step``.
    """

    def __init__(self, value_fn: Callable, gradient_fn: Optional[Callable] = None, arity: int = 1,
                 fd_step: float = 1e-5):
        self.value_fn = value_fn
        self.gradient_fn = gradient_fn
        self.arity = int(arity)
        self.fd_step = fd_step

    def value(self, x):
        return float(self.value_fn(np.asarray(x, dtype=float)))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(x), dtype=float).reshape(self.arity)
        return central_difference(self.value, x, self.fd_step)

    def value_and_grad(self, x):
        return self.value(x), self.gradient(x)


def central_difference(fn, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = step
        grad[k] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return grad


class LocalMax(NamedTuple):
    x: np.ndarray
    value: float
    converged: bool


class MultistartResult(NamedTuple):
    x: np.ndarray
    value: float
    converged: bool
    start_index: int
    n_starts: int
    n_failed: int


def maximize(obj, start, cfg=None):
    """Local maximum of ``obj`` reached by BFGS ascent from ``start``.

    ``converged`` is true when the infinity norm of the gradient at the
    returned point is within ``cfg.grad_tol``. The returned value is never
    below the value at ``start``.
    """
    cfg = cfg or OptimConfig()
    x0 = check_vector(start, obj.arity, "start")

    def negated(x):
        v, g = obj.value_and_grad(x)
        if not (np.isfinite(v) and np.all(np.isfinite(g))):
            raise OptimizationError("objective or gradient is not finite", point=x)
        return -v, -g

    v0, g0 = negated(x0)
    res = minimize(
        negated, x0, jac=True, method="BFGS",
        options={"gtol": cfg.grad_tol, "maxiter": int(cfg.max_iters), "c1": cfg.c1, "c2": cfg.c2},
    )
    x = np.asarray(res.x, dtype=float).reshape(obj.arity)
    v, g = negated(x)
    if v > v0:
        x, v, g = x0, v0, g0
    converged = bool(np.max(np.abs(g)) <= cfg.grad_tol)
    return LocalMax(x, -float(v), converged)


def maximize_multistart(obj, starts, cfg=None, tie_tol=1e-12):
    """Best local maximum over all ``starts``.

    A later start replaces the incumbent only when it is better by more than
    ``tie_tol``, so the lowest-index start wins ties.
    """
    starts = np.asarray(starts, dtype=float)
    if starts.ndim == 1:
        starts = starts.reshape(-1, obj.arity)
    if starts.shape[0] == 0:
        raise ContractViolation("maximize_multistart needs at least one start")
    best = None
    best_idx = -1
    failures = []
    for idx, s in enumerate(starts):
        try:
            run = maximize(obj, s, cfg)
        except OptimizationError as exc:
            failures.append(exc)
            continue
        if best is None or run.value > best.value + tie_tol:
            best, best_idx = run, idx
    if best is None:
        raise OptimizationError(
            f"all {len(starts)} starts hit a non-finite objective", point=failures[0].point
        )
    return MultistartResult(best.x, best.value, best.converged, best_idx, len(starts), len(failures))


def scan_starts(values_fn, lo, hi, step, n_best=3):
    """Best local maxima of a vectorized 1-d function on a regular grid.

    Returns up to ``n_best`` grid points, highest value first, as an
    (n, 1) array. Used to add basin-finding starts to a 1-d multistart.
    """
    if not hi > lo or not step > 0:
        raise ContractViolation("scan needs lo < hi and a positive step")
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / step)) + 1)
    vals = np.asarray(values_fn(grid), dtype=float)
    padded = np.concatenate([[-np.inf], vals, [-np.inf]])
    peak = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] > padded[2:]) & np.isfinite(vals)
    idx = np.flatnonzero(peak)
    idx = idx[np.argsort(-vals[idx], kind="stable")][:n_best]
    return grid[idx].reshape(-1, 1)


def starts_from_1d_mixture(means, variances):
    """Three starts per component: the mean and the mean plus/minus one std."""
    sd = np.sqrt(variances)
    return np.stack([means, means + sd, means - sd], axis=1).reshape(-1, 1)


def heuristic_starts(gm, coordinate=None, condition_point=None):
    """Start points derived from the mixture's means and covariances.

    Without ``coordinate`` the result is, per component, the mean followed by
    ``mu +/- sqrt(Sigma_kk) e_k`` for every axis ``k``: ``M (2d + 1)`` rows.
    With ``coordinate`` (and ``condition_point``, the remaining ``d - 1``
    coordinates) the starts are the means and mean +/- std of each component
    of the 1-d conditional: ``3 M`` rows independent of ``d``.
    """
    if coordinate is None:
        sd = np.sqrt(np.diagonal(gm.covs, axis1=1, axis2=2))
        rows = []
        for mu, s in zip(gm.means, sd):
            rows.append(mu)
            for k in range(gm.dim):
                step = np.zeros(gm.dim)
                step[k] = s[k]
                rows.append(mu + step)
                rows.append(mu - step)
        return np.array(rows)
    if condition_point is None:
        raise ContractViolation("a conditioning point is required with a coordinate")
    coordinate = int(coordinate)
    if not 0 <= coordinate < gm.dim:
        raise ContractViolation(f"coordinate {coordinate} out of range")
    x_bar = check_vector(condition_point, gm.dim - 1, "condition_point")
    _, means, variances = conditional_params(gm, coordinate, x_bar)
    return starts_from_1d_mixture(means, variances)
