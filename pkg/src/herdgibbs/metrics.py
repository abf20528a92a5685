"""Sample-quality measures: the kernel herding error and the normalized L2 distance."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._io import write_csv
from ._validation import ContractViolation, NumericalError, check_points
from .kernels import double_expectation, gm_inner_product, smoothed_mixture
from .mixtures import GaussianMixture, flushed_exp

INV_HERDING = "inv_herding_error"
NORMALIZED_L2 = "normalized_l2"

# round-off band inside which a negative squared error is clamped to zero
_RADICAND_TOL = 1e-12


@dataclass
class ErrorSeries:
    metric_name: str
    sample_counts: list
    values: list

    def __post_init__(self):
        counts = [int(t) for t in self.sample_counts]
        values = [float(v) for v in self.values]
        if len(counts) != len(values):
            raise ContractViolation("sample_counts and values differ in length")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ContractViolation("sample_counts must be strictly increasing")
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise ContractViolation(f"{self.metric_name} values must be finite and nonnegative")
        self.sample_counts = counts
        self.values = values


def _check_grid(grid, n):
    grid = [int(t) for t in grid]
    if not grid:
        raise ContractViolation("empty sample grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ContractViolation("sample grid must be strictly increasing")
    if grid[0] < 1 or grid[-1] > n:
        raise ContractViolation(f"sample grid must lie in [1, {n}], got {grid[0]}..{grid[-1]}")
    return np.array(grid)


def _sqrt_radicand(r):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < -_RADICAND_TOL):
        raise NumericalError(f"negative squared error {r.min()!r}; kernel normalization is inconsistent")
    return np.sqrt(np.maximum(r, 0.0))


def _cumulative_pair_sums(K):
    """``S[t-1] = sum_{s, s' < t} K[s, s']`` for every prefix length t."""
    lower = np.tril(K, -1).sum(axis=1)
    return np.cumsum(2.0 * lower + np.diag(K))


def herding_error(kern, gm, samples, t=None):
    """Kernel herding error ``E_t`` of the first ``t`` samples."""
    X = check_points(samples, gm.dim, "samples")
    t = X.shape[0] if t is None else int(t)
    if not 1 <= t <= X.shape[0]:
        raise ContractViolation(f"t must be in [1, {X.shape[0]}], got {t}")
    X = X[:t]
    first = double_expectation(kern, gm)
    second = smoothed_mixture(kern, gm).pdf(X).sum()
    third = kern.pairwise(X, X).sum()
    radicand = first - 2.0 * second / t + third / t**2
    return float(_sqrt_radicand(radicand)[0])


def herding_error_curve(kern, gm, samples, grid):
    """``E_t`` at every ``t`` in ``grid`` using cumulative sums over one pass."""
    X = check_points(samples, gm.dim, "samples")
    grid = _check_grid(grid, X.shape[0])
    X = X[: grid[-1]]
    first = double_expectation(kern, gm)
    second = np.cumsum(smoothed_mixture(kern, gm).pdf(X))
    third = _cumulative_pair_sums(kern.pairwise(X, X))
    idx = grid - 1
    radicand = first - 2.0 * second[idx] / grid + third[idx] / grid.astype(float) ** 2
    return _sqrt_radicand(radicand)


def sample_kde(samples, kern):
    """Equal-weight mixture with one ``N(x_s, sigma_k^2 I)`` per sample."""
    X = np.asarray(samples, dtype=float)
    n, d = X.shape
    return GaussianMixture(np.full(n, 1.0 / n), X, np.broadcast_to(kern.variance * np.eye(d), (n, d, d)))


def normalized_l2_between(p, q):
    """``sqrt(2 - 2 <p, q> / (|p| |q|))`` for two mixtures."""
    pq = gm_inner_product(p, q)
    pp = gm_inner_product(p, p)
    qq = gm_inner_product(q, q)
    return float(_sqrt_radicand(2.0 - 2.0 * pq / np.sqrt(pp * qq))[0])


def _l2_parts(gm, X, kern):
    # <p, q_t> is the sample mean of the mean embedding; <q_t, q_t> pairs
    # samples through a Gaussian with doubled kernel variance
    cross = smoothed_mixture(kern, gm).pdf(X)
    pair_var = 2.0 * kern.variance
    sq = cdist(X, X, "sqeuclidean")
    pair = flushed_exp(-0.5 * X.shape[1] * np.log(2.0 * np.pi * pair_var) - 0.5 * sq / pair_var)
    return cross, pair


def normalized_l2(gm, samples, kern):
    """Normalized L2 distance between ``gm`` and the kernel density of ``samples``."""
    X = check_points(samples, gm.dim, "samples")
    return float(normalized_l2_curve(gm, X, kern, [X.shape[0]])[0])


def normalized_l2_curve(gm, samples, kern, grid):
    X = check_points(samples, gm.dim, "samples")
    grid = _check_grid(grid, X.shape[0])
    X = X[: grid[-1]]
    pp = gm_inner_product(gm, gm)
    cross, pair = _l2_parts(gm, X, kern)
    idx = grid - 1
    pq = np.cumsum(cross)[idx] / grid
    qq = _cumulative_pair_sums(pair)[idx] / grid.astype(float) ** 2
    cos = pq / np.sqrt(pp * qq)
    return _sqrt_radicand(2.0 - 2.0 * np.minimum(cos, 1.0))


def error_curves(gm, kern, sample_sets, grid):
    """Both error metrics along ``grid`` for every method.

    ``sample_sets`` maps a method name to an (n, d) sample array, or to a
    list of such arrays (repeated random runs) whose metric values are
    averaged per grid point. The herding error is reported inverted.
    """
    out = {}
    for method, sets in sample_sets.items():
        if isinstance(sets, np.ndarray) and sets.ndim == 2:
            sets = [sets]
        inv = np.mean([1.0 / herding_error_curve(kern, gm, X, grid) for X in sets], axis=0)
        l2 = np.mean([normalized_l2_curve(gm, X, kern, grid) for X in sets], axis=0)
        out[method] = (ErrorSeries(INV_HERDING, list(grid), inv), ErrorSeries(NORMALIZED_L2, list(grid), l2))
    return out


def average_curves(curve_maps):
    """Per-method, per-t mean over several :func:`error_curves` results."""
    curve_maps = list(curve_maps)
    out = {}
    for method in curve_maps[0]:
        pair = []
        for k in range(2):
            series = [cm[method][k] for cm in curve_maps]
            values = np.mean([s.values for s in series], axis=0)
            pair.append(ErrorSeries(series[0].metric_name, series[0].sample_counts, values))
        out[method] = tuple(pair)
    return out


def curve_rows(curves):
    rows = []
    for method, pair in curves.items():
        for series in pair:
            for t, v in zip(series.sample_counts, series.values):
                rows.append([method, series.metric_name, str(t), float(v)])
    return rows


def write_curves_csv(path, curves):
    write_csv(path, ["method", "metric", "t", "value"], curve_rows(curves))
