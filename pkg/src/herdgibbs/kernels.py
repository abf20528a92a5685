"""Isotropic Gaussian kernel and its closed-form expectations under mixtures.

The kernel is the normalized Gaussian density ``N(x; y, sigma_k^2 I)``, so it
factorizes over coordinates and every expectation against a Gaussian mixture
is again a Gaussian evaluation with inflated covariance.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import ContractViolation, check_points, check_positive, check_vector
from .mixtures import LOG_2PI, GaussianMixture, flushed_exp


@dataclass(frozen=True)
class IsotropicGaussianKernel:
    """Gaussian kernel with standard deviation ``sigma_k`` on ``dim`` coordinates.

    The same bandwidth applies to evaluations on any sub-vector, which is what
    makes the coordinate-wise factorization exact.
    """

    sigma_k: float
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sigma_k", check_positive(self.sigma_k, "sigma_k"))
        if int(self.dim) < 1:
            raise ContractViolation("kernel dim must be positive")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def variance(self):
        return self.sigma_k**2

    @property
    def bandwidth_matrix(self):
        return self.variance * np.eye(self.dim)

    def log_norm(self, n):
        """Log of the peak value ``(2 pi sigma_k^2)^(-n/2)``."""
        return -0.5 * n * (LOG_2PI + 2.0 * np.log(self.sigma_k))

    def evaluate(self, x, y):
        """``k(x, y)`` for two vectors of equal length."""
        x = check_vector(x, name="x")
        y = check_vector(y, name="y")
        if x.shape != y.shape:
            raise ContractViolation(f"kernel arguments differ in length: {x.size} vs {y.size}")
        sq = float(np.dot(x - y, x - y))
        return float(flushed_exp(self.log_norm(x.size) - 0.5 * sq / self.variance))

    __call__ = evaluate

    def log_pairwise(self, X, Y):
        """Matrix of ``log k(x_a, y_b)`` for rows of ``X`` (n, p) and ``Y`` (m, p)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        sq = cdist(X, Y, "sqeuclidean")
        return self.log_norm(X.shape[1]) - 0.5 * sq / self.variance

    def pairwise(self, X, Y):
        return flushed_exp(self.log_pairwise(X, Y))


def _check_dims(kern, gm):
    if kern.dim != gm.dim:
        raise ContractViolation(f"kernel dim {kern.dim} does not match mixture dim {gm.dim}")


def smoothed_mixture(kern, gm):
    """The mixture convolved with the kernel; its density is the mean embedding."""
    _check_dims(kern, gm)
    return gm.convolve(kern.variance)


def mean_embedding(kern, gm, x):
    """``E_{x' ~ p}[k(x, x')] = sum_i phi_i N(x; mu_i, Sigma_i + sigma_k^2 I)``.

    Accepts a single point (returns a float) or an (n, d) array of points.
    """
    _check_dims(kern, gm)
    return smoothed_mixture(kern, gm).pdf(x)


def mean_embedding_grad(kern, gm, x):
    """Gradient of :func:`mean_embedding` with respect to ``x``."""
    _check_dims(kern, gm)
    single = np.ndim(x) == 1 and (gm.dim > 1 or np.size(x) == 1)
    _, grad = smoothed_mixture(kern, gm).pdf_and_grad(check_points(x, gm.dim))
    return grad[0] if single else grad


def _log_overlaps(a, b, extra_var):
    """``log N(mu_i; nu_j, Sigma_i + Lambda_j + extra_var I)`` for all pairs, shape (Ma, Mb)."""
    d = a.dim
    diff = a.means[:, None, :] - b.means[None, :, :]
    covs = a.covs[:, None, :, :] + b.covs[None, :, :, :] + extra_var * np.eye(d)
    chol = np.linalg.cholesky(covs)
    z = np.linalg.solve(chol, diff[..., None])[..., 0]
    maha = np.sum(z * z, axis=-1)
    log_det = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    return -0.5 * (maha + d * LOG_2PI + log_det)


def _weighted_overlap(a, b, extra_var):
    terms = np.outer(a.weights, b.weights) * flushed_exp(_log_overlaps(a, b, extra_var))
    return float(terms.sum())


def double_expectation(kern, gm):
    """``E_{x, x' ~ p}[k(x, x')]`` in closed form."""
    _check_dims(kern, gm)
    return _weighted_overlap(gm, gm, kern.variance)


def gm_inner_product(a, b):
    """L2 inner product ``integral a(x) b(x) dx`` of two mixtures."""
    if not isinstance(a, GaussianMixture) or not isinstance(b, GaussianMixture):
        raise ContractViolation("gm_inner_product expects two GaussianMixture instances")
    if a.dim != b.dim:
        raise ContractViolation(f"mixture dims differ: {a.dim} vs {b.dim}")
    return _weighted_overlap(a, b, 0.0)
