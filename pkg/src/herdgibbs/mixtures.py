"""Gaussian mixture densities.

A :class:`GaussianMixture` is the target density of every sampler in this
package and also the representation of a sample kernel density estimate.
Instances are immutable; derived factorizations (Cholesky factors, precision
matrices, log-determinants) are computed once and cached.

Evaluation happens in log space and is exponentiated last. Terms whose log
value falls below ``LOG_FLUSH`` are flushed to zero so that far-separated
components never produce spurious underflow warnings or NaNs.
"""

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from ._validation import ContractViolation, NumericalError, check_points, check_vector

LOG_FLUSH = -700.0
LOG_2PI = np.log(2.0 * np.pi)

# weights whose sum is this close to one are kept bit-for-bit
_WEIGHT_KEEP_TOL = 1e-13
# weights further than this from summing to one are rejected
_WEIGHT_GATE_TOL = 1e-9


def flushed_exp(log_values):
    """``exp`` with values below ``LOG_FLUSH`` set exactly to zero."""
    arr = np.asarray(log_values, dtype=float)
    out = np.exp(np.maximum(arr, LOG_FLUSH))
    if out.ndim == 0:
        return 0.0 if arr < LOG_FLUSH else float(out)
    out[arr < LOG_FLUSH] = 0.0
    return out


def make_rng(seed):
    """Seeded PCG64 generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class MixtureGenConfig:
    """Parameters of the random mixture generator.

    Means are uniform on ``[mean_low, mean_high]^d``. Covariances are
    ``A A^T + cov_floor * I`` where the entries of ``A`` are uniform on
    ``[-factor_scale, factor_scale]`` and ``A`` is scaled by ``1/sqrt(d)``.
    Weights follow a symmetric Dirichlet with concentration ``dirichlet_alpha``.
    """

    mean_low: float = -5.0
    mean_high: float = 5.0
    factor_scale: float = 1.0
    cov_floor: float = 0.1
    dirichlet_alpha: float = 1.0

    def __post_init__(self):
        if not self.mean_low < self.mean_high:
            raise ContractViolation("mixture_gen.mean_low must be below mean_high")
        if self.factor_scale < 0:
            raise ContractViolation("mixture_gen.factor_scale must be >= 0")
        if self.cov_floor <= 0:
            raise ContractViolation("mixture_gen.cov_floor must be > 0")
        if self.dirichlet_alpha <= 0:
            raise ContractViolation("mixture_gen.dirichlet_alpha must be > 0")


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class GaussianMixture:
    """Weighted sum of multivariate normal densities.

    Parameters
    ----------
    weights : array of shape (M,)
        Nonnegative mixing weights. They must sum to one within 1e-9 and are
        renormalized on construction.
    means : array of shape (M, d)
    covs : array of shape (M, d, d)
        Symmetric positive definite covariance matrices.
    """

    def __init__(self, weights, means, covs):
        weights = np.asarray(weights, dtype=float).reshape(-1)
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if weights.size == 0:
            raise ContractViolation("a mixture needs at least one component")
        m = weights.size
        if means.ndim == 1:
            means = means.reshape(m, -1)
        if means.ndim != 2 or means.shape[0] != m:
            raise ContractViolation(f"means must have shape ({m}, d), got {means.shape}")
        d = means.shape[1]
        if d < 1:
            raise ContractViolation("mixture dimension must be positive")
        if covs.ndim == 1 and d == 1:
            covs = covs.reshape(m, 1, 1)
        if covs.shape != (m, d, d):
            raise ContractViolation(f"covs must have shape ({m}, {d}, {d}), got {covs.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means)) and np.all(np.isfinite(covs))):
            raise ContractViolation("mixture parameters must be finite")
        if np.any(weights < 0):
            raise ContractViolation("mixture weights must be nonnegative")

        total = weights.sum()
        if abs(total - 1.0) > _WEIGHT_GATE_TOL:
            raise ContractViolation(f"mixture weights sum to {total!r}, expected 1")
        if abs(total - 1.0) > _WEIGHT_KEEP_TOL:
            weights = weights / total

        asym = np.abs(covs - np.swapaxes(covs, 1, 2))
        if np.any(asym > 1e-12 * np.maximum(1.0, np.abs(covs))):
            raise ContractViolation("covariance matrices must be symmetric")
        try:
            chol = np.linalg.cholesky(covs)
        except np.linalg.LinAlgError:
            raise ContractViolation("covariance matrices must be positive definite") from None
        if not np.all(np.isfinite(chol)):
            raise ContractViolation("covariance matrices must be positive definite")

        self._weights = _readonly(weights)
        self._means = _readonly(means)
        self._covs = _readonly(covs)
        self._chol = _readonly(chol)

    # basic attributes

    @property
    def dim(self):
        return self._means.shape[1]

    @property
    def n_components(self):
        return self._weights.shape[0]

    @property
    def weights(self):
        return self._weights

    @property
    def means(self):
        return self._means

    @property
    def covs(self):
        return self._covs

    @property
    def chol(self):
        return self._chol

    @property
    def components(self):
        return tuple(
            GaussianComponent(float(w), mu, cov)
            for w, mu, cov in zip(self._weights, self._means, self._covs)
        )

    @classmethod
    def from_components(cls, components):
        components = list(components)
        return cls(
            [c.weight for c in components],
            [np.atleast_1d(c.mean) for c in components],
            [np.atleast_2d(c.cov) for c in components],
        )

    @classmethod
    def single(cls, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls([1.0], mean[None, :], cov[None, :, :])

    def __repr__(self):
        return f"GaussianMixture(dim={self.dim}, n_components={self.n_components})"

    # cached factorizations

    @cached_property
    def log_dets(self):
        diag = np.diagonal(self._chol, axis1=1, axis2=2)
        return 2.0 * np.log(diag).sum(axis=1)

    @cached_property
    def precisions(self):
        eye = np.broadcast_to(np.eye(self.dim), self._covs.shape)
        linv = np.linalg.solve(self._chol, eye)
        prec = np.swapaxes(linv, 1, 2) @ linv
        prec = 0.5 * (prec + np.swapaxes(prec, 1, 2))
        prec.setflags(write=False)
        return prec

    @cached_property
    def log_weights(self):
        with np.errstate(divide="ignore"):
            return np.log(self._weights)

    # evaluation

    def component_log_densities(self, X):
        """Matrix of ``log(phi_m) + log N(x_n; mu_m, Sigma_m)``, shape (n, M)."""
        X = check_points(X, self.dim)
        diff = X[:, None, :] - self._means[None, :, :]
        maha = np.einsum("nmi,mij,nmj->nm", diff, self.precisions, diff)
        maha = np.maximum(maha, 0.0)
        return self.log_weights - 0.5 * (maha + self.dim * LOG_2PI + self.log_dets)

    def logpdf(self, X):
        single = np.ndim(X) == 1 and (self.dim > 1 or np.size(X) == 1)
        out = logsumexp(self.component_log_densities(X), axis=1)
        return float(out[0]) if single else out

    def pdf(self, X):
        single = np.ndim(X) == 1 and (self.dim > 1 or np.size(X) == 1)
        out = flushed_exp(self.component_log_densities(X)).sum(axis=1)
        return float(out[0]) if single else out

    def pdf_and_grad(self, X):
        """Density values (n,) and gradients (n, d) at the rows of ``X``."""
        X = check_points(X, self.dim)
        terms = flushed_exp(self.component_log_densities(X))
        diff = X[:, None, :] - self._means[None, :, :]
        scaled = np.einsum("mij,nmj->nmi", self.precisions, diff)
        grad = -np.einsum("nm,nmi->ni", terms, scaled)
        return terms.sum(axis=1), grad

    def convolve(self, variance):
        """Mixture convolved with an isotropic Gaussian of the given variance."""
        covs = self._covs + float(variance) * np.eye(self.dim)
        return GaussianMixture(self._weights, self._means, covs)

    # serialization

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "components": [
                {
                    "weight": float(w),
                    "mean": [float(v) for v in mu],
                    "cov": [[float(v) for v in row] for row in cov],
                }
                for w, mu, cov in zip(self._weights, self._means, self._covs)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            dim = int(data["dim"])
            comps = data["components"]
            weights = [float(c["weight"]) for c in comps]
            means = np.array([c["mean"] for c in comps], dtype=float).reshape(len(comps), -1)
            covs = np.array([c["cov"] for c in comps], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"malformed mixture description: {exc}") from None
        gm = cls(weights, means, covs)
        if gm.dim != dim:
            raise ContractViolation(f"mixture declares dim={dim} but components have dim={gm.dim}")
        return gm

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def density(gm, x):
    """Mixture density at a single point ``x``."""
    return gm.pdf(check_vector(x, gm.dim).reshape(1, -1))[0].item()


def marginal(gm, keep):
    """Marginal mixture over the coordinates listed in ``keep`` (order preserved)."""
    keep = [int(k) for k in np.atleast_1d(keep)]
    if not keep:
        raise ContractViolation("marginal needs at least one kept coordinate")
    if any(k < 0 or k >= gm.dim for k in keep) or len(set(keep)) != len(keep):
        raise ContractViolation(f"invalid coordinate set {keep} for a {gm.dim}-d mixture")
    idx = np.asarray(keep)
    return GaussianMixture(gm.weights, gm.means[:, idx], gm.covs[:, idx[:, None], idx[None, :]])


def conditional_params(gm, i, x_bar):
    """Parameters of the 1-d conditional ``p(x_i | x_bar)``.

    Returns ``(log_weights, means, variances)`` arrays of length M, with the
    log weights normalized. Uses the precision-matrix form of Gaussian
    conditioning, so the cost per component is quadratic in the dimension.
    """
    d = gm.dim
    if gm.dim == 1:
        return gm.log_weights.copy(), gm.means[:, 0].copy(), gm.covs[:, 0, 0].copy()
    x_bar = np.asarray(x_bar, dtype=float).reshape(d - 1)
    rest = np.r_[0:i, i + 1:d]
    prec = gm.precisions
    lam_ii = prec[:, i, i]
    lam_ir = prec[:, i, rest]
    lam_rr = prec[:, rest[:, None], rest[None, :]]
    delta = x_bar[None, :] - gm.means[:, rest]

    var = 1.0 / lam_ii
    cross = np.einsum("mj,mj->m", lam_ir, delta)
    mean = gm.means[:, i] - var * cross

    # Schur complement: inv(Sigma_rr) = lam_rr - lam_ri lam_ir / lam_ii,
    # det(Sigma) = det(Sigma_rr) * var
    maha = np.einsum("mj,mjk,mk->m", delta, lam_rr, delta) - cross * cross * var
    maha = np.maximum(maha, 0.0)
    log_det_rr = gm.log_dets - np.log(var)
    log_marg = gm.log_weights - 0.5 * (maha + (d - 1) * LOG_2PI + log_det_rr)
    norm = logsumexp(log_marg)
    if not np.isfinite(norm):
        raise NumericalError(f"conditional normalizer is not finite at x_bar={x_bar}")
    if not (np.all(var > 0) and np.all(np.isfinite(mean))):
        raise NumericalError("conditional covariance is not positive")
    return log_marg - norm, mean, var


def conditional(gm, i, x_bar):
    """Exact one-dimensional conditional mixture ``p(x_i | x_bar)``."""
    if gm.dim < 2:
        raise ContractViolation("conditional requires a mixture of dimension >= 2")
    i = int(i)
    if not 0 <= i < gm.dim:
        raise ContractViolation(f"coordinate {i} out of range for a {gm.dim}-d mixture")
    x_bar = check_vector(x_bar, gm.dim - 1, "x_bar")
    log_w, mean, var = conditional_params(gm, i, x_bar)
    return GaussianMixture(np.exp(log_w), mean.reshape(-1, 1), var.reshape(-1, 1, 1))


def random_mixture(seed, d, m, gen=None):
    """Random ``d``-dimensional mixture with ``m`` components.

    Deterministic in ``(seed, d, m, gen)``; see :class:`MixtureGenConfig`.
    """
    d, m = int(d), int(m)
    if d < 1 or m < 1:
        raise ContractViolation("random_mixture needs d >= 1 and m >= 1")
    gen = gen or MixtureGenConfig()
    rng = make_rng(seed)
    weights = rng.dirichlet(np.full(m, gen.dirichlet_alpha))
    means = rng.uniform(gen.mean_low, gen.mean_high, size=(m, d))
    factors = rng.uniform(-gen.factor_scale, gen.factor_scale, size=(m, d, d)) / np.sqrt(d)
    covs = factors @ np.swapaxes(factors, 1, 2) + gen.cov_floor * np.eye(d)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return GaussianMixture(weights, means, covs)


def sample_random(gm, seed, n, return_labels=False):
    """``n`` i.i.d. draws from ``gm``: pick a component, then use its Cholesky factor."""
    n = int(n)
    if n < 1:
        raise ContractViolation("sample_random needs n >= 1")
    rng = make_rng(seed)
    labels = rng.choice(gm.n_components, size=n, p=gm.weights)
    z = rng.standard_normal((n, gm.dim))
    X = gm.means[labels] + np.einsum("nij,nj->ni", gm.chol[labels], z)
    return (X, labels) if return_labels else X
