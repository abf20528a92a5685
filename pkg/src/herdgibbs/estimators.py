"""scikit-learn style wrappers around the samplers.

The "data" passed to ``fit`` is the target density: a
:class:`~herdgibbs.mixtures.GaussianMixture`, its dict form, or a path to
its JSON file. After fitting, ``samples_`` holds the deterministic samples
and ``sample(n)`` returns (and if needed extends) them.

>>> from herdgibbs.mixtures import random_mixture
>>> kh = KernelHerding(n_samples=5).fit(random_mixture(0, 2, 3))
>>> kh.samples_.shape
(5, 2)
"""

import numbers
from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_scalar

from ._io import read_json
from ._validation import ContractViolation, check_vector
from .kernels import IsotropicGaussianKernel
from .metrics import herding_error, normalized_l2
from .mixtures import GaussianMixture, sample_random
from .optim import OptimConfig
from .samplers import continuous_herded_gibbs, kernel_herding


def check_mixture(X):
    """Coerce a fit argument to a GaussianMixture."""
    if isinstance(X, GaussianMixture):
        return X
    if isinstance(X, dict):
        return GaussianMixture.from_dict(X)
    if isinstance(X, (str, Path)):
        return GaussianMixture.from_dict(read_json(X))
    raise ContractViolation(f"cannot interpret {type(X).__name__} as a Gaussian mixture")


class _MixtureSampler(BaseEstimator):

    def _check_common(self):
        check_scalar(self.n_samples, "n_samples", numbers.Integral, min_val=1)
        check_scalar(self.sigma_k, "sigma_k", numbers.Real, min_val=0, include_boundaries="neither")

    def _setup(self, X):
        self._check_common()
        self.mixture_ = check_mixture(X)
        self.n_features_in_ = self.mixture_.dim
        self.kernel_ = IsotropicGaussianKernel(self.sigma_k, self.mixture_.dim)

    def sample(self, n_samples=None):
        """First ``n_samples`` samples, running the sampler further if needed."""
        check_is_fitted(self, "samples_")
        n = self.n_samples if n_samples is None else int(n_samples)
        if n > len(self.samples_):
            self._extend(n)
        return self.samples_[:n].copy()

    def herding_error(self, n_samples=None):
        check_is_fitted(self, "samples_")
        return herding_error(self.kernel_, self.mixture_, self.sample(n_samples))

    def score(self, X=None, y=None):
        """Negative normalized L2 distance of the samples to ``X`` (default: the fitted target)."""
        check_is_fitted(self, "samples_")
        target = self.mixture_ if X is None else check_mixture(X)
        return -normalized_l2(target, self.samples_, self.kernel_)


class KernelHerding(_MixtureSampler):
    """Kernel herding with multistart BFGS on the full-dimensional objective."""

    def __init__(self, n_samples=100, sigma_k=0.1, grad_tol=1e-8, max_iter=200):
        self.n_samples = n_samples
        self.sigma_k = sigma_k
        self.grad_tol = grad_tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        self._setup(X)
        self.trace_ = kernel_herding(self.mixture_, self.kernel_, self.n_samples, self._optim())
        self.samples_ = self.trace_.as_array()
        return self

    def _optim(self):
        return OptimConfig(grad_tol=self.grad_tol, max_iters=self.max_iter)

    def _extend(self, n):
        kernel_herding(self.mixture_, self.kernel_, n, self._optim(), trace=self.trace_)
        self.samples_ = self.trace_.as_array()


class ContinuousHerdedGibbs(KernelHerding):
    """Continuous herded Gibbs sampling.

    ``init`` is the first sample; by default it is the first kernel herding
    sample of the target.
    """

    def __init__(self, n_samples=100, sigma_k=0.1, init=None, grad_tol=1e-8, max_iter=200):
        super().__init__(n_samples=n_samples, sigma_k=sigma_k, grad_tol=grad_tol, max_iter=max_iter)
        self.init = init

    def fit(self, X, y=None):
        self._setup(X)
        if self.init is None:
            init = kernel_herding(self.mixture_, self.kernel_, 1, self._optim()).samples[0]
        else:
            init = check_vector(self.init, self.mixture_.dim, "init")
        self.init_ = init
        self.trace_ = continuous_herded_gibbs(self.mixture_, self.kernel_, self.n_samples, init, self._optim())
        self.samples_ = self.trace_.as_array()
        return self

    def _extend(self, n):
        continuous_herded_gibbs(self.mixture_, self.kernel_, n, self.init_, self._optim(), trace=self.trace_)
        self.samples_ = self.trace_.as_array()


class RandomSampler(_MixtureSampler):
    """I.i.d. draws from the target; the baseline for the herding samplers.

    ``random_state`` is an integer seed (or sequence of ints) for PCG64.
    """

    def __init__(self, n_samples=100, sigma_k=0.1, random_state=0):
        self.n_samples = n_samples
        self.sigma_k = sigma_k
        self.random_state = random_state

    def fit(self, X, y=None):
        self._setup(X)
        self.samples_ = sample_random(self.mixture_, self.random_state, self.n_samples)
        return self

    def _extend(self, n):
        # a fresh draw of n; earlier samples are not preserved as a prefix
        self.samples_ = sample_random(self.mixture_, self.random_state, n)
