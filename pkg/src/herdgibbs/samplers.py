"""Deterministic herding samplers.

* :func:`kernel_herding` greedily places each new sample at the maximum of
  the mean embedding minus the scaled kernel sum over previous samples.
* :func:`continuous_herded_gibbs` does the same one coordinate at a time,
  against the exact 1-d conditional of the target and a conditional kernel
  density estimate of the previous samples.
* :func:`discrete_herded_gibbs` is the finite-alphabet weight-table sampler.

The random baseline lives in :func:`herdgibbs.mixtures.sample_random`.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._io import format_float
from ._validation import ContractViolation, OptimizationError, check_points, check_vector
from .kernels import IsotropicGaussianKernel, smoothed_mixture
from .mixtures import LOG_2PI, GaussianMixture, conditional_params, flushed_exp
from .optim import (
    OptimConfig,
    SmoothObjective,
    heuristic_starts,
    maximize_multistart,
    scan_starts,
    starts_from_1d_mixture,
)


@dataclass
class StepDiagnostics:
    objective_value: float
    converged: bool
    wall_time: float
    n_starts: int = 0
    n_multistarts: int = 0
    fallback: bool = False


@dataclass
class HerdingTrace:
    """Ordered herding samples with one diagnostics record per sample."""

    dim: int
    samples: list = field(default_factory=list)
    per_step: list = field(default_factory=list)
    method: str = ""

    def __len__(self):
        return len(self.samples)

    def append(self, x, diagnostics):
        x = np.array(x, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(x)):
            raise OptimizationError("herding produced a non-finite sample", point=x)
        self.samples.append(x)
        self.per_step.append(diagnostics)

    def as_array(self, t=None):
        rows = self.samples if t is None else self.samples[:t]
        return np.array(rows, dtype=float).reshape(len(rows), self.dim)

    def to_dict(self):
        out = {
            "dim": int(self.dim),
            "samples": [[float(v) for v in x] for x in self.samples],
            "diagnostics": [
                {
                    "objective": float(s.objective_value),
                    "converged": bool(s.converged),
                    "ms": 1000.0 * float(s.wall_time),
                    "n_starts": int(s.n_starts),
                    "n_multistarts": int(s.n_multistarts),
                    "fallback": bool(s.fallback),
                }
                for s in self.per_step
            ],
        }
        if self.method:
            out["method"] = self.method
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            dim = int(data["dim"])
            samples = [np.array(x, dtype=float).reshape(dim) for x in data["samples"]]
            steps = [
                StepDiagnostics(
                    objective_value=float(s["objective"]),
                    converged=bool(s["converged"]),
                    wall_time=float(s["ms"]) / 1000.0,
                    n_starts=int(s.get("n_starts", 0)),
                    n_multistarts=int(s.get("n_multistarts", 0)),
                    fallback=bool(s.get("fallback", False)),
                )
                for s in data["diagnostics"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"malformed trace description: {exc}") from None
        if len(samples) != len(steps):
            raise ContractViolation("trace has a different number of samples and diagnostics")
        return cls(dim, samples, steps, data.get("method", ""))

    def csv_rows(self):
        return samples_csv_rows(self.as_array())


def samples_csv_rows(X):
    X = np.asarray(X, dtype=float)
    header = ["index"] + [f"x_{k + 1}" for k in range(X.shape[1])]
    rows = [[str(n)] + [format_float(v) for v in x] for n, x in enumerate(X)]
    return header, rows


def _check_kernel(kern, gm):
    if not isinstance(kern, IsotropicGaussianKernel):
        raise ContractViolation("expected an IsotropicGaussianKernel")
    if kern.dim != gm.dim:
        raise ContractViolation(f"kernel dim {kern.dim} does not match mixture dim {gm.dim}")


def _as_samples(samples, dim):
    if isinstance(samples, HerdingTrace):
        return samples.as_array()
    return check_points(samples, dim, "samples")


class KernelHerdingObjective(SmoothObjective):
    """``x -> E_p[k(x, x')] - 1/(t+1) * sum_s k(x, x_s)`` with its gradient.

    ``smoothed`` is the target convolved with the kernel, whose density is
    the mean embedding.
    """

    def __init__(self, smoothed, kern, samples):
        super().__init__(None, None, arity=smoothed.dim)
        self.smoothed = smoothed
        self.kern = kern
        self.samples = np.asarray(samples, dtype=float).reshape(-1, smoothed.dim)
        self.t = self.samples.shape[0]
        self.scale = 1.0 / (self.t + 1)
        self._means = smoothed.means
        self._prec = smoothed.precisions
        self._log_c = smoothed.log_weights - 0.5 * (smoothed.dim * LOG_2PI + smoothed.log_dets)
        self._kern_log_c = kern.log_norm(smoothed.dim)

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float).reshape(self.arity)
        diff = x - self._means
        pd = np.einsum("mij,mj->mi", self._prec, diff)
        terms = flushed_exp(self._log_c - 0.5 * np.einsum("mi,mi->m", diff, pd))
        value = terms.sum()
        grad = -terms @ pd
        if self.t:
            delta = x - self.samples
            k = flushed_exp(self._kern_log_c - 0.5 * np.einsum("si,si->s", delta, delta) / self.kern.variance)
            value -= self.scale * k.sum()
            grad = grad + (self.scale / self.kern.variance) * (k @ delta)
        return float(value), grad

    def value(self, x):
        return self.value_and_grad(x)[0]

    def gradient(self, x):
        return self.value_and_grad(x)[1]

    def values(self, xs):
        """Objective at each row of ``xs`` (a 1-d array is read as points when ``dim == 1``)."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.arity)
        out = self.smoothed.pdf(xs)
        if self.t:
            out = out - self.scale * self.kern.pairwise(xs, self.samples).sum(axis=1)
        return out


def _search_starts(obj, starts, means, variances, sigma_k, n_scan=3):
    # 1-d searches add the best peaks of a sigma_k / 4 scan over every
    # component's mean +/- 5 std, outside which the attraction term is negligible
    sd = np.sqrt(np.asarray(variances) + sigma_k**2)
    lo, hi = np.min(means - 5.0 * sd), np.max(means + 5.0 * sd)
    extra = scan_starts(obj.values, lo, hi, sigma_k / 4.0, n_scan)
    return np.vstack([starts, extra])


def kernel_herding(gm, kern, T, cfg=None, trace=None):
    """Run kernel herding until the trace holds ``T`` samples.

    Each step is a multistart BFGS from :func:`heuristic_starts`; for 1-d
    targets a coarse scan adds a few more starts, as for the Gibbs
    weight function. Passing an existing ``trace`` continues it in place.
    """
    _check_kernel(kern, gm)
    T = int(T)
    if T < 1:
        raise ContractViolation("kernel_herding needs T >= 1")
    cfg = cfg or OptimConfig()
    trace = trace if trace is not None else HerdingTrace(gm.dim, method="kh")
    smoothed = smoothed_mixture(kern, gm)
    starts = heuristic_starts(gm)
    while len(trace) < T:
        step = len(trace)
        t0 = time.perf_counter()
        obj = KernelHerdingObjective(smoothed, kern, trace.as_array())
        if gm.dim == 1:
            search = _search_starts(obj, starts, gm.means[:, 0], gm.covs[:, 0, 0], kern.sigma_k)
        else:
            search = starts
        try:
            res = maximize_multistart(obj, search, cfg)
        except OptimizationError as exc:
            exc.context["step"] = step
            raise
        elapsed = time.perf_counter() - t0
        trace.append(res.x, StepDiagnostics(res.value, res.converged, elapsed, len(starts), 1))
    return trace


class ChgWeightFunction(SmoothObjective):
    """One-dimensional herding weight function for coordinate ``i``.

    ``x -> (t+1)/t * E_{x' ~ p(x_i | x_bar)}[k(x, x')] - sum_s w_hat_s k(x, x_i^(s))``
    where ``w_hat_s`` are the normalized kernel weights between the current
    ``x_bar`` and each previous sample's ``x_bar``.
    """

    def __init__(self, kern, t, coordinate, x_bar, cond_log_weights, cond_means, cond_vars,
                 sample_coords, log_w):
        super().__init__(None, None, arity=1)
        self.kern = kern
        self.t = int(t)
        self.factor = (self.t + 1) / self.t
        self.coordinate = coordinate
        self.x_bar = x_bar
        self.cond_log_weights = cond_log_weights
        self.cond_means = cond_means
        self.cond_vars = cond_vars
        self.sample_coords = sample_coords
        self.log_w = log_w

        top = np.max(log_w)
        self.fallback = not np.isfinite(top)
        if self.fallback:
            self.norm_weights = np.full(self.t, 1.0 / self.t)
        else:
            self.norm_weights = np.exp(log_w - logsumexp(log_w))

        self._cond_weights = np.exp(cond_log_weights)
        self._emb_vars = cond_vars + kern.variance
        self._emb_log_norm = -0.5 * (LOG_2PI + np.log(self._emb_vars))
        self._kde_log_norm = kern.log_norm(1)

    @property
    def weights(self):
        """Unnormalized weights ``w_s = k(x_bar, x_bar^(s))`` (may underflow)."""
        return flushed_exp(self.log_w)

    @property
    def normalizer(self):
        return float(self.weights.sum())

    def conditional_mixture(self):
        return GaussianMixture(self._cond_weights, self.cond_means.reshape(-1, 1),
                               self.cond_vars.reshape(-1, 1, 1))

    def embedding(self, xs):
        xs = np.asarray(xs, dtype=float).reshape(-1, 1)
        diff = xs - self.cond_means
        terms = self._cond_weights * flushed_exp(self._emb_log_norm - 0.5 * diff**2 / self._emb_vars)
        return terms.sum(axis=1)

    def kde(self, xs):
        xs = np.asarray(xs, dtype=float).reshape(-1, 1)
        diff = xs - self.sample_coords
        terms = self.norm_weights * flushed_exp(self._kde_log_norm - 0.5 * diff**2 / self.kern.variance)
        return terms.sum(axis=1)

    def values(self, xs):
        """Vectorized weight function over an array of candidate values."""
        return self.factor * self.embedding(xs) - self.kde(xs)

    def value_and_grad(self, x):
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        diff_e = x - self.cond_means
        emb = self._cond_weights * flushed_exp(self._emb_log_norm - 0.5 * diff_e**2 / self._emb_vars)
        diff_k = x - self.sample_coords
        kde = self.norm_weights * flushed_exp(self._kde_log_norm - 0.5 * diff_k**2 / self.kern.variance)
        value = self.factor * emb.sum() - kde.sum()
        grad = -self.factor * np.sum(emb * diff_e / self._emb_vars) + np.sum(kde * diff_k) / self.kern.variance
        return float(value), np.array([grad])

    def value(self, x):
        return self.value_and_grad(x)[0]

    def gradient(self, x):
        return self.value_and_grad(x)[1]

    def starts(self):
        """Heuristic starts: each conditional component's mean and mean +/- std."""
        return starts_from_1d_mixture(self.cond_means, self.cond_vars)

    def search_starts(self, n_scan=3):
        """Heuristic starts followed by the best peaks of a coarse scan.

        The scan covers each conditional component's mean +/- 5 std with a
        step of ``sigma_k / 4``, fine enough to resolve every kernel bump.
        """
        return _search_starts(self, self.starts(), self.cond_means, self.cond_vars, self.kern.sigma_k, n_scan)

    def rescaled(self):
        """The same function divided by ``(t+1)/t``.

        The maximizer is unchanged, but the quasi-Newton steps then match
        kernel herding's, which makes the 1-d case reproduce it exactly.
        """
        return _Scaled(self, 1.0 / self.factor)


class _Scaled(SmoothObjective):
    def __init__(self, base, scale):
        super().__init__(None, None, arity=base.arity)
        self.base = base
        self.scale = scale

    def value_and_grad(self, x):
        v, g = self.base.value_and_grad(x)
        return self.scale * v, self.scale * g

    def value(self, x):
        return self.value_and_grad(x)[0]

    def gradient(self, x):
        return self.value_and_grad(x)[1]


def chg_weight_function(gm, kern, trace, i, x_current):
    """Build the continuous herded Gibbs objective for coordinate ``i``.

    ``trace`` supplies the previous samples (a :class:`HerdingTrace` or an
    (t, d) array, t >= 1); ``x_current`` is the full current state, of which
    every coordinate except ``i`` is conditioned on.
    """
    _check_kernel(kern, gm)
    samples = _as_samples(trace, gm.dim)
    t = samples.shape[0]
    if t < 1:
        raise ContractViolation("the weight function needs at least one previous sample")
    i = int(i)
    if not 0 <= i < gm.dim:
        raise ContractViolation(f"coordinate {i} out of range for a {gm.dim}-d mixture")
    x_current = check_vector(x_current, gm.dim, "x_current")
    x_bar = np.delete(x_current, i)
    if gm.dim == 1:
        log_w = np.zeros(t)
    else:
        sample_bars = np.delete(samples, i, axis=1)
        log_w = kern.log_pairwise(x_bar[None, :], sample_bars)[0]
    cond_log_weights, cond_means, cond_vars = conditional_params(gm, i, x_bar)
    return ChgWeightFunction(kern, t, i, x_bar, cond_log_weights, cond_means, cond_vars,
                             samples[:, i].copy(), log_w)


def continuous_herded_gibbs(gm, kern, T, init, cfg=None, trace=None):
    """Continuous herded Gibbs sampling with a systematic coordinate scan.

    ``init`` becomes the first sample. Every later sample is one full sweep
    over the coordinates in order; each coordinate is set to the multistart
    maximum of its weight function, conditioning on the already updated
    coordinates of the current sweep. Passing ``trace`` continues it.
    """
    _check_kernel(kern, gm)
    T = int(T)
    if T < 1:
        raise ContractViolation("continuous_herded_gibbs needs T >= 1")
    cfg = cfg or OptimConfig()
    if trace is None:
        init = check_vector(init, gm.dim, "init")
        trace = HerdingTrace(gm.dim, method="chg")
        value = smoothed_mixture(kern, gm).pdf(init.reshape(1, -1))[0]
        trace.append(init, StepDiagnostics(float(value), True, 0.0))
    while len(trace) < T:
        sweep = len(trace)
        previous = trace.as_array()
        x = previous[-1].copy()
        t0 = time.perf_counter()
        converged, fallback, n_starts = True, False, 0
        for i in range(gm.dim):
            obj = chg_weight_function(gm, kern, previous, i, x)
            try:
                res = maximize_multistart(obj.rescaled(), obj.search_starts(), cfg)
            except OptimizationError as exc:
                exc.context.update(sweep=sweep, coordinate=i)
                raise
            x[i] = res.x[0]
            converged &= res.converged
            fallback |= obj.fallback
            n_starts = len(obj.starts())
        elapsed = time.perf_counter() - t0
        trace.append(x, StepDiagnostics(res.value * obj.factor, converged, elapsed, n_starts, gm.dim, fallback))
    return trace


def conditional_kde_ratio(kern, samples, i, x):
    """Conditional sample KDE at ``x`` as joint kernel sum over marginal kernel sum.

    Reference form used to check the weighted 1-d sum of the weight function.
    """
    samples = np.asarray(samples, dtype=float)
    x = np.asarray(x, dtype=float)
    joint = kern.pairwise(x[None, :], samples)[0].sum()
    if samples.shape[1] == 1:
        return float(joint)
    marg = kern.pairwise(np.delete(x, i)[None, :], np.delete(samples, i, axis=1))[0].sum()
    return float(joint / marg)


class DiscreteConditionalModel:
    """Finite-alphabet full conditionals with lazily created herding weights.

    ``conditional_fn(i, x_bar)`` returns the probability vector of coordinate
    ``i`` given the tuple of the other coordinates.
    """

    def __init__(self, alphabet_sizes, conditional_fn):
        self.alphabet_sizes = [int(k) for k in alphabet_sizes]
        if not self.alphabet_sizes or min(self.alphabet_sizes) < 1:
            raise ContractViolation("alphabet sizes must be positive")
        self.conditional_fn = conditional_fn
        self.weight_store = {}

    @property
    def dim(self):
        return len(self.alphabet_sizes)

    @classmethod
    def from_joint(cls, table):
        """Model whose conditionals come from a joint probability table."""
        table = np.asarray(table, dtype=float)
        if np.any(table < 0) or abs(table.sum() - 1.0) > 1e-12:
            raise ContractViolation("joint table must be a probability array")

        def cond(i, x_bar):
            index = list(x_bar)
            index.insert(i, slice(None))
            column = table[tuple(index)]
            total = column.sum()
            if total <= 0:
                return np.full(column.size, 1.0 / column.size)
            return column / total

        return cls(table.shape, cond)

    def conditional(self, i, x_bar):
        p = np.asarray(self.conditional_fn(i, tuple(x_bar)), dtype=float)
        k = self.alphabet_sizes[i]
        if p.shape != (k,) or np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"conditional {i} given {tuple(x_bar)} is not a probability vector of size {k}")
        return p

    def weights_for(self, i, x_bar):
        key = (i, tuple(x_bar))
        if key not in self.weight_store:
            self.weight_store[key] = self.conditional(i, x_bar).copy()
        return self.weight_store[key]


def discrete_herded_gibbs(model, T, init):
    """Herded Gibbs over a :class:`DiscreteConditionalModel`.

    Returns the ``T`` configurations emitted after each sweep.
    """
    T = int(T)
    if T < 1:
        raise ContractViolation("discrete_herded_gibbs needs T >= 1")
    x = [int(v) for v in init]
    if len(x) != model.dim or any(not 0 <= v < k for v, k in zip(x, model.alphabet_sizes)):
        raise ContractViolation(f"invalid initial configuration {init}")
    out = []
    for _ in range(T):
        for i in range(model.dim):
            x_bar = tuple(x[:i] + x[i + 1:])
            w = model.weights_for(i, x_bar)
            choice = int(np.argmax(w))
            w += model.conditional(i, x_bar)
            w[choice] -= 1.0
            x[i] = choice
        out.append(tuple(x))
    return out
