import json

import numpy as np
import pytest

from herdgibbs._validation import ContractViolation, OptimizationError
from herdgibbs.kernels import IsotropicGaussianKernel, mean_embedding, smoothed_mixture
from herdgibbs.metrics import herding_error_curve
from herdgibbs.mixtures import GaussianMixture, conditional, random_mixture, sample_random
from herdgibbs.samplers import (
    ChgWeightFunction,
    DiscreteConditionalModel,
    HerdingTrace,
    KernelHerdingObjective,
    chg_weight_function,
    conditional_kde_ratio,
    continuous_herded_gibbs,
    discrete_herded_gibbs,
    kernel_herding,
)


def covered_components(gm, X, radius):
    hit = []
    for mu, prec in zip(gm.means, gm.precisions):
        diff = X - mu
        maha = np.einsum("ni,ij,nj->n", diff, prec, diff)
        hit.append(bool(np.any(maha <= radius**2)))
    return hit


class TestKernelHerding:
    def test_single_gaussian_first_sample_is_mean(self, kern2):
        gm = GaussianMixture.single([0.4, -1.1], [[0.8, 0.2], [0.2, 0.5]])
        trace = kernel_herding(gm, kern2, 1)
        np.testing.assert_allclose(trace.samples[0], gm.means[0], atol=1e-5)

    def test_bimodal_first_two_samples_hit_distinct_modes(self, bimodal_1d, kern1):
        X = kernel_herding(bimodal_1d, kern1, 2).as_array()[:, 0]
        grid = np.linspace(-8, 8, 160_001)
        emb = mean_embedding(kern1, bimodal_1d, grid.reshape(-1, 1))
        modes = [grid[grid < 0][np.argmax(emb[grid < 0])], grid[grid > 0][np.argmax(emb[grid > 0])]]
        nearest = [int(np.argmin([abs(x - m) for m in modes])) for x in X]
        assert sorted(nearest) == [0, 1]
        assert all(min(abs(x - m) for m in modes) < 0.2 for x in X)

    def test_objective_telescoping(self, random_2d, kern2):
        trace = kernel_herding(random_2d, kern2, 12)
        X = trace.as_array()
        for t in range(1, len(X)):
            x = X[t]
            fresh = mean_embedding(kern2, random_2d, x) - kern2.pairwise(x[None], X[:t])[0].sum() / (t + 1)
            assert trace.per_step[t].objective_value == pytest.approx(fresh, abs=1e-10)

    def test_deterministic(self, random_2d, kern2):
        a = kernel_herding(random_2d, kern2, 8).as_array()
        b = kernel_herding(random_2d, kern2, 8).as_array()
        np.testing.assert_array_equal(a, b)

    def test_continuation_matches_full_run(self, random_2d, kern2):
        full = kernel_herding(random_2d, kern2, 6).as_array()
        part = kernel_herding(random_2d, kern2, 3)
        kernel_herding(random_2d, kern2, 6, trace=part)
        np.testing.assert_array_equal(part.as_array(), full)

    def test_covers_all_components(self, fig1_mixture, kern2):
        X = kernel_herding(fig1_mixture, kern2, 20).as_array()
        assert all(covered_components(fig1_mixture, X, 2.0))

    def test_start_count_diagnostic(self, fig1_mixture, kern2):
        trace = kernel_herding(fig1_mixture, kern2, 2)
        assert all(s.n_starts == 5 * (2 * 2 + 1) and s.n_multistarts == 1 for s in trace.per_step)

    def test_objective_gradient(self, random_2d, kern2):
        obj = KernelHerdingObjective(smoothed_mixture(kern2, random_2d), kern2, sample_random(random_2d, 0, 5))
        for x in sample_random(random_2d, 1, 10):
            _, g = obj.value_and_grad(x)
            h = 1e-6
            fd = [(obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h) for e in np.eye(2)]
            np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-8)

    def test_invalid_T(self, random_2d, kern2):
        with pytest.raises(ContractViolation):
            kernel_herding(random_2d, kern2, 0)

    def test_kernel_dim_mismatch(self, random_2d, kern1):
        with pytest.raises(ContractViolation):
            kernel_herding(random_2d, kern1, 1)


class TestWeightFunction:
    def test_single_previous_sample(self, fig1_mixture, kern2):
        obj = chg_weight_function(fig1_mixture, kern2, [[50.0, 50.0]], 0, [0.0, 0.0])
        np.testing.assert_allclose(obj.norm_weights, [1.0])
        assert obj.factor == 2.0

    def test_matching_sample_dominates(self, kern2):
        gm = GaussianMixture.single([0, 0], np.eye(2))
        for far in [0.2, 0.5, 1.0]:
            obj = chg_weight_function(gm, kern2, [[1.0, 0.3], [-1.0, 0.3 + far]], 0, [0.0, 0.3])
            assert obj.norm_weights[0] > 0.5
        assert obj.norm_weights[0] == pytest.approx(1.0, abs=1e-12)

    def test_nearer_sample_weighs_more(self, random_2d, kern2):
        obj = chg_weight_function(random_2d, kern2, [[0.0, 0.05], [0.0, 0.2]], 0, [0.0, 0.0])
        assert obj.weights[0] > obj.weights[1]

    @pytest.mark.parametrize("seed", range(5))
    def test_weights_normalized(self, seed):
        d = 2 + seed
        gm = random_mixture(seed, d, 4)
        kern = IsotropicGaussianKernel(0.5, d)
        obj = chg_weight_function(gm, kern, sample_random(gm, seed, 30), seed % d, sample_random(gm, 99, 1)[0])
        assert not obj.fallback
        assert abs(obj.norm_weights.sum() - 1.0) <= 1e-12

    def test_log_space_survives_distant_samples(self, kern2):
        gm = GaussianMixture.single([0, 0], np.eye(2))
        obj = chg_weight_function(gm, kern2, [[0.0, 1e3], [0.0, -2e3]], 0, [0.0, 0.0])
        assert not obj.fallback
        assert np.all(obj.weights == 0.0)
        np.testing.assert_array_equal(obj.norm_weights, [1.0, 0.0])

    def test_fallback_when_log_weights_vanish(self, kern2):
        gm = GaussianMixture.single([0, 0], np.eye(2))
        obj = chg_weight_function(gm, kern2, [[0.0, 1.0], [0.0, -1.0]], 0, [0.0, 0.0])
        obj = ChgWeightFunction(kern2, 2, 0, obj.x_bar, obj.cond_log_weights, obj.cond_means, obj.cond_vars,
                                obj.sample_coords, np.full(2, -np.inf))
        assert obj.fallback
        np.testing.assert_array_equal(obj.norm_weights, [0.5, 0.5])
        assert np.isfinite(obj.value([0.3]))

    @pytest.mark.parametrize("seed", range(10))
    def test_ratio_form_equals_weighted_sum(self, seed):
        gm = random_mixture(seed, 3, 4)
        kern = IsotropicGaussianKernel(0.8, 3)
        S = sample_random(gm, seed, 15)
        rng = np.random.default_rng(seed)
        i = int(rng.integers(3))
        x = sample_random(gm, seed + 50, 1)[0]
        obj = chg_weight_function(gm, kern, S, i, x)
        for xi in x[i] + rng.normal(scale=0.5, size=2):
            z = x.copy()
            z[i] = xi
            assert obj.kde([xi])[0] == pytest.approx(conditional_kde_ratio(kern, S, i, z), rel=1e-10)

    def test_embedding_is_conditional_mean_embedding(self, random_2d, kern2):
        obj = chg_weight_function(random_2d, kern2, sample_random(random_2d, 0, 4), 1, [0.3, -0.4])
        cond = conditional(random_2d, 1, [0.3])
        k1 = IsotropicGaussianKernel(kern2.sigma_k, 1)
        for xi in np.linspace(-3, 3, 7):
            assert obj.embedding([xi])[0] == pytest.approx(mean_embedding(k1, cond, [xi]), rel=1e-12)

    def test_gradient(self, random_2d, kern2):
        obj = chg_weight_function(random_2d, kern2, sample_random(random_2d, 0, 10), 0, [0.5, 0.5])
        for xi in np.linspace(-4, 4, 20):
            _, g = obj.value_and_grad([xi])
            h = 1e-6
            fd = (obj.value([xi + h]) - obj.value([xi - h])) / (2 * h)
            assert g[0] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_values_vectorized(self, random_2d, kern2):
        obj = chg_weight_function(random_2d, kern2, sample_random(random_2d, 0, 10), 0, [0.5, 0.5])
        xs = np.linspace(-3, 3, 5)
        np.testing.assert_allclose(obj.values(xs), [obj.value([v]) for v in xs], rtol=1e-14)

    def test_needs_previous_sample(self, random_2d, kern2):
        with pytest.raises(ContractViolation):
            chg_weight_function(random_2d, kern2, np.empty((0, 2)), 0, [0.0, 0.0])


class TestContinuousHerdedGibbs:
    def test_product_gaussian_two_steps(self, kern2):
        gm = GaussianMixture.single([0, 0], np.eye(2))
        a = continuous_herded_gibbs(gm, kern2, 2, [0.0, 0.0])
        b = continuous_herded_gibbs(gm, kern2, 2, [0.0, 0.0])
        assert len(a) == 2
        np.testing.assert_array_equal(a.samples[0], [0.0, 0.0])
        assert np.all(np.isfinite(a.as_array()))
        np.testing.assert_array_equal(a.as_array(), b.as_array())

    def test_tracks_kernel_herding_on_product_gaussian(self, kern2):
        # N(0, I) is rotation invariant, so kernel herding's argmax is a whole
        # circle and only radii and errors are comparable between the samplers
        gm = GaussianMixture.single([0, 0], np.eye(2))
        kh = kernel_herding(gm, kern2, 5).as_array()
        chg = continuous_herded_gibbs(gm, kern2, 5, kh[0]).as_array()
        assert np.all(np.abs(np.linalg.norm(kh, axis=1) - np.linalg.norm(chg, axis=1)) < 0.5)
        e_kh = herding_error_curve(kern2, gm, kh, [2, 3, 4, 5])
        e_chg = herding_error_curve(kern2, gm, chg, [2, 3, 4, 5])
        assert np.all(e_chg <= 1.1 * e_kh)

    def test_covers_all_components(self, overlapping_2d, kern2):
        init = kernel_herding(overlapping_2d, kern2, 1).samples[0]
        X = continuous_herded_gibbs(overlapping_2d, kern2, 20, init).as_array()
        assert all(covered_components(overlapping_2d, X, 3.0))

    def test_one_dimensional_reduces_to_kernel_herding(self, kern1):
        gm = GaussianMixture([0.3, 0.7], [[-2.0], [1.5]], [[[0.8]], [[0.5]]])
        kh = kernel_herding(gm, kern1, 10).as_array()
        chg = continuous_herded_gibbs(gm, kern1, 10, kh[0]).as_array()
        np.testing.assert_allclose(chg, kh, atol=1e-6)

    def test_diagnostics(self, random_2d, kern2):
        trace = continuous_herded_gibbs(random_2d, kern2, 4, [0.0, 0.0])
        assert len(trace.per_step) == 4
        assert all(s.n_multistarts == 2 and s.n_starts == 15 for s in trace.per_step[1:])

    def test_recorded_objective_is_unscaled(self, random_2d, kern2):
        trace = continuous_herded_gibbs(random_2d, kern2, 3, [0.0, 0.0])
        X = trace.as_array()
        # the last coordinate of sweep 2 conditions on the updated first one
        obj = chg_weight_function(random_2d, kern2, X[:2], 1, X[2])
        assert trace.per_step[2].objective_value == pytest.approx(obj.value([X[2, 1]]), rel=1e-12)

    def test_continuation(self, random_2d, kern2):
        full = continuous_herded_gibbs(random_2d, kern2, 5, [0.0, 0.0]).as_array()
        part = continuous_herded_gibbs(random_2d, kern2, 2, [0.0, 0.0])
        continuous_herded_gibbs(random_2d, kern2, 5, None, trace=part)
        np.testing.assert_array_equal(part.as_array(), full)

    def test_bad_init(self, random_2d, kern2):
        with pytest.raises(ContractViolation):
            continuous_herded_gibbs(random_2d, kern2, 3, [0.0, np.nan])


class TestTrace:
    def test_json_roundtrip(self, random_2d, kern2):
        trace = kernel_herding(random_2d, kern2, 3)
        data = json.loads(json.dumps(trace.to_dict()))
        assert {"dim", "samples", "diagnostics"} <= set(data)
        assert {"objective", "converged", "ms"} <= set(data["diagnostics"][0])
        again = HerdingTrace.from_dict(data)
        np.testing.assert_array_equal(again.as_array(), trace.as_array())
        assert again.to_dict() == trace.to_dict()

    def test_csv_rows(self, random_2d, kern2):
        trace = kernel_herding(random_2d, kern2, 2)
        header, rows = trace.csv_rows()
        assert header == ["index", "x_1", "x_2"]
        assert [float(v) for v in rows[1][1:]] == list(trace.samples[1])

    def test_malformed(self):
        with pytest.raises(ContractViolation):
            HerdingTrace.from_dict({"dim": 2, "samples": [[0.0, 1.0]]})

    def test_rejects_non_finite(self):
        with pytest.raises(OptimizationError):
            HerdingTrace(1).append([np.inf], None)


class TestDiscrete:
    @staticmethod
    def single(p):
        return DiscreteConditionalModel([len(p)], lambda i, x_bar: np.asarray(p))

    def test_hand_traced_prefix(self):
        out = discrete_herded_gibbs(self.single([1 / 3, 2 / 3]), 3, [0])
        assert [x[0] for x in out] == [1, 0, 1]

    def test_degenerate(self):
        out = discrete_herded_gibbs(self.single([0.0, 1.0]), 50, [0])
        assert all(x == (1,) for x in out)

    @pytest.mark.parametrize("seed", range(10))
    def test_frequencies(self, seed):
        rng = np.random.default_rng(seed)
        k = 2 if seed < 5 else 3
        p = rng.dirichlet(np.ones(k))
        p = p / p.sum()
        T = 10_000
        out = discrete_herded_gibbs(self.single(p), T, [0])
        freq = np.bincount([x[0] for x in out], minlength=k) / T
        assert np.all(np.abs(freq - p) <= 2 / T + 1e-9)

    def test_weights_stay_bounded(self):
        model = self.single([0.2, 0.5, 0.3])
        discrete_herded_gibbs(model, 2000, [0])
        w = model.weight_store[(0, ())]
        assert np.all(w >= -1) and np.all(w <= 2)

    def test_joint_table_lazy_weights(self):
        table = np.array([[0.3, 0.1], [0.2, 0.4]])
        model = DiscreteConditionalModel.from_joint(table)
        out = discrete_herded_gibbs(model, 4000, [0, 0])
        assert len(model.weight_store) <= 4
        freq = np.zeros((2, 2))
        for x in out:
            freq[x] += 1
        np.testing.assert_allclose(freq / len(out), table, atol=0.02)

    def test_invalid_conditional(self):
        model = DiscreteConditionalModel([2], lambda i, x_bar: [0.5, 0.6])
        with pytest.raises(ContractViolation):
            discrete_herded_gibbs(model, 1, [0])

    def test_invalid_init(self):
        with pytest.raises(ContractViolation):
            discrete_herded_gibbs(self.single([0.5, 0.5]), 1, [2])
