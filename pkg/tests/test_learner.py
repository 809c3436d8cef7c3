import math

import numpy as np
import pytest

from pbdlearn.core import PbdModel, SampleSet, sample
from pbdlearn.corpus import corpus_model, random_model
from pbdlearn.fourier import dft_closed_form, empirical_dft, sketch_parameters
from pbdlearn.learner import (LearnConfig, LearnerExhausted, default_sample_budget,
                              estimate_mean_var, learn_shifted_binomial, proper_learn)
from pbdlearn.oracle import tv_exact


class TestConfig:
    def test_budget(self):
        assert default_sample_budget(0.1) == math.ceil(1000 * math.log(10) ** 2 / 0.01)
        assert LearnConfig().budget == 530190
        assert LearnConfig(sample_budget=10).budget == 10

    def test_threshold(self):
        assert LearnConfig(eps=0.1).threshold == pytest.approx(1000.0)

    @pytest.mark.parametrize("kw", [{"eps": 0.5}, {"eps": 0.0}, {"C": 0}, {"sample_budget": 0},
                                    {"max_systems": 0}, {"threads": 0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            LearnConfig(**kw)


class TestEstimate:
    def test_constant(self):
        assert estimate_mean_var(SampleSet(np.full(10, 5))) == (5.0, 1.0)

    def test_population_variance(self):
        mu, sigma = estimate_mean_var(SampleSet(np.array([0, 2])))
        assert mu == 1.0 and sigma == pytest.approx(math.sqrt(2))

    def test_uses_first_samples(self):
        s = SampleSet(np.array([1] * 1000 + [100] * 50))
        assert estimate_mean_var(s) == (1.0, 1.0)

    def test_within_standard_deviations(self):
        s = sample(PbdModel.from_components([(0.5, 100)]), 1000, seed=7)
        mu, _ = estimate_mean_var(s)
        assert abs(mu - 50) <= 5 * math.sqrt(25)


class TestShiftedBinomial:
    def test_point_mass(self):
        out = learn_shifted_binomial(SampleSet(np.full(20, 7)), 0.1, n=10)
        assert out.components == ((0.0, 3), (1.0, 7))

    def test_matches_moments(self):
        truth = PbdModel.from_components([(0.0, 100), (1.0, 300), (0.4, 600)])
        s = sample(truth, 20000, seed=3)
        out = learn_shifted_binomial(s, 0.1, n=1000)
        assert out.n == 1000
        assert out.mean() == pytest.approx(s.values.mean(), abs=1e-6)
        assert out.variance() == pytest.approx(s.values.var(), rel=0.02)
        assert tv_exact(truth, out) <= 0.1

    def test_overdispersed_falls_back(self):
        out = learn_shifted_binomial(SampleSet(np.array([0, 0, 0, 10])), 0.1, n=10)
        assert out.n == 10 and out.mean() == pytest.approx(2.5)

    def test_branch_taken_above_threshold(self):
        truth = PbdModel.from_components([(0.5, 400)])
        s = sample(truth, 5000, seed=1)
        rep = proper_learn(s, 400, LearnConfig(sample_budget=5000, large_variance_threshold=5.0))
        assert rep.regime == "shifted-binomial"
        assert tv_exact(truth, rep.output) <= 0.1


class TestProperLearn:
    def test_point_mass_at_zero(self):
        truth = PbdModel.from_components([(0.0, 12)])
        cfg = LearnConfig(sample_budget=2000)
        rep = proper_learn(sample(truth, 2000, seed=0), 12, cfg)
        assert tv_exact(truth, rep.output) == 0.0

    def test_half_hundred(self):
        truth = PbdModel.from_components([(0.5, 100)])
        cfg = LearnConfig(eps=0.1, seed=7)
        rep = proper_learn(sample(truth, cfg.budget, seed=7), 100, cfg)
        assert rep.regime == "system"
        assert tv_exact(truth, rep.output) <= 0.1
        lg = math.log(10)
        assert rep.M == math.ceil(10 * (lg + rep.sigma * math.sqrt(lg)))
        assert rep.L == math.ceil(100 * lg)
        assert rep.residual.feasible

    @pytest.mark.parametrize("seed", [2, 5, 11])
    def test_output_is_valid_pbd(self, seed):
        truth = corpus_model(seed)
        cfg = LearnConfig(seed=seed, time_budget=60)
        rep = proper_learn(sample(truth, cfg.budget, seed=seed), truth.n, cfg)
        out = rep.output
        assert out.n == truth.n
        assert all(0.0 <= v <= 1.0 for v, _ in out.components)
        assert rep.regime == "system"
        assert tv_exact(truth, out) <= 0.1

    def test_exhaustion_is_reported(self):
        truth = PbdModel.from_components([(0.5, 100)])
        cfg = LearnConfig(sample_budget=20000, max_systems=1, warm_start=False)
        with pytest.raises(LearnerExhausted) as info:
            proper_learn(sample(truth, 20000, seed=2), 100, cfg)
        assert info.value.diagnostics["systems_tried"] == 1

    def test_rejects_out_of_range_samples(self):
        with pytest.raises(ValueError):
            proper_learn(SampleSet(np.array([5])), 3, LearnConfig(sample_budget=1))

    def test_deterministic(self):
        truth = random_model(30, seed=4)
        cfg = LearnConfig(seed=1)
        s = sample(truth, cfg.budget, seed=9)
        a, b = proper_learn(s, 30, cfg), proper_learn(s, 30, cfg)
        assert a.output == b.output and a.systems_tried == b.systems_tried


class TestSketchConcentration:
    def test_max_deviation(self):
        eps = 0.1
        N = default_sample_budget(eps)
        misses = 0
        for seed in range(20):
            truth = corpus_model(seed + 1)
            s = sample(truth, N, seed=1000 + seed)
            _, sigma = estimate_mean_var(s)
            M, L = sketch_parameters(eps, sigma)
            h = empirical_dft(s, M, L)
            dev = np.max(np.abs(h.coeffs - dft_closed_form(truth, M, L).coeffs))
            misses += dev > 4 * math.sqrt(math.log(4 * (2 * L + 1)) / N)
        assert misses <= 1
