import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbdlearn.core import PbdModel, canonicalize
from pbdlearn.corpus import random_model
from pbdlearn.fourier import dft_closed_form, sketch_parameters
from pbdlearn.moments import (SplitParams, log_coefficients, log_dft_taylor, moment_bound_lhs,
                              moment_scale, power_sums, split)


def model(*pairs):
    return PbdModel.from_components(pairs)


class TestSplit:
    def test_halves(self):
        sp = split(model((0.1, 2), (0.9, 1)), 0.5)
        assert sp.low == ((0.1, 2),) and sp.high == ((0.9, 1),) and sp.middle == ()

    def test_quarters_middle(self):
        sp = split(model((0.5, 3)), 0.25, 0.75)
        assert sp.middle == ((0.5, 3),) and not sp.low and not sp.high

    def test_boundary_goes_low(self):
        assert split(model((0.5, 3)), 0.5).low == ((0.5, 3),)

    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            split(model((0.5, 1)), 0.75, 0.25)
        with pytest.raises(ValueError):
            split(model((0.5, 1)), 0.0)


class TestPowerSums:
    def test_examples(self):
        prof = power_sums(SplitParams(((0.1, 2), (0.3, 1)), (), 0.5, 0.5), 2)
        assert prof.low_sums[1] == pytest.approx(0.11, abs=1e-15)
        empty = power_sums(SplitParams((), (), 0.5, 0.5), 4)
        assert not empty.low_sums.any() and not empty.high_sums.any()
        high = power_sums(SplitParams((), ((0.9, 1),), 0.5, 0.5), 3)
        assert high.high_sums[2] == pytest.approx(0.001, abs=1e-15)

    def test_lmax_positive(self):
        with pytest.raises(ValueError):
            power_sums(SplitParams((), (), 0.5, 0.5), 0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.integers(1, 30))
    def test_non_negative_non_increasing_and_decaying(self, ps, lmax):
        sp = split(canonicalize(ps), 0.5)
        prof = power_sums(sp, lmax)
        for sums, vals in ((prof.low_sums, [v for v, _ in sp.low]),
                           (prof.high_sums, [1 - v for v, _ in sp.high])):
            assert np.all(sums >= 0)
            assert np.all(np.diff(sums) <= 1e-15)
            if vals:
                beta = max(vals)
                weight = sum(m for _, m in (sp.low if sums is prof.low_sums else sp.high))
                ell = np.arange(1, lmax + 1)
                assert np.all(sums <= weight * beta ** ell * (1 + 1e-12))


class TestMomentBound:
    def test_identical(self):
        prof = power_sums(split(random_model(30, seed=1), 0.5), 10)
        b = moment_bound_lhs(prof, prof, 2.0)
        assert not b.per_order.any() and b.verdict

    def test_single_order_difference(self):
        p = power_sums(SplitParams(((0.2, 1),), (), 0.5, 0.5), 1)
        q = power_sums(SplitParams(((0.25, 1),), (), 0.5, 0.5), 1)
        b = moment_bound_lhs(p, q, 2.0)
        assert b.per_order[0] == pytest.approx(2 * 0.05)

    def test_threshold(self):
        prof = power_sums(SplitParams((), (), 0.5, 0.5), 2)
        assert moment_bound_lhs(prof, prof, 1.0, eps=0.1, C=10).threshold == \
            pytest.approx(0.1 / (10 * math.log(10)))

    def test_validation(self):
        a = power_sums(SplitParams((), (), 0.5, 0.5), 2)
        b = power_sums(SplitParams((), (), 0.5, 0.5), 3)
        with pytest.raises(ValueError):
            moment_bound_lhs(a, b, 1.0)
        with pytest.raises(ValueError):
            moment_bound_lhs(a, a, 0.0)

    def test_scale(self):
        assert moment_scale(0.1, 1.0) == 3.0
        assert moment_scale(0.1, 1e6) == pytest.approx(10 * math.sqrt(math.log(10) / 1e6))


class TestLogTaylor:
    def test_coefficients_exact(self):
        np.testing.assert_array_equal(log_coefficients(4), [1.0, -0.5, 1 / 3, -0.25])

    def test_all_zero(self):
        sp = split(model((0.0, 5)), 0.5)
        assert log_dft_taylor(sp, 0, 3, 11, 10) == 0

    def test_zero_frequency(self):
        m = random_model(40, seed=2)
        sp = split(m, 0.5)
        assert log_dft_taylor(sp, sp.high_multiplicity, 0, 17, 20) == 0

    def test_matches_closed_form(self):
        eps = 0.1
        for seed in range(10):
            m = random_model(600 + 100 * seed, seed)
            sigma = math.sqrt(m.variance() + 1)
            assert m.variance() >= 10 * math.log(10)
            M, L = sketch_parameters(eps, sigma)
            sp = split(m, 0.5)
            exact = dft_closed_form(m, M, L)
            for xi in range(-min(L, M // 2), min(L, M // 2) + 1):
                if abs(exact.coeff(xi)) < eps ** 3:
                    continue
                approx = np.exp(log_dft_taylor(sp, sp.high_multiplicity, xi, M, L))
                assert abs(approx - exact.coeff(xi)) <= eps ** 3

    def test_tail_term_bound(self):
        # where |e(xi/M) - 1| <= 1/2 the next term is at most 2^-lmax times the weight
        m = random_model(80, seed=4)
        sp = split(m, 0.5)
        M, lmax = 60, 12
        for xi in range(-4, 5):
            assert abs(np.exp(2j * np.pi * xi / M) - 1) <= 0.5
            a = log_dft_taylor(sp, sp.high_multiplicity, xi, M, lmax)
            b = log_dft_taylor(sp, sp.high_multiplicity, xi, M, lmax + 1)
            assert abs(a - b) <= 2.0 ** -lmax * m.n
