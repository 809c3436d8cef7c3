"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run directly with ``python tests/test_acceptance.py`` or through pytest, where
the lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import binom

from helpers import planted, report
from pbdlearn.core import PbdModel, pmf_exact, sample
from pbdlearn.corpus import KINDS, corpus_model, random_model
from pbdlearn.fourier import (certify_tv_from_sketch, dft_closed_form, dft_of_pmf,
                              empirical_dft, fold_mod, sketch_l2_sq, sketch_parameters)
from pbdlearn.learner import (LearnConfig, LearnerExhausted, default_sample_budget,
                              estimate_mean_var, learn_shifted_binomial, proper_learn)
from pbdlearn.moments import moment_bound_lhs, moment_scale, power_sums, split
from pbdlearn.oracle import chebyshev_pair, tv_exact
from pbdlearn.polysys import Regime, regime_for
from pbdlearn.structure import (ENVELOPE_CONSTANT, SPARSE_OUTPUT_CONSTANT, build_scheme,
                                classify, count_multisets, envelope_exponent, is_admissible,
                                sparsify)

pytestmark = pytest.mark.slow

EPS = 0.1
CORPUS_SEEDS = range(1, 51)
CORPUS_TIME_BUDGET = 60.0


def corpus_runs():
    """Per-seed (sample seed, learner seed) pairs, the same split ``pbd bench`` uses."""
    streams = np.random.SeedSequence(1).spawn(len(CORPUS_SEEDS))
    return [(seed, *(int(s) for s in ss.generate_state(2)))
            for seed, ss in zip(CORPUS_SEEDS, streams)]


def test_criterion_01_corpus_learning():
    ok, failures, t0 = 0, [], time.perf_counter()
    for seed, sample_seed, learn_seed in corpus_runs():
        truth = corpus_model(seed)
        cfg = LearnConfig(eps=EPS, seed=learn_seed, time_budget=CORPUS_TIME_BUDGET)
        samples = sample(truth, cfg.budget, sample_seed)
        try:
            tv = tv_exact(truth, proper_learn(samples, truth.n, cfg).output)
        except LearnerExhausted:
            tv = float("nan")
        if tv <= EPS:
            ok += 1
        else:
            failures.append(seed)
    total = time.perf_counter() - t0
    passed = ok >= 45 and total <= 1800
    assert report(1, passed, f"{ok}/50 corpus runs with TV <= {EPS} in {total:.1f} s "
                             f"(failed seeds {failures})")


def test_criterion_02_dft_consistency():
    rng = np.random.default_rng(2)
    worst_cf, worst_pl = 0.0, 0.0
    for i in range(200):
        n = int(math.exp(rng.uniform(0, math.log(2000))))
        model = random_model(n, 10_000 + i, KINDS[i % len(KINDS)])
        M = int(math.exp(rng.uniform(math.log(2), math.log(4096))))
        L = min(M // 2, 64)
        pmf = pmf_exact(model)
        a = dft_closed_form(model, M, L).coeffs
        b = dft_of_pmf(pmf, M, L).coeffs
        worst_cf = max(worst_cf, float(np.max(np.abs(a - b))))
        full = dft_closed_form(model, M, M // 2).full_period()
        lhs = float(np.sum(np.abs(full) ** 2)) / M
        rhs = float(np.sum(fold_mod(pmf, M) ** 2))
        worst_pl = max(worst_pl, abs(lhs - rhs))
    passed = worst_cf <= 1e-10 and worst_pl <= 1e-9
    assert report(2, passed, f"closed form vs direct max {worst_cf:.2e}, "
                             f"Plancherel max {worst_pl:.2e} over 200 models")


def test_criterion_03_certificate_soundness():
    rng = np.random.default_rng(3)
    certified, sound, attempts = 0, 0, 0
    while certified < 100 and attempts < 5000:
        attempts += 1
        n = int(rng.integers(10, 400))
        p = random_model(n, 20_000 + attempts, KINDS[attempts % len(KINDS)])
        scale = 10 ** rng.uniform(-4, -1)
        q = PbdModel.from_components(
            (float(np.clip(v + rng.normal(0, scale), 0, 1)), 1) for v in p.expand())
        sigma = math.sqrt(p.variance() + 1)
        M, L = sketch_parameters(EPS, sigma)
        cert = certify_tv_from_sketch(dft_closed_form(p, M, L), dft_closed_form(q, M, L),
                                      q.mean() - p.mean(), p.variance(), q.variance(), EPS)
        if cert:
            certified += 1
            sound += tv_exact(p, q) <= EPS
    passed = certified == 100 and sound == 100
    assert report(3, passed, f"{sound}/{certified} certified pairs have TV <= {EPS} "
                             f"({attempts} pairs drawn)")


def rotate_triple(x, theta):
    """Rotate ``x`` about the all-ones axis: sum and sum of squares are unchanged."""
    c = x.mean()
    u = x - c
    k = np.ones(3) / math.sqrt(3)
    return c + u * math.cos(theta) + np.cross(k, u) * math.sin(theta)


def test_criterion_04_moment_bound_soundness():
    rng = np.random.default_rng(4)
    C = 10.0
    lmax = math.ceil(C * C * math.log(1 / EPS))
    verdicts, sound, attempts = 0, 0, 0
    while verdicts < 100 and attempts < 20_000:
        attempts += 1
        n = int(rng.integers(20, 3000))
        p = random_model(n, 30_000 + attempts, KINDS[attempts % len(KINDS)]).expand()
        idx = rng.choice(n, 3, replace=False)
        q = p.copy()
        q[idx] = rotate_triple(p[idx], 10 ** rng.uniform(-4, -1))
        if np.any(q < 0) or np.any(q > 1):
            continue
        P, Q = PbdModel.from_components((v, 1) for v in p), \
            PbdModel.from_components((v, 1) for v in q)
        A = moment_scale(EPS, P.variance(), C)
        bound = moment_bound_lhs(power_sums(split(P, 0.5), lmax),
                                 power_sums(split(Q, 0.5), lmax), A, EPS, C)
        if bound.verdict:
            verdicts += 1
            sound += tv_exact(P, Q) < EPS
    passed = verdicts == 100 and sound == 100
    assert report(4, passed, f"{sound}/{verdicts} verdict-true same-mean same-variance pairs "
                             f"have TV < {EPS} ({attempts} pairs drawn)")


def test_criterion_05_sparsifier():
    eps = 0.01
    cap = SPARSE_OUTPUT_CONSTANT * math.log(1 / eps)
    good, worst_tv, worst_distinct, fallbacks = 0, 0.0, 0, 0
    for i in range(50):
        model = random_model(1000, 40_000 + i, KINDS[i % len(KINDS)])
        res = sparsify(model, eps)
        out = res.model
        distinct = sum(1 for v, _ in out.components if 0.0 < v < 1.0)
        tv = tv_exact(model, out)
        dvar = out.variance() - model.variance()
        ok = (out.n == 1000 and distinct <= cap and abs(out.mean() - model.mean()) <= 1e-8
              and -eps ** 3 <= dvar <= 1e-8 and tv <= eps)
        good += ok
        worst_tv = max(worst_tv, tv)
        worst_distinct = max(worst_distinct, distinct)
        fallbacks += len(res.fallbacks)
    assert report(5, good == 50, f"{good}/50 models pass; max distinct {worst_distinct} "
                                 f"(cap {cap:.0f}), max TV {worst_tv:.1e}, "
                                 f"{fallbacks} band fallbacks")


def test_criterion_06_enumeration():
    witnesses = 0
    for seed in CORPUS_SEEDS:
        model = corpus_model(seed)
        res = sparsify(model, EPS)
        ms = classify(res.model, res.scheme)
        witnesses += is_admissible(ms, res.scheme, model.n, model.mean())
    counts = {eps: count_multisets(build_scheme(50.0, eps), 200, 100.0) for eps in (0.2, 0.1)}
    exps = {eps: envelope_exponent(c, eps) for eps, c in counts.items()}
    within = all(c <= ENVELOPE_CONSTANT for c in exps.values())
    passed = witnesses == 50 and within and counts[0.1] > counts[0.2]
    detail = ", ".join(f"eps={eps}: |stream|={counts[eps]:.3e} (c={exps[eps]:.1f})"
                       for eps in counts)
    assert report(6, passed, f"witness {witnesses}/50; {detail}; frozen c={ENVELOPE_CONSTANT:g}")


def regime_models(regime, count, seed0):
    rng = np.random.default_rng(seed0)
    out, i = [], 0
    while len(out) < count:
        i += 1
        if regime is Regime.SMALL:
            n = int(math.exp(rng.uniform(0, math.log(1000))))
        else:
            n = int(rng.integers(2000, 5001))
        m = random_model(n, seed0 + i, KINDS[i % len(KINDS)])
        if regime_for(math.sqrt(m.variance() + 1), EPS) is regime:
            out.append(m)
    return out


def test_criterion_07_claims_bound():
    worst = {}
    for regime, seed0 in ((Regime.SMALL, 50_000), (Regime.LARGE, 60_000)):
        err = 0.0
        for truth in regime_models(regime, 50, seed0):
            sys_, q = planted(truth, EPS)
            exact = dft_closed_form(truth, sys_.M, sys_.L).coeffs
            err = max(err, float(np.max(np.abs(sys_.q_xi(q) - exact))))
        worst[regime.value] = err
    passed = all(v < EPS ** 3 for v in worst.values())
    assert report(7, passed, f"max |q_xi - Q^(xi)|: small {worst['small']:.1e}, "
                             f"large {worst['large']:.1e} (bound {EPS ** 3:.0e})")


def test_criterion_08_chebyshev_pair():
    pairs = {n: chebyshev_pair(n) for n in (8, 16, 24, 32)}
    tvs = [pairs[n].tv for n in (8, 16, 24, 32)]
    monotone = all(a >= b for a, b in zip(tvs, tvs[1:]))
    gaps = all(pairs[n].min_param_gap >= 1 / (4 * n) for n in (16, 32))
    passed = pairs[16].tv <= 1e-3 and pairs[32].tv <= 1e-6 and monotone and gaps
    assert report(8, passed, "tv " + ", ".join(f"n={n}: {pairs[n].tv:.1e}" for n in pairs)
                  + f"; gap n=16 {pairs[16].min_param_gap:.4f}, "
                    f"n=32 {pairs[32].min_param_gap:.4f}")


def shifted_binomial_tv(n, p, learned):
    """TV on a +-12 sd window around the truth's mean plus Hoeffding tail bounds."""
    mean, sd = n * p, math.sqrt(n * p * (1 - p))
    lo, hi = int(math.floor(mean - 12 * sd)), int(math.ceil(mean + 12 * sd))
    xs = np.arange(lo, hi + 1)
    truth_pmf = binom.pmf(xs, n, p)
    t = sum(m for v, m in learned.components if v == 1.0)
    block = [(v, m) for v, m in learned.components if 0.0 < v < 1.0]
    m, q = block[0][1], block[0][0]
    learned_pmf = binom.pmf(xs - t, m, q)
    inside = 0.5 * float(np.sum(np.abs(truth_pmf - learned_pmf)))
    tail_truth = 2 * math.exp(-2 * (12 * sd) ** 2 / n)
    gap = min(t + m * q - lo, hi - (t + m * q))
    tail_learned = 2 * math.exp(-2 * gap ** 2 / m) if gap > 0 else 1.0
    return inside + 0.5 * (tail_truth + tail_learned)


def test_criterion_09_large_variance_branch():
    n, p = 10 ** 6, 0.3
    truth = PbdModel.from_components([(p, n)])
    count = math.ceil(100 / EPS ** 2)
    learned = learn_shifted_binomial(sample(truth, count, seed=9), EPS, n)
    tv = shifted_binomial_tv(n, p, learned)
    assert report(9, tv <= EPS, f"TV {tv:.4f} (window +-12 sd, tails bounded) "
                                f"with {count} samples; learned {learned.components}")


def test_criterion_10_sketch_budget():
    N = default_sample_budget(EPS)
    hits = 0
    for seed in range(1, 101):
        truth = corpus_model(seed)
        s = sample(truth, N, seed=70_000 + seed)
        _, sigma = estimate_mean_var(s)
        M, L = sketch_parameters(EPS, sigma)
        hits += sketch_l2_sq(empirical_dft(s, M, L), dft_closed_form(truth, M, L)) < EPS ** 2 / 8
    assert report(10, hits >= 95, f"{hits}/100 runs with sketch error < eps^2/8 at N = {N}")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
