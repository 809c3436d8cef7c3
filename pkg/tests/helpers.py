"""Shared builders for tests that plant a known model behind a system."""

import math

from pbdlearn.fourier import dft_closed_form, sketch_parameters
from pbdlearn.learner import _assignment_for
from pbdlearn.polysys import build_system, regime_for
from pbdlearn.structure import build_scheme, classify

# criterion number -> "criterion N PASS|FAIL: detail", filled by the acceptance tests
ACCEPTANCE = {}


def report(number, passed, detail):
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def planted(truth, eps=0.1, C=10.0, h=None):
    """System whose target sketch is the exact transform of ``truth``.

    Returns ``(system, assignment)`` with the assignment at the truth.
    """
    mu = truth.mean()
    sigma = math.sqrt(truth.variance() + 1.0)
    M, L = sketch_parameters(eps, sigma, C)
    if h is None:
        h = dft_closed_form(truth, M, L)
    scheme = build_scheme(sigma * sigma, eps)
    ms = classify(truth, scheme)
    sys_ = build_system(ms, h, mu, sigma, M, L, eps, regime_for(sigma, eps, C))
    return sys_, _assignment_for(ms, truth, scheme)
