"""Ground-truth helpers: exact TV, a grid-search learner and the cosine pair."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import PbdModel, SampleSet, canonicalize, pmf_exact, tv_distance

MAX_BRUTE_N = 4
MIN_GRID_STEP = 0.02


def tv_exact(a: PbdModel, b: PbdModel) -> float:
    return tv_distance(pmf_exact(a), pmf_exact(b))


def cos2pi(num: int, den: int) -> float:
    """``cos(2 pi num / den)`` with the angle folded into ``[0, pi/2]`` first,
    so symmetric arguments give bitwise-equal results."""
    r = num % den
    if 2 * r > den:
        r = den - r                       # cos is even; angle now in [0, pi]
    if 4 * r == den:
        return 0.0
    if 4 * r > den:
        # cos(t) = -cos(pi - t);  pi - 2 pi r / den = 2 pi (den - 2r) / (2 den)
        return -math.cos(2 * math.pi * (den - 2 * r) / (2 * den))
    return math.cos(2 * math.pi * r / den)


@dataclass(frozen=True)
class ChebyshevPair:
    n: int
    P: PbdModel
    Q: PbdModel
    tv: float
    min_param_gap: float

    def to_dict(self) -> dict:
        return {"n": self.n, "tv_exact": self.tv, "min_param_gap": self.min_param_gap}


def chebyshev_values(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """``p_j = (1 + cos(2 pi j / n)) / 8`` and the half-step shifted ``q_j``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    p = np.array([(1.0 + cos2pi(j, n)) / 8.0 for j in range(1, n + 1)])
    q = np.array([(1.0 + cos2pi(2 * j + 1, 2 * n)) / 8.0 for j in range(1, n + 1)])
    return p, q


def chebyshev_pair(n: int) -> ChebyshevPair:
    """Two n-PBDs with interleaved parameters and identical power sums below
    order n.  Their distance is tiny even though every parameter near 1/8 is
    well separated from the other model's parameters."""
    p, q = chebyshev_values(n)
    P, Q = canonicalize(p), canonicalize(q)
    near = {max(1, math.floor(n / 4)), max(1, math.ceil(n / 4))}
    gap = min(float(np.min(np.abs(q - p[j - 1]))) for j in near)
    return ChebyshevPair(n, P, Q, tv_exact(P, Q), gap)


def _pmfs_for(grid: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """All non-decreasing parameter tuples over ``grid`` and their pmfs."""
    tuples = np.array(list(itertools.combinations_with_replacement(range(len(grid)), n)))
    params = grid[tuples]
    pmf = np.ones((len(params), 1))
    for k in range(n):
        q = params[:, k:k + 1]
        nxt = np.zeros((len(params), pmf.shape[1] + 1))
        nxt[:, :-1] += pmf * (1 - q)
        nxt[:, 1:] += pmf * q
        pmf = nxt
    return params, pmf


def brute_force_learn(samples: SampleSet, n: int, grid_step: float = 0.05) -> PbdModel:
    """The grid model closest in TV to the empirical pmf.

    Ties go to the lexicographically smallest sorted parameter vector.
    """
    if not 1 <= n <= MAX_BRUTE_N:
        raise ValueError(f"brute force supports 1 <= n <= {MAX_BRUTE_N}")
    if not MIN_GRID_STEP <= grid_step <= 0.5:
        raise ValueError(f"grid step must lie in [{MIN_GRID_STEP}, 0.5]")
    if np.any(samples.values > n):
        raise ValueError("a sample exceeds n")
    steps = int(round(1.0 / grid_step))
    grid = np.linspace(0.0, 1.0, steps + 1)
    emp = np.bincount(samples.values, minlength=n + 1)[: n + 1] / len(samples)
    params, pmf = _pmfs_for(grid, n)
    tv = 0.5 * np.abs(pmf - emp).sum(axis=1)
    best = int(np.argmin(np.round(tv, 12)))
    return canonicalize(params[best])
