"""Seeded random PBD families used by the benchmark and acceptance runs."""

from __future__ import annotations

import math

import numpy as np

from .core import PbdModel, canonicalize

KINDS = ("uniform", "edges", "sparse", "concentrated", "mixed")


def random_model(n: int, seed: int, kind: str = "uniform") -> PbdModel:
    """An n-PBD whose parameters are drawn from the named family.

    ``uniform``: U(0, 1).  ``edges``: Beta(0.2, 0.2), mass near 0 and 1.
    ``sparse``: U(0, 0.05), Poisson-like.  ``concentrated``: N(0.5, 0.05)
    clipped.  ``mixed``: a quarter exact zeros, a quarter exact ones, the rest
    uniform.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        p = rng.random(n)
    elif kind == "edges":
        p = rng.beta(0.2, 0.2, n)
    elif kind == "sparse":
        p = rng.uniform(0.0, 0.05, n)
    elif kind == "concentrated":
        p = np.clip(rng.normal(0.5, 0.05, n), 0.0, 1.0)
    elif kind == "mixed":
        p = rng.random(n)
        u = rng.random(n)
        p[u < 0.25] = 0.0
        p[u > 0.75] = 1.0
    else:
        raise ValueError(f"unknown kind {kind!r}; choose from {KINDS}")
    return canonicalize(p)


def corpus_model(seed: int, n_max: int = 500) -> PbdModel:
    """Model number ``seed`` of the frozen corpus.

    The size is log-uniform on ``[1, n_max]`` and the family cycles through
    :data:`KINDS`, so small and large variances both appear.
    """
    rng = np.random.default_rng([seed, 7919])
    n = int(math.floor(math.exp(rng.uniform(0.0, math.log(n_max + 1)))))
    n = min(max(n, 1), n_max)
    kind = KINDS[seed % len(KINDS)]
    return random_model(n, seed, kind)
