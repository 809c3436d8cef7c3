"""Exact Poisson binomial models: pmf, moments, sampling and total variation.

Everything else in the package is checked against the routines here, so they
favour exactness over speed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

# Above this multiplicity a block's pmf comes from the closed-form binomial
# instead of repeated folding.
FOLD_LIMIT = 1024
# Inverse-CDF sampling is used up to this order; beyond it, block sums.
INVERSE_CDF_LIMIT = 10_000


@dataclass(frozen=True)
class PbdModel:
    """An n-PBD as distinct parameters with integer multiplicities.

    ``components`` is a tuple of ``(value, multiplicity)`` pairs sorted
    strictly ascending by value.
    """

    n: int
    components: Tuple[Tuple[float, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a PBD needs n >= 1")
        total = 0
        prev = None
        for value, mult in self.components:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"parameter {value!r} outside [0, 1]")
            if mult < 1 or int(mult) != mult:
                raise ValueError(f"multiplicity {mult!r} must be a positive integer")
            if prev is not None and value <= prev:
                raise ValueError("component values must be strictly increasing")
            prev = value
            total += mult
        if total != self.n:
            raise ValueError(f"multiplicities sum to {total}, expected n={self.n}")

    @classmethod
    def from_components(cls, pairs: Iterable[Tuple[float, int]]) -> "PbdModel":
        """Build a model from unsorted pairs, merging bitwise-equal values."""
        merged = {}
        for value, mult in pairs:
            value = float(value)
            mult = int(mult)
            if mult == 0:
                continue
            merged[value] = merged.get(value, 0) + mult
        comps = tuple(sorted(merged.items()))
        return cls(sum(m for _, m in comps), comps)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.components], dtype=float)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.components], dtype=np.int64)

    @property
    def distinct(self) -> int:
        return len(self.components)

    def expand(self) -> np.ndarray:
        """Sorted length-n parameter vector."""
        return np.repeat(self.values, self.multiplicities)

    def mean(self) -> float:
        return float(np.dot(self.multiplicities, self.values))

    def variance(self) -> float:
        v = self.values
        return float(np.dot(self.multiplicities, v * (1.0 - v)))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "components": [{"p": v, "multiplicity": m} for v, m in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PbdModel":
        comps = tuple((float(c["p"]), int(c["multiplicity"])) for c in data["components"])
        model = cls(int(data["n"]), comps)
        return model


def canonicalize(params: Sequence[float]) -> PbdModel:
    """Turn a raw parameter vector into a :class:`PbdModel`.

    Only bitwise-identical values are merged; near duplicates stay distinct.
    """
    params = [float(p) for p in params]
    if not params:
        raise ValueError("a PBD needs at least one parameter")
    for p in params:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"parameter {p!r} outside [0, 1]")
    return PbdModel.from_components((p, 1) for p in params)


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on ``offset, offset+1, ...``."""

    offset: int
    probs: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.probs))

    def total(self) -> float:
        return float(np.sum(self.probs))

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def variance(self) -> float:
        x = self.support - self.mean()
        return float(np.dot(x * x, self.probs))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


def _fold(acc: np.ndarray, p: float, times: int) -> np.ndarray:
    # two-term recurrence: new[j] = (1-p) acc[j] + p acc[j-1]
    q = 1.0 - p
    for _ in range(times):
        nxt = np.empty(len(acc) + 1, dtype=acc.dtype)
        nxt[:-1] = acc * q
        nxt[-1] = 0
        nxt[1:] += acc * p
        acc = nxt
    return acc


def binomial_block(p: float, m: int) -> np.ndarray:
    """Pmf of Binomial(m, p) on 0..m."""
    if p == 0.0 or p == 1.0 or m <= FOLD_LIMIT:
        return _fold(np.ones(1, dtype=np.longdouble), p, m).astype(float)
    return stats.binom.pmf(np.arange(m + 1), m, p)


def pmf_exact(model: PbdModel) -> Pmf:
    """Exact pmf over ``0..n`` by folding in each Bernoulli component.

    Accumulation happens in extended precision; blocks with very large
    multiplicity are convolved in as closed-form binomials.
    """
    acc = np.ones(1, dtype=np.longdouble)
    big = []
    for value, mult in model.components:
        if value in (0.0, 1.0) or mult <= FOLD_LIMIT:
            if value == 0.0:
                acc = np.concatenate([acc, np.zeros(mult, dtype=acc.dtype)])
            elif value == 1.0:
                acc = np.concatenate([np.zeros(mult, dtype=acc.dtype), acc])
            else:
                acc = _fold(acc, value, mult)
        else:
            big.append((value, mult))
    probs = acc.astype(float)
    for value, mult in big:
        probs = np.convolve(probs, binomial_block(value, mult))
    probs = np.clip(probs, 0.0, None)
    return Pmf(0, probs)


def mean(model: PbdModel) -> float:
    return model.mean()


def variance(model: PbdModel) -> float:
    return model.variance()


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    n_hint: Optional[int] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim != 1 or len(vals) == 0:
            raise ValueError("a sample set must be a non-empty 1-D sequence")
        if np.any(vals < 0):
            raise ValueError("samples must be non-negative integers")
        if self.n_hint is not None and np.any(vals > self.n_hint):
            raise ValueError(f"sample exceeds n={self.n_hint}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def head(self, count: int) -> "SampleSet":
        return SampleSet(self.values[:count], self.n_hint)

    def empirical_pmf(self) -> Pmf:
        counts = np.bincount(self.values)
        return Pmf(0, counts / len(self.values))


def sample(model: PbdModel, count: int, seed: int) -> SampleSet:
    """Draw ``count`` i.i.d. samples.

    For ``n <= 10**4`` this inverts the CDF of :func:`pmf_exact`; larger models
    sum one ``Binomial(m_i, q_i)`` draw per component block, which is the same
    as summing the individual Bernoullis.
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    if model.n <= INVERSE_CDF_LIMIT:
        cdf = pmf_exact(model).cdf()
        u = rng.random(count) * cdf[-1]
        draws = np.searchsorted(cdf, u, side="right")
        draws = np.minimum(draws, model.n)
    else:
        draws = np.zeros(count, dtype=np.int64)
        for value, mult in model.components:
            draws += rng.binomial(mult, value, size=count)
    return SampleSet(draws.astype(np.int64), model.n)


def tv_distance(a: Pmf, b: Pmf) -> float:
    """Total variation distance, half the L1 norm of the difference."""
    lo = min(a.offset, b.offset)
    hi = max(a.offset + len(a.probs), b.offset + len(b.probs))
    da = np.zeros(hi - lo)
    db = np.zeros(hi - lo)
    da[a.offset - lo: a.offset - lo + len(a.probs)] = a.probs
    db[b.offset - lo: b.offset - lo + len(b.probs)] = b.probs
    return float(min(1.0, 0.5 * np.sum(np.abs(da - db))))


# -- file formats -------------------------------------------------------------

PathLike = Union[str, Path]


def load_model(path: PathLike) -> PbdModel:
    with open(path, encoding="utf-8") as fh:
        return PbdModel.from_dict(json.load(fh))


def read_samples(path: PathLike, n_hint: Optional[int] = None) -> SampleSet:
    text = Path(path).read_text(encoding="utf-8")
    vals = [int(tok) for tok in text.split()]
    return SampleSet(np.array(vals, dtype=np.int64), n_hint)


def write_samples(samples: SampleSet, path: PathLike) -> None:
    body = "\n".join(str(int(v)) for v in samples.values)
    Path(path).write_text(body + "\n", encoding="utf-8")


def save_model(model: PbdModel, path: PathLike) -> None:
    from .jsonio import write

    write(model.to_dict(), path)
