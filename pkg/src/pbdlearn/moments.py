"""Power sums of PBD parameters and the log-Fourier Taylor expansion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .core import PbdModel
from .fourier import e_ratio

Components = List[Tuple[float, int]]


@dataclass(frozen=True)
class SplitParams:
    """Components split by value: ``low <= low_threshold < middle <= high_threshold < high``."""

    low: Tuple[Tuple[float, int], ...]
    high: Tuple[Tuple[float, int], ...]
    low_threshold: float
    high_threshold: float
    middle: Tuple[Tuple[float, int], ...] = ()

    @property
    def high_multiplicity(self) -> int:
        return sum(m for _, m in self.high)


def split(model: PbdModel, low_threshold: float = 0.5,
          high_threshold: float = None) -> SplitParams:
    if high_threshold is None:
        high_threshold = low_threshold
    if not 0.0 < low_threshold <= high_threshold < 1.0:
        raise ValueError("need 0 < low_threshold <= high_threshold < 1")
    low, mid, high = [], [], []
    for v, m in model.components:
        if v <= low_threshold:
            low.append((v, m))
        elif v > high_threshold:
            high.append((v, m))
        else:
            mid.append((v, m))
    return SplitParams(tuple(low), tuple(high), low_threshold, high_threshold, tuple(mid))


@dataclass(frozen=True)
class MomentProfile:
    lmax: int
    low_sums: np.ndarray
    high_sums: np.ndarray


def _power_table(values, weights, lmax: int) -> np.ndarray:
    out = np.zeros(lmax)
    for v, w in zip(values, weights):
        acc = 1.0
        for k in range(lmax):
            acc *= v
            out[k] += w * acc
    return out


def power_sums(sp: SplitParams, lmax: int) -> MomentProfile:
    """``[sum m v^l]`` for the low side and ``[sum m (1-v)^l]`` for the high side."""
    if lmax < 1:
        raise ValueError("lmax must be >= 1")
    low = _power_table([v for v, _ in sp.low], [m for _, m in sp.low], lmax)
    high = _power_table([1.0 - v for v, _ in sp.high], [m for _, m in sp.high], lmax)
    return MomentProfile(lmax, low, high)


@dataclass(frozen=True)
class MomentBound:
    per_order: np.ndarray
    worst: float
    threshold: float

    @property
    def verdict(self) -> bool:
        return bool(np.all(self.per_order < self.threshold))


def moment_bound_lhs(prof_p: MomentProfile, prof_q: MomentProfile, A: float,
                     eps: float = 0.1, C: float = 10.0) -> MomentBound:
    """``A^l (|dlow_l| + |dhigh_l|)`` per order, with the verdict
    ``all entries < eps / (C log(1/eps))``."""
    if prof_p.lmax != prof_q.lmax:
        raise ValueError("profiles must share lmax")
    if A <= 0:
        raise ValueError("A must be positive")
    ell = np.arange(1, prof_p.lmax + 1)
    diff = np.abs(prof_p.low_sums - prof_q.low_sums) + np.abs(prof_p.high_sums - prof_q.high_sums)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.where(diff == 0.0, 0.0, np.power(A, ell) * diff)
    thr = eps / (C * math.log(1.0 / eps))
    return MomentBound(vals, float(np.max(vals)), thr)


def moment_scale(eps: float, variance: float, C: float = 10.0) -> float:
    """``A = min(3, C sqrt(log(1/eps) / V))``."""
    if variance <= 0:
        return 3.0
    return min(3.0, C * math.sqrt(math.log(1.0 / eps) / variance))


@lru_cache(maxsize=None)
def log_coefficients(lmax: int) -> np.ndarray:
    """``(-1)^(k+1) / k`` for k = 1..lmax, built from exact rationals."""
    return np.array([float(Fraction((-1) ** (k + 1), k)) for k in range(1, lmax + 1)])


def series_weights(xis, M: int, lmax: int):
    """Rows ``c_k (e(-xi/M)-1)^k`` and ``c_k (e(xi/M)-1)^k`` for k = 1..lmax.

    Returned as two complex arrays of shape ``(len(xis), lmax)``.
    """
    xis = np.asarray(xis, dtype=np.int64)
    c = log_coefficients(lmax)
    wl = e_ratio(-xis, M) - 1.0
    wh = e_ratio(xis, M) - 1.0
    k = np.arange(1, lmax + 1)
    low = c * np.power(wl[:, None], k)
    high = c * np.power(wh[:, None], k)
    return low, high


def log_dft_taylor(sp: SplitParams, high_multiplicity: int, xi: int, M: int,
                   lmax: int) -> complex:
    """Truncated Taylor expansion of ``log P^(xi)`` from the split parameters.

    ``-2 pi i m xi / M + sum_k c_k ((e(-xi/M)-1)^k S_k + (e(xi/M)-1)^k T_k)``
    where ``S_k``/``T_k`` are the low/high power sums.  Middle components are
    not represented; callers split at a single threshold.
    """
    prof = power_sums(sp, lmax)
    low, high = series_weights([xi], M, lmax)
    phase = -2j * math.pi * high_multiplicity * xi / M
    return complex(phase + low[0] @ prof.low_sums + high[0] @ prof.high_sums)
