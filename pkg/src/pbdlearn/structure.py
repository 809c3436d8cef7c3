"""Interval scheme, multiplicity multisets and the constructive sparsifier.

The scheme splits (0, 1) into doubly geometric bands around 0 and 1.  A PBD
can be rewritten, without moving far in total variation, so that each band
holds only a handful of distinct parameters; the enumerator walks over all
ways of assigning multiplicities to bands.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .core import PbdModel
from .moments import moment_scale

log = logging.getLogger(__name__)

DISTINCT_CAP_CONSTANT = 4      # c1
TRIPLE_CAP_CONSTANT = 64       # c2
SPARSE_OUTPUT_CONSTANT = 40    # c3
COUNT_CAP_FACTOR = 4
# Frozen envelope exponent: |stream| <= (1/eps)^(c log log(1/eps)).
ENVELOPE_CONSTANT = 64.0


class Band(NamedTuple):
    side: str          # "I" (near 0), "J" (near 1), "zero" or "one"
    level: int
    lo: float
    hi: float

    @property
    def label(self) -> str:
        if self.side in ("zero", "one"):
            return self.side
        return f"{self.side}{self.level}"

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def var_range(self) -> Tuple[float, float]:
        """Range of ``q (1 - q)`` for q in the band."""
        ends = (self.lo * (1 - self.lo), self.hi * (1 - self.hi))
        top = 0.25 if self.lo <= 0.5 <= self.hi else max(ends)
        return min(ends), top


ZERO = Band("zero", -1, 0.0, 0.0)
ONE = Band("one", -1, 1.0, 1.0)


@dataclass(frozen=True)
class IntervalScheme:
    eps: float
    variance: float
    rate: float
    levels: Tuple[float, ...]                 # B_0 .. B_D
    distinct_caps: Tuple[int, ...]            # per level 0..D
    count_caps: Tuple[int, ...]               # per level 0..D

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def band(self, side: str, level: int) -> Band:
        B = self.levels
        D = self.depth
        if level == 0:
            lo, hi = B[0], 0.5
        elif level <= D:
            lo, hi = B[level], B[level - 1]
        elif level == D + 1:
            lo, hi = 0.0, B[D]
        else:
            raise ValueError(f"no level {level}")
        if side == "I":
            return Band("I", level, lo, hi)
        if side == "J":
            return Band("J", level, 1.0 - hi, 1.0 - lo)
        raise ValueError(side)

    def bands(self) -> List[Band]:
        out = []
        for i in range(self.depth + 2):
            out.append(self.band("I", i))
            out.append(self.band("J", i))
        return out

    def classify(self, value: float) -> Band:
        """Band containing ``value``; the partition of [0, 1] is
        ``{0} | I_{D+1} | I_D | ... | I_0 | J_0 | ... | J_{D+1} | {1}``."""
        if value == 0.0:
            return ZERO
        if value == 1.0:
            return ONE
        B = self.levels
        D = self.depth
        if value <= 0.5:
            if value >= B[0]:
                return self.band("I", 0)
            for i in range(D):
                if B[i + 1] <= value < B[i]:
                    return self.band("I", i + 1)
            return self.band("I", D + 1)
        u = 1.0 - value
        if value <= 1.0 - B[0]:
            return self.band("J", 0)
        for i in range(D):
            if 1.0 - B[i] < value <= 1.0 - B[i + 1]:
                return self.band("J", i + 1)
        return self.band("J", D + 1)

    def caps(self, band: Band) -> Tuple[int, int]:
        """(distinct cap, count cap) for a band."""
        if band.level == self.depth + 1:
            return 1, 1
        return self.distinct_caps[band.level], self.count_caps[band.level]

    def open_bounds(self, band: Band) -> Tuple[float, float]:
        """Closed bounds strictly inside the band's half-open ends."""
        lo, hi = band.lo, band.hi
        if band.side == "I" and band.level > 0:
            hi = np.nextafter(hi, -np.inf)
        if band.side == "J" and band.level > 0:
            lo = np.nextafter(lo, np.inf)
        if band.side == "J" and band.level == 0:
            lo = np.nextafter(lo, np.inf)
        if band.level == self.depth + 1:
            if band.side == "I":
                lo = np.nextafter(0.0, 1.0)
            else:
                hi = np.nextafter(1.0, 0.0)
        return float(lo), float(hi)


def build_scheme(variance: float, eps: float,
                 c1: int = DISTINCT_CAP_CONSTANT) -> IntervalScheme:
    """Bands ``B_i = R^(2^i)`` with ``R = min(1/4, sqrt(ln(1/eps)/Var))``.

    The depth ``D`` is the least ``i`` with ``B_i <= eps^3``.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if variance < 0:
        raise ValueError("variance must be non-negative")
    v = variance if variance > 0 else variance + 1.0
    lg = math.log(1.0 / eps)
    R = min(0.25, math.sqrt(lg / v))
    levels = [R]
    while levels[-1] > eps ** 3:
        levels.append(levels[-1] * levels[-1])
    distinct = tuple(math.ceil(c1 * lg / math.log(1.0 / b)) for b in levels)
    counts = tuple(int(math.floor(COUNT_CAP_FACTOR * v / b)) for b in levels)
    return IntervalScheme(eps, float(v), R, tuple(levels), distinct, counts)


class Triple(NamedTuple):
    m: int
    a: float
    b: float
    band: str

    @property
    def free(self) -> bool:
        return self.a < self.b


@dataclass(frozen=True)
class MultiplicityMultiset:
    triples: Tuple[Triple, ...]

    @classmethod
    def of(cls, triples: Sequence[Triple]) -> "MultiplicityMultiset":
        return cls(tuple(sorted(triples, key=lambda t: (t.a, t.b, -t.m))))

    @property
    def n(self) -> int:
        return sum(t.m for t in self.triples)

    @property
    def free_triples(self) -> Tuple[Triple, ...]:
        return tuple(t for t in self.triples if t.free)

    @property
    def free_count(self) -> int:
        return len(self.free_triples)

    @property
    def ones(self) -> int:
        return sum(t.m for t in self.triples if t.band == "one")

    @property
    def zeros(self) -> int:
        return sum(t.m for t in self.triples if t.band == "zero")

    def key(self) -> Tuple:
        return tuple((t.band, t.m) for t in self.triples)

    def mean_range(self) -> Tuple[float, float]:
        lo = sum(t.m * t.a for t in self.triples)
        hi = sum(t.m * t.b for t in self.triples)
        return lo, hi

    def var_range(self) -> Tuple[float, float]:
        lo = hi = 0.0
        for t in self.triples:
            vlo, vhi = Band("I", 0, t.a, t.b).var_range()
            lo += t.m * vlo
            hi += t.m * vhi
        return lo, hi

    def to_dict(self) -> dict:
        return {"triples": [{"m": t.m, "a": t.a, "b": t.b, "band": t.band}
                            for t in self.triples]}


def classify(model: PbdModel, scheme: IntervalScheme) -> MultiplicityMultiset:
    """The multiset of (multiplicity, band) triples realised by ``model``."""
    triples = []
    for value, mult in model.components:
        band = scheme.classify(value)
        triples.append(Triple(int(mult), band.lo, band.hi, band.label))
    return MultiplicityMultiset.of(triples)


# -- enumeration --------------------------------------------------------------

def ones_window(n: int, eps: float) -> int:
    return min(n, math.ceil(1.0 / eps ** 3))


def spiral(center: int, lo: int, hi: int) -> Iterator[int]:
    """center, center+1, center-1, center+2, ... clipped to [lo, hi]."""
    if hi < lo:
        return
    center = min(max(center, lo), hi) if not lo <= center <= hi else center
    yield center
    step = 1
    while center + step <= hi or center - step >= lo:
        if center + step <= hi:
            yield center + step
        if center - step >= lo:
            yield center - step
        step += 1


def _partitions(total_max: int, parts: int, largest: int) -> Iterator[Tuple[int, ...]]:
    """Non-increasing tuples of ``parts`` positive ints, first <= largest, sum <= total_max."""
    if parts == 0:
        yield ()
        return
    top = min(largest, total_max - (parts - 1))
    for first in range(1, top + 1):
        for rest in _partitions(total_max - first, parts - 1, first):
            yield (first,) + rest


@dataclass(frozen=True)
class MomentWindow:
    """Mean and variance ranges a multiset must be able to reach."""

    mean_lo: float
    mean_hi: float
    var_lo: float
    var_hi: float

    def admits(self, ms: MultiplicityMultiset) -> bool:
        mlo, mhi = ms.mean_range()
        vlo, vhi = ms.var_range()
        return (mlo <= self.mean_hi and mhi >= self.mean_lo
                and vlo <= self.var_hi and vhi >= self.var_lo)


def _bucket_order(scheme: IntervalScheme) -> List[Band]:
    order = []
    for i in range(scheme.depth + 2):
        order.append(scheme.band("I", i))
        order.append(scheme.band("J", i))
    return order


def max_free(scheme: IntervalScheme) -> int:
    eps = scheme.eps
    total = sum(scheme.caps(b)[0] for b in _bucket_order(scheme))
    return min(total, math.floor(TRIPLE_CAP_CONSTANT * math.log(1.0 / eps)))


def enumerate_multisets(scheme: IntervalScheme, n: int, mean_estimate: float,
                        eps: Optional[float] = None, *, window: Optional[int] = None,
                        moments: Optional[MomentWindow] = None,
                        free_counts: Optional[Sequence[int]] = None,
                        ones_counts: Optional[Sequence[int]] = None
                        ) -> Iterator[MultiplicityMultiset]:
    """Lazily yield every admissible multiplicity multiset.

    Order: ascending number of free triples, then number of ones spiralling
    out from ``floor(mean_estimate)``, then band by band.  ``moments`` prunes
    branches whose mean/variance range cannot meet the window;
    ``free_counts``/``ones_counts`` restrict the stream to a sub-stream.
    Neither changes which multisets the unrestricted stream contains.
    """
    if n < 1:
        return
    eps = scheme.eps if eps is None else eps
    W = ones_window(n, eps) if window is None else window
    center = int(math.floor(mean_estimate))
    t_lo, t_hi = max(0, center - W), min(n, center + W)
    buckets = _bucket_order(scheme)
    caps = [scheme.caps(b) for b in buckets]
    fmax = max_free(scheme)
    fs = range(fmax + 1) if free_counts is None else [f for f in free_counts if 0 <= f <= fmax]
    ts = list(spiral(center, t_lo, t_hi)) if ones_counts is None else \
        [t for t in ones_counts if t_lo <= t <= t_hi]
    vranges = [b.var_range() for b in buckets]
    # suffix maxima for the pruning bounds
    nb = len(buckets)
    suffix_b = [0.0] * (nb + 1)
    suffix_v = [0.0] * (nb + 1)
    suffix_slots = [0] * (nb + 1)
    for i in range(nb - 1, -1, -1):
        suffix_b[i] = max(suffix_b[i + 1], buckets[i].hi)
        suffix_v[i] = max(suffix_v[i + 1], vranges[i][1])
        suffix_slots[i] = suffix_slots[i + 1] + caps[i][0]

    for f in fs:
        for t in ts:
            mass = n - t
            if moments is not None and t > moments.mean_hi:
                continue
            yield from _assign(buckets, caps, vranges, suffix_b, suffix_v, suffix_slots,
                               0, f, mass, t, n, [], 0.0, 0.0, 0.0, 0.0, moments)


def _assign(buckets, caps, vranges, suffix_b, suffix_v, suffix_slots, idx, slots, mass,
            t, n, chosen, mlo, mhi, vlo, vhi, moments):
    if slots > suffix_slots[idx]:
        return
    if moments is not None:
        if t + mlo > moments.mean_hi or vlo > moments.var_hi:
            return
        if t + mhi + mass * suffix_b[idx] < moments.mean_lo:
            return
        if vhi + mass * suffix_v[idx] < moments.var_lo:
            return
    if idx == len(buckets) or slots == 0:
        if slots:
            return
        triples = list(chosen)
        if t:
            triples.append(Triple(t, 1.0, 1.0, "one"))
        if mass:
            triples.append(Triple(mass, 0.0, 0.0, "zero"))
        ms = MultiplicityMultiset.of(triples)
        if moments is None or moments.admits(ms):
            yield ms
        return
    band = buckets[idx]
    dcap, ccap = caps[idx]
    lim = min(ccap, mass)
    for k in range(0, min(dcap, slots) + 1):
        if k and lim < k:
            break
        for parts in _partitions(lim, k, lim):
            s = sum(parts)
            add = [Triple(m, band.lo, band.hi, band.label) for m in parts]
            v0, v1 = vranges[idx]
            yield from _assign(buckets, caps, vranges, suffix_b, suffix_v, suffix_slots,
                               idx + 1, slots - k, mass - s, t, n, chosen + add,
                               mlo + s * band.lo, mhi + s * band.hi,
                               vlo + s * v0, vhi + s * v1, moments)


def is_admissible(ms: MultiplicityMultiset, scheme: IntervalScheme, n: int,
                  mean_estimate: float, window: Optional[int] = None) -> bool:
    """Membership test mirroring :func:`enumerate_multisets`."""
    if ms.n != n:
        return False
    W = ones_window(n, scheme.eps) if window is None else window
    center = int(math.floor(mean_estimate))
    t = ms.ones
    if not max(0, center - W) <= t <= min(n, center + W):
        return False
    if ms.free_count > max_free(scheme):
        return False
    per_band: Dict[str, List[int]] = {}
    labels = {b.label: b for b in scheme.bands()}
    for tr in ms.triples:
        if tr.band in ("zero", "one"):
            continue
        band = labels.get(tr.band)
        if band is None or (band.lo, band.hi) != (tr.a, tr.b):
            return False
        per_band.setdefault(tr.band, []).append(tr.m)
    for label, ms_ in per_band.items():
        dcap, ccap = scheme.caps(labels[label])
        if len(ms_) > dcap or sum(ms_) > ccap:
            return False
    if sum(1 for tr in ms.triples if tr.band == "one") > 1:
        return False
    if sum(1 for tr in ms.triples if tr.band == "zero") > 1:
        return False
    return True


def _band_polynomial(dcap: int, ccap: int, degree: int) -> List[int]:
    """Coefficient s = number of multisets of <= dcap positive parts summing to s <= ccap."""
    top = min(ccap, degree)
    # p[k][s]: partitions of s into exactly k parts
    p = [[0] * (top + 1) for _ in range(dcap + 1)]
    p[0][0] = 1
    for k in range(1, dcap + 1):
        for s in range(k, top + 1):
            p[k][s] = p[k - 1][s - 1] + p[k][s - k]
    return [sum(p[k][s] for k in range(dcap + 1)) for s in range(top + 1)]


def count_multisets(scheme: IntervalScheme, n: int, mean_estimate: float,
                    window: Optional[int] = None) -> int:
    """Exact size of the unrestricted stream, by generating functions."""
    buckets = _bucket_order(scheme)
    total_slots = sum(scheme.caps(b)[0] for b in buckets)
    if total_slots > max_free(scheme):
        raise ValueError("triple cap binds; generating-function count does not apply")
    poly = [1]
    for b in buckets:
        dcap, ccap = scheme.caps(b)
        g = _band_polynomial(dcap, ccap, n)
        out = [0] * min(len(poly) + len(g) - 1, n + 1)
        for i, a in enumerate(poly):
            if a == 0:
                continue
            for j, c in enumerate(g):
                if i + j > n:
                    break
                out[i + j] += a * c
        poly = out
    prefix = []
    acc = 0
    for c in poly + [0] * (n + 1 - len(poly)):
        acc += c
        prefix.append(acc)
    W = ones_window(n, scheme.eps) if window is None else window
    center = int(math.floor(mean_estimate))
    return sum(prefix[n - t] for t in range(max(0, center - W), min(n, center + W) + 1))


def envelope_exponent(count: int, eps: float) -> float:
    """``c`` with ``count = (1/eps)^(c log log(1/eps))``."""
    lg = math.log(1.0 / eps)
    return math.log(count) / (lg * math.log(lg))


# -- sparsifier ---------------------------------------------------------------

@dataclass
class SparsifyResult:
    model: PbdModel
    scheme: IntervalScheme
    distinct_before: int
    distinct_after: int
    mean_delta: float
    var_delta: float
    merges: int = 0
    fallbacks: List[str] = field(default_factory=list)

    def metadata(self) -> dict:
        return {
            "distinct_before": self.distinct_before,
            "distinct_after": self.distinct_after,
            "mean_delta": self.mean_delta,
            "var_delta": self.var_delta,
            "merges": self.merges,
            "fallbacks": list(self.fallbacks),
        }


def _merge_outer(values: List[float], limit: float, mean_tol: float) -> Tuple[List[float], List[float], int]:
    """Repeatedly replace two values below ``limit`` by 0 and their sum.

    Returns (values still below limit, values pushed out, merge count).
    """
    heap = list(values)
    heapq.heapify(heap)
    out = []
    merges = 0
    while len(heap) >= 2:
        a = heapq.heappop(heap)
        b = heapq.heappop(heap)
        s = a + b
        assert abs(s - (a + b)) <= mean_tol
        # variance drops by exactly 2ab
        assert s * (1 - s) <= a * (1 - a) + b * (1 - b) + 1e-15
        merges += 1
        if s < limit:
            heapq.heappush(heap, s)
        else:
            out.append(s)
    return heap, out, merges


def _match_band(values: np.ndarray, lo: float, hi: float, K: int, A: float,
                eps: float, starts: int, seed: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Replace ``values`` (distances from the band's end point) by at most K
    distinct values in [lo, hi] with the same power sums up to order K.

    Returns (distinct values, multiplicities) or None.
    """
    values = np.sort(values)
    total = len(values)
    d = min(K, total)
    ell = np.arange(1, K + 1)
    target = np.array([np.sum(values ** l) for l in ell])
    tol = eps ** 3 / (2.0 * A ** ell)
    scale = 1.0 / tol
    # the first two orders act as (nearly) hard constraints
    hard = np.where(ell <= 2, 1e4, 1.0)
    rng = np.random.default_rng(seed)

    def groups(kind: int):
        if kind == 0:
            sizes = np.full(d, total // d)
            sizes[: total % d] += 1
        else:
            cuts = np.sort(rng.choice(np.arange(1, total), size=d - 1, replace=False))
            sizes = np.diff(np.concatenate([[0], cuts, [total]]))
        return sizes

    for s in range(starts):
        sizes = groups(0 if s == 0 else 1)
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        x0 = np.array([values[bounds[j]:bounds[j + 1]].mean() for j in range(d)])
        if s > 1:
            x0 = x0 + rng.normal(scale=0.05 * (hi - lo), size=d)
        x0 = np.clip(x0, lo, hi)

        def resid(x):
            pw = np.power.outer(x, ell)
            return (sizes @ pw - target) * scale

        def jac(x):
            pw = ell * np.power.outer(x, ell - 1)
            return (sizes[:, None] * pw).T * scale[:, None]

        def weighted(x):
            return resid(x) * hard

        def wjac(x):
            return jac(x) * hard[:, None]

        try:
            sol = least_squares(weighted, x0, jac=wjac, bounds=(lo, hi), method="trf",
                                x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=3000)
        except ValueError:
            continue
        x = sol.x
        r = resid(x)
        if np.all(np.abs(r[2:]) < 1.0):
            x, ok = _pin_two_moments(x, sizes, target[:2], lo, hi)
            if ok and np.all(np.abs(resid(x)) < 1.0):
                return x, sizes
    return None


def _cheb_moments(y: np.ndarray, m: np.ndarray, K: int, grad: bool = False):
    """``sum m T_k(y)`` for k = 1..K and, optionally, ``m T_k'(y)`` per point."""
    T = np.empty((K + 1, len(y)))
    U = np.empty((K + 1, len(y)))
    T[0], U[0] = 1.0, 1.0
    if K >= 1:
        T[1], U[1] = y, 2 * y
    for k in range(2, K + 1):
        T[k] = 2 * y * T[k - 1] - T[k - 2]
        U[k] = 2 * y * U[k - 1] - U[k - 2]
    mom = T[1:] @ m
    if not grad:
        return mom
    k = np.arange(1, K + 1)[:, None]
    return mom, k * U[:-1] * m


def _gauss_newton(x, m, target, K, lo, hi, iters: int = 40):
    """Minimum-norm Newton steps restoring the Chebyshev moments of orders
    1..K on [lo, hi] (equivalently the power sums of orders 1..K)."""
    c, w = 0.5 * (lo + hi), 0.5 * (hi - lo)
    tol = 1e-13 * max(1.0, float(np.sum(m)))
    for _ in range(iters):
        mom, J = _cheb_moments((x - c) / w, m, K, grad=True)
        f = mom - target
        if np.max(np.abs(f)) <= tol:
            return x, bool(np.all((x >= lo) & (x <= hi)))
        step, *_ = np.linalg.lstsq(J / w, f, rcond=None)
        x = x - step
        if not np.all(np.isfinite(x)):
            return x, False
    f = _cheb_moments((x - c) / w, m, K) - target
    return x, bool(np.max(np.abs(f)) <= 100 * tol and np.all((x >= lo) & (x <= hi)))


def _within_tolerance(orig: np.ndarray, res, K: int, A: float, eps: float) -> bool:
    x, m = res
    ell = np.arange(1, K + 1)
    diff = np.abs(m @ np.power.outer(x, ell) - np.array([np.sum(orig ** l) for l in ell]))
    return bool(np.all(A ** ell * diff < eps ** 3 / 2))


def _reduce_band(values: np.ndarray, K: int, lo: float, hi: float, tries: int = 8):
    """Greedy moment-preserving merge down to ``K`` distinct values.

    The pair whose merge disturbs the power sums least is replaced by its
    weighted mean; a minimum-norm Newton correction then restores the power
    sums of orders 1..K.  Returns (values, multiplicities) or None.
    """
    x, m = np.unique(values, return_counts=True)
    x = x.astype(float)
    m = m.astype(float)
    c, w = 0.5 * (lo + hi), 0.5 * (hi - lo)
    target = _cheb_moments((x - c) / w, m, K)
    while len(x) > K:
        cost = (m[:-1] * m[1:] / (m[:-1] + m[1:])) * np.diff(x) ** 2
        for j in np.argsort(cost, kind="stable")[:tries]:
            mm = m[j] + m[j + 1]
            xm = (m[j] * x[j] + m[j + 1] * x[j + 1]) / mm
            x2 = np.concatenate([x[:j], [xm], x[j + 2:]])
            m2 = np.concatenate([m[:j], [mm], m[j + 2:]])
            x3, ok = _gauss_newton(x2, m2, target, K, lo, hi)
            if ok:
                order = np.argsort(x3, kind="stable")
                x, m = x3[order], m2[order]
                break
        else:
            return None
    return x, m.astype(int)


def _pin_two_moments(x, sizes, target, lo, hi):
    """Minimum-norm Gauss-Newton correction so that the first two power sums
    match exactly (to rounding)."""
    x = x.copy()
    if len(target) == 1:
        x = x + (target[0] - sizes @ x) / sizes.sum()
        return x, bool(np.all((x >= lo) & (x <= hi)))
    for _ in range(20):
        f = np.array([sizes @ x - target[0], sizes @ x ** 2 - target[1]])
        if np.all(np.abs(f) <= 4e-16 * np.maximum(1.0, np.abs(target))):
            break
        J = np.vstack([sizes, 2 * sizes * x])
        if len(x) == 1:
            step = np.array([f[0] / sizes[0]])
        else:
            try:
                step = J.T @ np.linalg.solve(J @ J.T, f)
            except np.linalg.LinAlgError:
                return x, False
        x = x - step
    ok = bool(np.all((x >= lo) & (x <= hi)))
    return x, ok


def sparsify(model: PbdModel, eps: float, variance_cap: Optional[float] = None,
             C: float = 10.0, starts: int = 16, seed: int = 0,
             scheme: Optional[IntervalScheme] = None) -> SparsifyResult:
    """Rewrite ``model`` to have few distinct parameters per band.

    First the outermost bands are emptied down to one parameter by the
    pairwise merge ``(p, p') -> (0, p + p')`` (mirrored near 1).  Then every
    band holding more distinct values than its cap is refit with cap-many
    values that reproduce its power sums up to that order, the first two
    exactly.  A band whose refit fails keeps its original values and is
    listed in ``fallbacks``.  ``scheme`` overrides the scheme built from the
    model's own variance.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    var0 = model.variance()
    cap = variance_cap if variance_cap is not None else eps ** -6
    if var0 > cap:
        raise ValueError(f"variance {var0:g} exceeds cap {cap:g}")
    if scheme is None:
        scheme = build_scheme(var0, eps)
    A = moment_scale(eps, var0, C)
    D = scheme.depth
    mean0 = model.mean()

    # distances from the nearer end point, per band
    per_band: Dict[str, List[float]] = {}
    fixed: List[Tuple[float, int]] = []
    for value, mult in model.components:
        band = scheme.classify(value)
        if band.side in ("zero", "one"):
            fixed.append((value, mult))
            continue
        dist = value if band.side == "I" else 1.0 - value
        per_band.setdefault(band.label, []).extend([dist] * mult)

    merges = 0
    limit = scheme.levels[D]
    for side in ("I", "J"):
        label = f"{side}{D + 1}"
        vals = per_band.pop(label, [])
        if not vals:
            continue
        kept, pushed, k = _merge_outer(vals, limit, 1e-15)
        merges += k
        zeros = k
        if kept:
            per_band[label] = kept
        if pushed:
            per_band.setdefault(f"{side}{D}", []).extend(pushed)
        fixed.append((0.0 if side == "I" else 1.0, zeros))

    comps: List[Tuple[float, int]] = [c for c in fixed if c[1] > 0]
    fallbacks = []
    for label, dists in sorted(per_band.items()):
        side, level = label[0], int(label[1:])
        dists = np.asarray(dists)
        uniq = np.unique(dists)
        dcap = scheme.caps(scheme.band(side, level))[0]
        if level > D or len(uniq) <= dcap:
            new = [(float(u), int(np.sum(dists == u))) for u in uniq]
        else:
            band = scheme.band(side, level)
            blo, bhi = scheme.open_bounds(band)
            lo, hi = (blo, bhi) if side == "I" else (1.0 - bhi, 1.0 - blo)
            res = _reduce_band(dists, dcap, lo, hi)
            if res is not None and not _within_tolerance(dists, res, dcap, A, eps):
                res = None
            if res is None:
                res = _match_band(dists, lo, hi, dcap, A, eps, starts, seed + level)
            if res is None:
                log.info("band %s refit failed; keeping original values", label)
                fallbacks.append(label)
                new = [(float(u), int(np.sum(dists == u))) for u in uniq]
            else:
                new = [(float(v), int(m)) for v, m in zip(*res)]
        for dist, mult in new:
            comps.append((dist if side == "I" else 1.0 - dist, mult))
    out = PbdModel.from_components(comps)
    return SparsifyResult(out, scheme, model.distinct, out.distinct,
                          out.mean() - mean0, out.variance() - var0, merges, fallbacks)
