"""The Fourier constraint system attached to a multiplicity multiset.

A system has one box-constrained unknown per free triple.  Its constraints
are a mean window, a variance window and an l2 bound between the model's
approximate DFT (built from a truncated log/exp expansion) and the empirical
sketch.  Feasibility is searched for numerically and every answer is checked
again with :func:`residual`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .fourier import FourierSketch, e_ratio
from .moments import log_coefficients
from .structure import MultiplicityMultiset, Triple

# slack added to every feasibility comparison
TOLERANCE = 1e-9
# |z| after halving, before the series is applied
_SCALED_RADIUS = 0.5
# cap on Re z so that a wild iterate yields a large finite objective
_MAX_REAL = 40.0
# |g_xi + 2 pi i o_xi| <= c4 ln(1/eps) where |transform| >= eps^3 (large regime)
G_MAGNITUDE_CONSTANT = 4.0


class Regime(enum.Enum):
    SMALL = "small"
    LARGE = "large"


def regime_for(sigma: float, eps: float, C: float = 10.0) -> Regime:
    """Small iff ``sigma^2 < C^2 ln(1/eps)``."""
    return Regime.SMALL if sigma * sigma < C * C * math.log(1.0 / eps) else Regime.LARGE


def exp_truncated(z, lmax: int):
    """``sum_{k<=lmax} z^k / k!`` by Horner's rule."""
    if lmax < 0:
        raise ValueError("lmax must be non-negative")
    z = np.asarray(z, dtype=complex)
    acc = np.ones_like(z)
    for k in range(lmax, 0, -1):
        acc = 1.0 + acc * z / k
    return acc if acc.ndim else complex(acc)


def exp_scaled(z, lmax: int, with_derivative: bool = False):
    """Truncated exponential with scaling and squaring.

    ``z`` is halved ``s`` times until ``|z| <= 1/2``, the degree-``lmax``
    series is applied and the result squared ``s`` times.  For moderate
    ``|z|`` this agrees with :func:`exp_truncated`; for large ``|z|`` it stays
    close to ``exp(z)`` where the plain series loses all precision.
    """
    z = np.asarray(z, dtype=complex)
    z = np.where(z.real > _MAX_REAL, z - (z.real - _MAX_REAL), z)
    mag = np.abs(z)
    s = np.where(mag > _SCALED_RADIUS,
                 np.ceil(np.log2(np.maximum(mag, _SCALED_RADIUS) / _SCALED_RADIUS)), 0).astype(int)
    y = z / np.power(2.0, s)
    p = exp_truncated(y, lmax)
    p = np.asarray(p, dtype=complex)
    out = p.copy()
    for it in range(int(s.max(initial=0))):
        sel = s > it
        out[sel] = out[sel] * out[sel]
    if not with_derivative:
        return out
    dp = np.asarray(exp_truncated(y, max(lmax - 1, 0)), dtype=complex)
    return out, out * dp / p


@dataclass(frozen=True)
class SystemResidual:
    mean_slack: float
    var_slack: float
    box_violations: np.ndarray
    ft_residual: float
    budget: float

    @property
    def feasible(self) -> bool:
        return (self.mean_slack >= -TOLERANCE and self.var_slack >= -TOLERANCE
                and bool(np.all(self.box_violations <= TOLERANCE))
                and self.ft_residual <= self.budget + TOLERANCE)

    def to_dict(self) -> dict:
        return {
            "mean_slack": self.mean_slack,
            "var_slack": self.var_slack,
            "box_violations": [float(v) for v in self.box_violations],
            "ft_residual": self.ft_residual,
            "budget": self.budget,
            "feasible": self.feasible,
        }


@dataclass
class PolySystem:
    multiset: MultiplicityMultiset
    free: Tuple[Triple, ...]
    fixed: Tuple[Triple, ...]
    side: Tuple[str, ...]          # "S", "T" or "mid" per free triple
    mu: float
    sigma: float
    M: int
    L: int
    lmax: int
    eps: float
    regime: Regime
    h: FourierSketch

    def __post_init__(self):
        self.lo = np.array([t.a for t in self.free], dtype=float)
        self.hi = np.array([t.b for t in self.free], dtype=float)
        self.mult = np.array([t.m for t in self.free], dtype=float)
        side = np.array(self.side)
        self._S = np.nonzero(side == "S")[0]
        self._T = np.nonzero(side == "T")[0]
        self._mid = np.nonzero(side == "mid")[0]
        M, L = self.M, self.L
        half = M // 2
        self._centred = np.arange(half + 1)
        xis = np.arange(-L, L + 1)
        r = np.mod(xis, M)
        # fold conjugate classes: xi with residue M - c maps to c
        c = np.where(r <= half, r, M - r)
        conj = r > half
        hv = self.h.coeffs.copy()
        hv[conj] = np.conj(hv[conj])
        self._weight = np.bincount(c, minlength=half + 1).astype(float)
        sums = np.zeros(half + 1, dtype=complex)
        np.add.at(sums, c, hv)
        self._hbar = np.where(self._weight > 0, sums / np.maximum(self._weight, 1), 0)
        self._hconst = float(np.sum(np.abs(hv) ** 2) - np.sum(self._weight * np.abs(self._hbar) ** 2))
        self._xi_class = c
        self._xi_conj = conj
        cs = self._centred
        self._offsets = np.round(self.mu * cs / M)       # numpy rounds half to even
        coef = log_coefficients(self.lmax)
        k = np.arange(1, self.lmax + 1)
        wl = e_ratio(-cs, M) - 1.0
        wh = e_ratio(cs, M) - 1.0
        self._wl = wl
        self._low = coef * np.power(wl[:, None], k)
        self._high = coef * np.power(wh[:, None], k)
        self._k = k
        # constant contributions of fixed triples
        self._ones = sum(t.m for t in self.fixed if t.a == 1.0)
        m_T = self._ones + sum(t.m for t, s in zip(self.free, self.side) if s == "T")
        self._m_T = m_T
        self._phase = -2j * math.pi * m_T * cs / M + 2j * math.pi * self._offsets
        fixed_S = np.zeros(self.lmax)
        fixed_T = np.zeros(self.lmax)
        fixed_mid = np.ones(half + 1, dtype=complex)
        self._fixed_mean = 0.0
        self._fixed_var = 0.0
        for t in self.fixed:
            v = t.a
            self._fixed_mean += t.m * v
            self._fixed_var += t.m * v * (1 - v)
            if v == 0.0 or v == 1.0:
                continue
            if self.regime is Regime.SMALL and 0.25 < v < 0.75:
                fixed_mid *= (1.0 + v * wl) ** t.m
            elif v <= (0.25 if self.regime is Regime.SMALL else 0.5):
                fixed_S += t.m * v ** k
            else:
                self._phase = self._phase - 2j * math.pi * t.m * cs / M
                fixed_T += t.m * (1 - v) ** k
        self._fixed_S = fixed_S
        self._fixed_T = fixed_T
        self._fixed_mid = fixed_mid

    # -- evaluation -----------------------------------------------------------

    @property
    def dimension(self) -> int:
        return len(self.free)

    def budget(self) -> float:
        return self.eps * self.eps / 8.0

    def mean_window(self) -> Tuple[float, float]:
        return self.mu - 2 * self.sigma, self.mu + 2 * self.sigma

    def var_window(self) -> Tuple[float, float]:
        return self.sigma ** 2 / 2 - 1, 2 * self.sigma ** 2

    def _log_part(self, q: np.ndarray, grad: bool):
        k = self._k
        S, T = self._S, self._T
        qs = q[S]
        ut = 1.0 - q[T]
        pS = np.power.outer(qs, k)                    # (|S|, lmax)
        pT = np.power.outer(ut, k)
        sums_S = self._fixed_S + self.mult[S] @ pS
        sums_T = self._fixed_T + self.mult[T] @ pT
        g = self._phase + self._low @ sums_S + self._high @ sums_T
        if not grad:
            return g, None
        dS = self.mult[S, None] * k * np.power.outer(qs, k - 1)
        dT = -self.mult[T, None] * k * np.power.outer(ut, k - 1)
        dg = np.zeros((len(g), len(q)), dtype=complex)
        if len(S):
            dg[:, S] = self._low @ dS.T
        if len(T):
            dg[:, T] = self._high @ dT.T
        return g, dg

    def _mid_part(self, q: np.ndarray, grad: bool):
        mid = self._mid
        base = self._fixed_mid
        if not len(mid):
            return base, None
        w = self._wl
        fac = [(1.0 + q[i] * w) ** self.mult[i] for i in mid]
        prod = base * np.prod(fac, axis=0)
        if not grad:
            return prod, None
        d = np.zeros((len(w), len(q)), dtype=complex)
        for j, i in enumerate(mid):
            others = base.copy()
            for jj, f in enumerate(fac):
                if jj != j:
                    others = others * f
            m = self.mult[i]
            d[:, i] = others * m * w * (1.0 + q[i] * w) ** (m - 1)
        return prod, d

    def transform(self, q: Sequence[float], grad: bool = False):
        """Approximate transform on centred residues ``0..M//2`` (and its Jacobian)."""
        q = np.asarray(q, dtype=float)
        g, dg = self._log_part(q, grad)
        e_, de = exp_scaled(g, self.lmax, with_derivative=True) if grad else \
            (exp_scaled(g, self.lmax), None)
        mid, dmid = self._mid_part(q, grad)
        val = e_ * mid
        if not grad:
            return val, None
        jac = (de * mid)[:, None] * dg
        if dmid is not None:
            jac = jac + e_[:, None] * dmid
        return val, jac

    def q_xi(self, q: Sequence[float]) -> np.ndarray:
        """``q_xi`` for ``xi = -L..L``."""
        val, _ = self.transform(q)
        out = val[self._xi_class]
        return np.where(self._xi_conj, np.conj(out), out)

    def moments(self, q: Sequence[float]) -> Tuple[float, float]:
        q = np.asarray(q, dtype=float)
        mean = self._fixed_mean + float(self.mult @ q)
        var = self._fixed_var + float(self.mult @ (q * (1 - q)))
        return mean, var

    def objective(self, q: Sequence[float], grad: bool = True):
        """Weighted sketch misfit plus squared hinge penalties on the windows."""
        q = np.asarray(q, dtype=float)
        val, jac = self.transform(q, grad)
        diff = val - self._hbar
        f = float(self._weight @ (diff.real ** 2 + diff.imag ** 2)) + self._hconst
        mean, var = self.moments(q)
        mlo, mhi = self.mean_window()
        vlo, vhi = self.var_window()
        scale_m = max(self.sigma, 1.0)
        scale_v = max(self.sigma ** 2, 1.0)
        pm = min(0.0, mean - mlo, mhi - mean) / scale_m
        pv = min(0.0, var - vlo, vhi - var) / scale_v
        f += pm * pm + pv * pv
        if not grad:
            return f
        gvec = 2.0 * ((self._weight * diff.conj()) @ jac).real
        if pm < 0:
            sgn = 1.0 if mean - mlo < mhi - mean else -1.0
            gvec += 2 * pm * sgn * self.mult / scale_m
        if pv < 0:
            sgn = 1.0 if var - vlo < vhi - var else -1.0
            gvec += 2 * pv * sgn * self.mult * (1 - 2 * q) / scale_v
        return f, gvec

    def log_magnitude(self, q: Sequence[float], floor: Optional[float] = None) -> float:
        """Largest ``|g_xi + 2 pi i o_xi|`` over residues whose transform is at
        least ``floor`` (default ``eps^3``) in modulus."""
        floor = self.eps ** 3 if floor is None else floor
        q = np.asarray(q, dtype=float)
        g, _ = self._log_part(q, False)
        val, _ = self.transform(q)
        sel = np.abs(val) >= floor
        return float(np.max(np.abs(g[sel]))) if np.any(sel) else 0.0

    def to_dict(self) -> dict:
        return {
            "variables": [{"m": t.m, "a": t.a, "b": t.b, "band": t.band, "side": s}
                          for t, s in zip(self.free, self.side)],
            "fixed": [{"m": t.m, "value": t.a, "band": t.band} for t in self.fixed],
            "constants": {"mu": self.mu, "sigma": self.sigma, "M": self.M, "L": self.L,
                          "lmax": self.lmax, "eps": self.eps, "regime": self.regime.value},
            "target": self.h.to_dict(),
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)


def build_system(multiset: MultiplicityMultiset, h: FourierSketch, mu: float, sigma: float,
                 M: int, L: int, eps: float, regime: Regime,
                 lmax: Optional[int] = None) -> PolySystem:
    """Assemble the constraint system for ``multiset`` against sketch ``h``."""
    if h.modulus != M or h.halfwidth != L:
        raise ValueError("sketch does not match (M, L)")
    if lmax is None:
        lmax = L
    free, fixed, side = [], [], []
    for t in multiset.triples:
        if t.a == t.b:
            fixed.append(t)
            continue
        if regime is Regime.SMALL:
            s = "S" if t.b <= 0.25 else "T" if t.a >= 0.75 else "mid"
        else:
            if t.b <= 0.5:
                s = "S"
            elif t.a >= 0.5:
                s = "T"
            else:
                raise ValueError(f"band [{t.a}, {t.b}] straddles 1/2 in the large regime")
        free.append(t)
        side.append(s)
    return PolySystem(multiset, tuple(free), tuple(fixed), tuple(side), float(mu), float(sigma),
                      int(M), int(L), int(lmax), float(eps), regime, h)


def residual(sys: PolySystem, assignment: Sequence[float]) -> SystemResidual:
    q = np.asarray(assignment, dtype=float)
    if q.shape != (sys.dimension,):
        raise ValueError(f"expected {sys.dimension} values, got {q.shape}")
    box = np.maximum(0.0, np.maximum(sys.lo - q, q - sys.hi))
    qc = np.clip(q, sys.lo, sys.hi)
    mean, var = sys.moments(qc)
    mlo, mhi = sys.mean_window()
    vlo, vhi = sys.var_window()
    diff = sys.q_xi(qc) - sys.h.coeffs
    ft = float(np.sum(diff.real ** 2 + diff.imag ** 2))
    return SystemResidual(min(mean - mlo, mhi - mean), min(var - vlo, vhi - var),
                          box, ft, sys.budget())


def prefilter(sys: PolySystem) -> bool:
    """Interval check: can the mean and variance windows be met at all?"""
    lo, hi = sys.lo, sys.hi
    mean_lo = sys._fixed_mean + float(sys.mult @ lo)
    mean_hi = sys._fixed_mean + float(sys.mult @ hi)
    e_lo = np.minimum(lo * (1 - lo), hi * (1 - hi))
    e_hi = np.where((lo <= 0.5) & (hi >= 0.5), 0.25, np.maximum(lo * (1 - lo), hi * (1 - hi)))
    var_lo = sys._fixed_var + float(sys.mult @ e_lo)
    var_hi = sys._fixed_var + float(sys.mult @ e_hi)
    mlo, mhi = sys.mean_window()
    vlo, vhi = sys.var_window()
    return (mean_lo <= mhi + TOLERANCE and mean_hi >= mlo - TOLERANCE
            and var_lo <= vhi + TOLERANCE and var_hi >= vlo - TOLERANCE)


@dataclass(frozen=True)
class SolverBudget:
    starts: int = 32
    max_iter: int = 300


def solve(sys: PolySystem, delta: Optional[float] = None,
          budget: SolverBudget = SolverBudget(),
          warm_starts: Sequence[Sequence[float]] = (), seed: int = 0) -> Optional[np.ndarray]:
    """Search for a feasible assignment.

    Warm starts are tried first, then scrambled Halton points in the box, each
    polished by L-BFGS-B on :meth:`PolySystem.objective`.  The first start
    whose result passes :func:`residual` wins.  ``delta`` (default
    ``eps / (2k)``) is the coordinate resolution asked of the optimiser.
    """
    k = max(sys.dimension, 1)
    if delta is None:
        delta = sys.eps / (2 * k)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if sys.dimension == 0:
        empty = np.zeros(0)
        return empty if residual(sys, empty).feasible else None
    if not prefilter(sys):
        return None
    bounds = list(zip(sys.lo, sys.hi))
    starts: List[np.ndarray] = [np.clip(np.asarray(w, dtype=float), sys.lo, sys.hi)
                                for w in warm_starts]
    n_random = max(0, budget.starts - len(starts))
    if n_random:
        pts = qmc.Halton(d=sys.dimension, scramble=True, seed=seed).random(n_random)
        starts.extend(qmc.scale(pts, sys.lo, sys.hi) if np.all(sys.hi > sys.lo) else pts)
    for x0 in starts:
        res = minimize(sys.objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": budget.max_iter, "ftol": 1e-12,
                                "gtol": min(1e-8, delta * 1e-6)})
        x = np.clip(res.x, sys.lo, sys.hi)
        if residual(sys, x).feasible:
            return x
    return None


def expand(sys: PolySystem, assignment: Sequence[float]):
    """Components ``(value, multiplicity)`` of the PBD described by a solution."""
    comps = [(t.a, t.m) for t in sys.fixed]
    comps.extend((float(v), t.m) for t, v in zip(sys.free, assignment))
    return comps
