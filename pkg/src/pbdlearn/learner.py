"""End-to-end proper learner for Poisson binomial distributions."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from .core import PbdModel, SampleSet
from .fourier import FourierSketch, e_ratio, empirical_dft, sketch_parameters
from .polysys import (PolySystem, Regime, SolverBudget, SystemResidual, build_system,
                      expand, regime_for, residual, solve)
from .structure import (MomentWindow, MultiplicityMultiset, build_scheme, classify,
                        enumerate_multisets, is_admissible, max_free, sparsify)

log = logging.getLogger(__name__)

MOMENT_SAMPLES = 1000
# groups used by the warm-start sketch fit
WARM_GROUPS = 48


def default_sample_budget(eps: float, C: float = 10.0) -> int:
    lg = math.log(1.0 / eps)
    return math.ceil(C ** 3 * lg * lg / (eps * eps))


@dataclass(frozen=True)
class LearnConfig:
    eps: float = 0.1
    C: float = 10.0
    sample_budget: Optional[int] = None
    seed: int = 0
    solver: SolverBudget = SolverBudget()
    large_variance_threshold: Optional[float] = None
    max_systems: int = 10 ** 6
    time_budget: Optional[float] = None
    warm_start: bool = True
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.sample_budget is not None and self.sample_budget < 1:
            raise ValueError("sample budget must be positive")
        if self.max_systems < 1:
            raise ValueError("max_systems must be positive")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    @property
    def budget(self) -> int:
        if self.sample_budget is not None:
            return self.sample_budget
        return default_sample_budget(self.eps, self.C)

    @property
    def threshold(self) -> float:
        if self.large_variance_threshold is not None:
            return self.large_variance_threshold
        return self.eps ** -3


@dataclass
class LearnReport:
    output: PbdModel
    regime: str                      # "system" or "shifted-binomial"
    systems_tried: int
    mu: float
    sigma: float
    M: Optional[int]
    L: Optional[int]
    wall_time: float
    system_regime: Optional[str] = None
    multiset: Optional[MultiplicityMultiset] = None
    residual: Optional[SystemResidual] = None
    source: str = ""

    def to_dict(self) -> dict:
        return {
            "output": self.output.to_dict(),
            "regime": self.regime,
            "systems_tried": self.systems_tried,
            "mu": self.mu,
            "sigma": self.sigma,
            "M": self.M,
            "L": self.L,
            "wall_time": self.wall_time,
            "system_regime": self.system_regime,
            "multiset": self.multiset.to_dict() if self.multiset else None,
            "residual": self.residual.to_dict() if self.residual else None,
            "source": self.source,
        }


class LearnerExhausted(RuntimeError):
    """No feasible system was found within the configured budget."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def estimate_mean_var(samples: SampleSet, count: int = MOMENT_SAMPLES) -> Tuple[float, float]:
    """Sample mean and ``sqrt(population variance + 1)`` of the first ``count`` samples."""
    if len(samples) == 0:
        raise ValueError("no samples")
    x = samples.values[:count].astype(float)
    return float(x.mean()), float(math.sqrt(x.var() + 1.0))


def _binomial_block(t: int, m: int, p: float, n: int) -> PbdModel:
    comps = [(1.0, t), (0.0, n - t - m)]
    if m > 0:
        comps.append((float(min(max(p, 0.0), 1.0)), m))
    return PbdModel.from_components(comps)


def learn_shifted_binomial(samples: SampleSet, eps: float, n: Optional[int] = None) -> PbdModel:
    """Moment-matched ``t + Binomial(m, p)`` with ``t + m <= n``.

    The shift is the smallest ``t >= 0`` that lets the block fit inside ``n``;
    ``p`` is then recomputed so the mean matches exactly.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    x = samples.values.astype(float)
    n = int(n if n is not None else (samples.n_hint or x.max()))
    mu = float(x.mean())
    v = float(x.var())
    if v == 0.0:
        t = int(min(max(round(mu), 0), n))
        return _binomial_block(t, 0, 0.0, n)
    if v >= mu or n - mu - v <= 0:
        # no binomial has this dispersion; fall back to Binomial(n, mean / n)
        return _binomial_block(0, n, mu / n, n)
    # smallest x = mu - t with x^2 / (x - v) <= n - t
    x_min = (n - mu) * v / (n - mu - v)
    t = max(0, int(math.floor(mu - x_min)))
    while True:
        xs = mu - t
        if xs <= v:
            return _binomial_block(0, n, mu / n, n)
        m = int(round(xs * xs / (xs - v)))
        m = max(m, int(math.ceil(xs)))
        if t + m <= n:
            break
        t += 1
    while t > 0:
        xs = mu - (t - 1)
        m2 = max(int(round(xs * xs / (xs - v))), int(math.ceil(xs)))
        if t - 1 + m2 > n:
            break
        t, m = t - 1, m2
    return _binomial_block(t, m, (mu - t) / m, n)


# -- warm start ---------------------------------------------------------------

def _residue_classes(h: FourierSketch):
    """Centred residues ``0..M//2``, their weights and class means of ``h``."""
    M, L = h.modulus, h.halfwidth
    half = M // 2
    xis = np.arange(-L, L + 1)
    r = np.mod(xis, M)
    c = np.where(r <= half, r, M - r)
    hv = np.where(r > half, np.conj(h.coeffs), h.coeffs)
    weight = np.bincount(c, minlength=half + 1).astype(float)
    sums = np.zeros(half + 1, dtype=complex)
    np.add.at(sums, c, hv)
    hbar = np.where(weight > 0, sums / np.maximum(weight, 1), 0)
    return np.arange(half + 1), weight, hbar


def _spread_init(n: int, groups: int, mu: float, v: float) -> np.ndarray:
    """Beta quantiles whose PBD has mean ``mu`` and variance about ``v``."""
    m0 = min(max(mu / n, 1e-6), 1 - 1e-6)
    s2 = m0 * (1 - m0) - v / n
    u = (np.arange(groups) + 0.5) / groups
    if s2 <= 1e-9:
        return np.full(groups, m0)
    s2 = min(s2, 0.95 * m0 * (1 - m0))
    k = m0 * (1 - m0) / s2 - 1
    return stats.beta.ppf(u, m0 * k, (1 - m0) * k)


def fit_sketch(h: FourierSketch, n: int, mu: float, v: float,
               groups: int = WARM_GROUPS) -> PbdModel:
    """A PBD with up to ``groups`` distinct values fitted to the sketch ``h``.

    Used only to propose a multiplicity multiset; the learner's output always
    comes from a verified system.
    """
    K = min(n, groups)
    mult = np.full(K, n // K, dtype=float)
    mult[: n % K] += 1
    cs, weight, hbar = _residue_classes(h)
    w = e_ratio(-cs, h.modulus) - 1.0

    def obj(q):
        fac = (1.0 + np.outer(q, w)) ** mult[:, None]          # (K, R)
        pre = np.ones_like(fac)
        pre[1:] = np.cumprod(fac[:-1], axis=0)
        suf = np.ones_like(fac)
        suf[:-1] = np.cumprod(fac[::-1], axis=0)[::-1][1:]
        val = pre[-1] * fac[-1]
        diff = val - hbar
        f = float(weight @ (diff.real ** 2 + diff.imag ** 2))
        dfac = mult[:, None] * w * (1.0 + np.outer(q, w)) ** (mult[:, None] - 1)
        jac = pre * suf * dfac
        g = 2.0 * (jac @ (weight * diff.conj())).real
        return f, g

    x0 = np.clip(_spread_init(n, K, mu, v), 0.0, 1.0)
    best = minimize(obj, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * K,
                    options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
    return PbdModel.from_components(zip(best.x, mult.astype(int)))


# -- main algorithm -----------------------------------------------------------

def _candidates(scheme, n, mu, sigma, eps, warm: Optional[Tuple[MultiplicityMultiset, np.ndarray]]
                ) -> Iterator[Tuple[MultiplicityMultiset, Optional[np.ndarray], str]]:
    # systems without free variables need no search, so they go before the warm start
    window = MomentWindow(mu - 2 * sigma, mu + 2 * sigma, sigma ** 2 / 2 - 1, 2 * sigma ** 2)
    seen = set()
    for ms in enumerate_multisets(scheme, n, mu, eps, moments=window, free_counts=[0]):
        seen.add(ms.key())
        yield ms, None, "stream"
    if warm is not None and warm[0].key() not in seen:
        seen.add(warm[0].key())
        yield warm[0], warm[1], "warm"
    for ms in enumerate_multisets(scheme, n, mu, eps, moments=window,
                                  free_counts=range(1, max_free(scheme) + 1)):
        if ms.key() in seen:
            continue
        yield ms, None, "stream"


def proper_learn(samples: SampleSet, n: int, config: LearnConfig = LearnConfig()) -> LearnReport:
    """Learn an n-PBD within total variation ``eps`` of the sample source.

    Moment estimates pick the branch.  Above the large-variance threshold a
    shifted binomial is fitted.  Otherwise candidate multiplicity multisets
    are turned into constraint systems against the empirical sketch and the
    first verified feasible solution is returned.
    """
    t0 = time.perf_counter()
    eps = config.eps
    if n < 1:
        raise ValueError("n must be positive")
    if samples.n_hint is not None and samples.n_hint != n:
        samples = SampleSet(samples.values, None)
    if np.any(samples.values > n):
        raise ValueError("a sample exceeds n")
    if len(samples) < config.budget:
        log.warning("only %d samples, budget is %d", len(samples), config.budget)
    samples = samples.head(config.budget)
    mu, sigma = estimate_mean_var(samples)

    if sigma > config.threshold:
        out = learn_shifted_binomial(samples, eps, n)
        return LearnReport(out, "shifted-binomial", 0, mu, sigma, None, None,
                           time.perf_counter() - t0, source="shifted-binomial")

    M, L = sketch_parameters(eps, sigma, config.C)
    h = empirical_dft(samples, M, L)
    reg = regime_for(sigma, eps, config.C)
    scheme = build_scheme(sigma * sigma, eps)

    warm = None
    if config.warm_start:
        x = samples.values.astype(float)
        fit = fit_sketch(h, n, float(x.mean()), float(x.var()))
        try:
            sp = sparsify(fit, eps, scheme=scheme, seed=config.seed)
        except ValueError:
            sp = None
        if sp is not None:
            ms = classify(sp.model, scheme)
            if is_admissible(ms, scheme, n, mu):
                init = _assignment_for(ms, sp.model, scheme)
                warm = (ms, init)

    tried = 0
    last_resid = None
    for ms, init, source in _candidates(scheme, n, mu, sigma, eps, warm):
        if tried >= config.max_systems:
            break
        if config.time_budget is not None and time.perf_counter() - t0 > config.time_budget:
            break
        tried += 1
        try:
            sys_ = build_system(ms, h, mu, sigma, M, L, eps, reg)
        except ValueError:
            continue
        sol = solve(sys_, budget=config.solver, seed=config.seed + tried,
                    warm_starts=[init] if init is not None else ())
        if sol is None:
            continue
        res = residual(sys_, sol)
        last_resid = res
        if not res.feasible:
            continue
        out = PbdModel.from_components(expand(sys_, sol))
        return LearnReport(out, "system", tried, mu, sigma, M, L, time.perf_counter() - t0,
                           reg.value, ms, res, source)
    raise LearnerExhausted(
        "no feasible system found",
        {"systems_tried": tried, "mu": mu, "sigma": sigma, "M": M, "L": L,
         "regime": reg.value, "wall_time": time.perf_counter() - t0,
         "last_residual": last_resid.to_dict() if last_resid else None})


def _assignment_for(ms: MultiplicityMultiset, model: PbdModel, scheme) -> np.ndarray:
    """Values of ``model`` laid out in the order of ``ms``'s free triples."""
    pool = {}
    for value, mult in model.components:
        band = scheme.classify(value).label
        pool.setdefault((band, mult), []).append(value)
    out = []
    for t in ms.free_triples:
        out.append(pool[(t.band, t.m)].pop())
    return np.array(out)
