"""Distribution functions on [0, inf): CDFs, pseudo-inverses, Laplace transforms
and the strict-dominance order.

Every spec is an immutable value object.  Vectorised evaluation is supported
throughout so that fields can be realised site-by-site with one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special

from .errors import DomainError, PreconditionError

#: tolerances recorded in run manifests
BISECTION_TOL = 1e-12
QUADRATURE_RTOL = 1e-10
DOMINANCE_GRID = 10_000
_PROB_TOL = 1e-12


class DistributionSpec:
    """Base class.  Subclasses provide closed forms."""

    kind = "abstract"

    def cdf(self, t):
        raise NotImplementedError

    def sf(self, t):
        """Survival function ``1 - cdf``; overridden where a sharper form exists."""
        return 1.0 - self.cdf(t)

    def quantile(self, s):
        """Closed-form pseudo-inverse, vectorised; no domain checking."""
        raise NotImplementedError

    def laplace(self, k):
        raise NotImplementedError

    def log_laplace(self, k):
        """log E[exp(-k omega)], overridden where underflow is possible."""
        with np.errstate(divide="ignore"):
            return np.log(self.laplace(k))

    def mean(self) -> float:
        raise NotImplementedError

    def atoms(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(values, probabilities) for purely atomic laws, otherwise ``None``."""
        return None

    def support_hull(self) -> Tuple[float, float]:
        raise NotImplementedError

    @property
    def is_deterministic(self) -> bool:
        a = self.atoms()
        return a is not None and len(a[0]) == 1

    @property
    def spec_id(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.spec_id


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class PointMass(DistributionSpec):
    value: float = 0.0
    kind = "point"

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise DomainError(f"point mass location must be finite and >= 0, got {self.value}")

    def cdf(self, t):
        return np.where(np.asarray(t, dtype=float) >= self.value, 1.0, 0.0)[()]

    def quantile(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.value)[()]

    def laplace(self, k):
        return np.exp(-np.asarray(k, dtype=float) * self.value)[()]

    def log_laplace(self, k):
        return (-np.asarray(k, dtype=float) * self.value)[()]

    def mean(self):
        return float(self.value)

    def atoms(self):
        return np.array([self.value]), np.array([1.0])

    def support_hull(self):
        return self.value, self.value

    @property
    def spec_id(self):
        return f"point {_fmt(self.value)}"


@dataclass(frozen=True)
class Atomic(DistributionSpec):
    """Finite atomic law; ``values`` strictly increasing, ``probs`` positive."""

    values: tuple
    probs: tuple
    kind = "atomic"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.ndim != 1 or v.shape != p.shape or v.size == 0:
            raise DomainError("atomic spec needs matching non-empty value/probability lists")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("atomic values must be finite and >= 0")
        if np.any(np.diff(v) <= 0):
            raise DomainError("atomic values must be strictly increasing")
        if np.any(p <= 0):
            raise DomainError("atomic probabilities must be positive")
        if abs(p.sum() - 1.0) > _PROB_TOL:
            raise DomainError(f"atomic probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @property
    def _cum(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.values), t, side="right")
        cum = np.concatenate([[0.0], self._cum])
        return cum[idx][()]

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.values), t, side="right")
        p = np.asarray(self.probs)
        tail = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
        return tail[idx][()]

    def quantile(self, s):
        idx = np.searchsorted(self._cum, np.asarray(s, dtype=float), side="left")
        idx = np.minimum(idx, len(self.values) - 1)
        return np.asarray(self.values)[idx][()]

    def laplace(self, k):
        k = np.asarray(k, dtype=float)
        out = np.exp(-np.multiply.outer(k, np.asarray(self.values))) @ np.asarray(self.probs)
        return out[()]

    def log_laplace(self, k):
        k = np.asarray(k, dtype=float)
        terms = np.log(np.asarray(self.probs)) - np.multiply.outer(k, np.asarray(self.values))
        return special.logsumexp(terms, axis=-1)[()]

    def mean(self):
        return float(np.dot(self.values, self.probs))

    def atoms(self):
        return np.asarray(self.values), np.asarray(self.probs)

    def support_hull(self):
        return self.values[0], self.values[-1]

    @property
    def spec_id(self):
        body = " ".join(f"{_fmt(v)}:{_fmt(p)}" for v, p in zip(self.values, self.probs))
        return f"atomic {body}"


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    rate: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise DomainError(f"exponential rate must be positive, got {self.rate}")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, -np.expm1(-self.rate * np.maximum(t, 0.0)))[()]

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 1.0, np.exp(-self.rate * np.maximum(t, 0.0)))[()]

    def quantile(self, s):
        return (-np.log1p(-np.asarray(s, dtype=float)) / self.rate)[()]

    def laplace(self, k):
        return (self.rate / (self.rate + np.asarray(k, dtype=float)))[()]

    def mean(self):
        return 1.0 / self.rate

    def support_hull(self):
        return 0.0, math.inf

    @property
    def spec_id(self):
        return f"exponential {_fmt(self.rate)}"


@dataclass(frozen=True)
class Uniform(DistributionSpec):
    lo: float = 0.0
    hi: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi and math.isfinite(self.hi)):
            raise DomainError(f"uniform needs 0 <= a < b < inf, got [{self.lo}, {self.hi}]")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)[()]

    def quantile(self, s):
        return (self.lo + np.asarray(s, dtype=float) * (self.hi - self.lo))[()]

    def laplace(self, k):
        k = np.asarray(k, dtype=float)
        w = self.hi - self.lo
        with np.errstate(invalid="ignore", divide="ignore"):
            # exp(-k a) * (1 - exp(-k w)) / (k w), written with expm1 for small k
            val = np.exp(-k * self.lo) * (-np.expm1(-k * w)) / (k * w)
        return np.where(k == 0, 1.0, val)[()]

    def log_laplace(self, k):
        k = np.asarray(k, dtype=float)
        kw = k * (self.hi - self.lo)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = -k * self.lo + np.log(-np.expm1(-kw)) - np.log(kw)
        return np.where(k == 0, 0.0, val)[()]

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def support_hull(self):
        return self.lo, self.hi

    @property
    def spec_id(self):
        return f"uniform {_fmt(self.lo)} {_fmt(self.hi)}"


@dataclass(frozen=True)
class Shifted(DistributionSpec):
    """Law of ``omega + shift`` where omega has law ``base``."""

    base: DistributionSpec
    shift: float = 0.0
    kind = "shifted"

    def __post_init__(self):
        if not (self.shift >= 0 and math.isfinite(self.shift)):
            raise DomainError(f"shift must be finite and >= 0, got {self.shift}")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.shift, 0.0, self.base.cdf(t - self.shift))[()]

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.shift, 1.0, self.base.sf(t - self.shift))[()]

    def quantile(self, s):
        return (self.base.quantile(s) + self.shift)[()]

    def laplace(self, k):
        k = np.asarray(k, dtype=float)
        return (np.exp(-k * self.shift) * self.base.laplace(k))[()]

    def log_laplace(self, k):
        k = np.asarray(k, dtype=float)
        return (-k * self.shift + self.base.log_laplace(k))[()]

    def mean(self):
        return self.base.mean() + self.shift

    def atoms(self):
        a = self.base.atoms()
        if a is None:
            return None
        return a[0] + self.shift, a[1]

    def support_hull(self):
        lo, hi = self.base.support_hull()
        return lo + self.shift, hi + self.shift

    @property
    def spec_id(self):
        return f"shifted ({self.base.spec_id}) {_fmt(self.shift)}"


# ---------------------------------------------------------------------------
# operations

def evaluate_cdf(spec: DistributionSpec, t):
    """phi(t); zero for negative t."""
    return spec.cdf(t)


def _check_prob(s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(~((s_arr > 0) & (s_arr < 1))):
        raise DomainError("pseudo-inverse argument must lie in (0, 1)")
    return s_arr


def pseudo_inverse(spec: DistributionSpec, s):
    """sup{t >= 0 : phi(t) < s} with sup of the empty set equal to 0."""
    _check_prob(s)
    return np.maximum(spec.quantile(s), 0.0)[()]


def generic_pseudo_inverse(spec: DistributionSpec, s: float, tol: float = BISECTION_TOL) -> float:
    """Bisection on the sup-definition, using only ``spec.cdf``.

    Used as the fallback for CDFs without a closed-form inverse and as an
    independent check on the closed forms.
    """
    s = float(_check_prob(s))
    if spec.cdf(0.0) >= s:
        return 0.0
    lo, hi = 0.0, 1.0
    while spec.cdf(hi) < s:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise DomainError("pseudo-inverse bracket diverged")
    # invariant: cdf(lo) < s <= cdf(hi)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if spec.cdf(mid) < s:
            lo = mid
        else:
            hi = mid
    return hi


def laplace_transform(spec: DistributionSpec, k):
    """E[exp(-k omega)] for k >= 0."""
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise DomainError("Laplace argument must be nonnegative")
    return spec.laplace(k_arr)


def generic_laplace(spec: DistributionSpec, k: float, rtol: float = QUADRATURE_RTOL) -> float:
    """Quadrature of ``exp(-k phi^{-1}(s))`` over s in (0, 1)."""
    if k == 0:
        return 1.0
    atoms = spec.atoms()
    breaks = None
    if atoms is not None:
        breaks = list(np.cumsum(atoms[1])[:-1])
    val, _ = integrate.quad(
        lambda s: math.exp(-k * float(spec.quantile(s))), 0.0, 1.0,
        epsrel=rtol, epsabs=0.0, points=breaks, limit=500,
    )
    return val


def log_laplace_transform(spec: DistributionSpec, k):
    """log L(k), finite even where L(k) underflows."""
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise DomainError("Laplace argument must be nonnegative")
    return spec.log_laplace(k_arr)


def shift_by(spec: DistributionSpec, lam: float) -> DistributionSpec:
    if lam < 0:
        raise DomainError(f"shift must be nonnegative, got {lam}")
    return Shifted(spec, float(lam))


# ---------------------------------------------------------------------------
# strict dominance

@dataclass(frozen=True)
class DominanceResult:
    dominates: bool
    numerical: bool
    max_violation: float  # max of F - G (positive means F > G somewhere)
    max_gap: float        # max of G - F

    def __bool__(self):
        return self.dominates


def _both_atomic(F, G):
    return F.atoms() is not None and G.atoms() is not None


def _comparison_points(F, G, grid):
    if _both_atomic(F, G):
        pts = np.union1d(F.atoms()[0], G.atoms()[0])
        return np.union1d([0.0], pts), False
    hulls = []
    for spec in (F, G):
        lo, hi = spec.support_hull()
        if not math.isfinite(hi):
            hi = float(spec.quantile(1.0 - 1e-12))
        hulls.append(hi)
    top = max(max(hulls), 1e-12)
    pts = np.linspace(0.0, top, grid)
    for spec in (F, G):
        a = spec.atoms()
        if a is not None:
            pts = np.union1d(pts, a[0])
    return pts, True


def strictly_dominates(F: DistributionSpec, G: DistributionSpec, grid: int = DOMINANCE_GRID) -> DominanceResult:
    """Decide F <= G pointwise with F != G.

    Atomic pairs are compared exactly on the merged jump set (both CDFs are
    constant between consecutive jumps).  Other pairs use a grid over the joint
    support hull and a survival-function comparison further out.
    """
    pts, numerical = _comparison_points(F, G, grid)
    diff = np.asarray(F.cdf(pts)) - np.asarray(G.cdf(pts))
    tol = 0.0 if not numerical else _PROB_TOL
    max_violation = float(diff.max())
    max_gap = float((-diff).max())
    ok = max_violation <= tol
    if numerical:
        tail = pts[-1] * np.geomspace(1.5, 1e3, 24)
        sf_diff = np.asarray(G.sf(tail)) - np.asarray(F.sf(tail))
        # F <= G  <=>  sf_F >= sf_G
        ok = ok and bool(np.all(sf_diff <= _PROB_TOL * np.maximum(F.sf(tail), 1e-300) + 1e-300))
        max_gap = max(max_gap, float((-sf_diff).max()))
    return DominanceResult(bool(ok and max_gap > tol), numerical, max_violation, max_gap)


@dataclass(frozen=True)
class DominanceWitness:
    t_prime: float
    epsilon: float
    eta0: float
    h_lo: float
    h_hi: float

    @property
    def h_measure(self) -> float:
        return self.h_hi - self.h_lo


def dominance_witness(F: DistributionSpec, G: DistributionSpec, grid: int = DOMINANCE_GRID) -> DominanceWitness:
    """Constructive witness (t', eps, eta0, H) of a strict-dominance pair.

    t' is the smallest comparison point where G exceeds F, eps half the gap
    there, eta0 half the largest admissible step (capped at 1) keeping
    F(t' + eta) <= F(t') + eps, and H the middle third of [F(t'+eta0), G(t')].
    """
    verdict = strictly_dominates(F, G, grid)
    if not verdict:
        raise PreconditionError("F does not strictly dominate G")
    pts, numerical = _comparison_points(F, G, grid)
    gap = np.asarray(G.cdf(pts)) - np.asarray(F.cdf(pts))
    tol = _PROB_TOL if numerical else 0.0
    hits = np.nonzero(gap > tol)[0]
    if hits.size == 0:
        # the gap only shows in the far tail; fall back to a quantile grid
        pts = np.asarray(G.quantile(np.linspace(1e-6, 1 - 1e-6, grid)))
        gap = np.asarray(G.cdf(pts)) - np.asarray(F.cdf(pts))
        hits = np.nonzero(gap > tol)[0]
        if hits.size == 0:
            raise PreconditionError("no comparison point with G > F was found")
    t_prime = float(pts[hits[0]])
    f_t, g_t = float(F.cdf(t_prime)), float(G.cdf(t_prime))
    eps = 0.5 * (g_t - f_t)

    def ok(eta):
        return float(F.cdf(t_prime + eta)) <= f_t + eps

    fa = F.atoms()
    if ok(1.0):
        sup_eta = 1.0
    elif fa is not None:
        # F is a step function: the sup is the first jump past the level
        # (cumulated masses, not F.cdf: shifted atoms may round below their own jump)
        jumps = fa[0][(fa[0] > t_prime) & (np.cumsum(fa[1]) > f_t + eps)]
        sup_eta = min(1.0, float(jumps[0]) - t_prime)
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        sup_eta = lo
    eta0 = 0.5 * sup_eta
    f_eta = float(F.cdf(t_prime + eta0))
    third = (g_t - f_eta) / 3.0
    w = DominanceWitness(t_prime, eps, eta0, f_eta + third, g_t - third)
    if not (0 < w.h_lo < w.h_hi < 1 and eta0 > 0):
        raise PreconditionError(f"witness construction degenerated: {w}")
    return w


def witness_violations(F, G, w: DominanceWitness, points: int = DOMINANCE_GRID) -> int:
    """Number of grid points s in H with F^{-1}(s) - G^{-1}(s) < eta0."""
    s = np.linspace(w.h_lo, w.h_hi, points)
    d = pseudo_inverse(F, s) - pseudo_inverse(G, s)
    return int(np.count_nonzero(d < w.eta0))


def quantile_gap_measure(F, G, eta0: float, grid: int = 100_000) -> float:
    """Lebesgue measure of {s in (0,1) : F^{-1}(s) - G^{-1}(s) >= eta0}.

    Exact for atomic pairs (both quantile functions are step functions with
    breakpoints at the cumulative probabilities); midpoint rule otherwise.
    """
    if _both_atomic(F, G):
        cuts = np.union1d(np.cumsum(F.atoms()[1]), np.cumsum(G.atoms()[1]))
        cuts = np.union1d([0.0], np.clip(cuts, 0.0, 1.0))
        cuts = np.unique(np.append(cuts, 1.0))
        lo, hi = cuts[:-1], cuts[1:]
        keep = hi > lo
        lo, hi = lo[keep], hi[keep]
        mid = 0.5 * (lo + hi)
        d = F.quantile(mid) - G.quantile(mid)
        return float(np.sum((hi - lo)[d >= eta0]))
    s = (np.arange(grid) + 0.5) / grid
    d = F.quantile(s) - G.quantile(s)
    return float(np.count_nonzero(d >= eta0) / grid)
