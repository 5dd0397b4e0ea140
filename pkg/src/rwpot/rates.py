"""Lyapunov curves lambda -> alpha(lambda, x), beta(lambda, x) for the shifted
potential omega + lambda, the rate functions

    I(x) = sup_{lambda >= 0} (alpha(lambda, x) - lambda),
    J(x) = sup_{lambda >= 0} (beta(lambda, x) - lambda),

their thresholds, the speed read off the slope at 0, and an exact d=1
dynamic program for the endpoint law of the weighted path measure.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .annealed import b_potential_mc, b_walk_mc, sample_local_times
from .distributions import DistributionSpec, laplace_transform, shift_by
from .errors import CoverageError, DomainError, NumericError
from .fields import Box, PotentialField, realize_rows, replica_seed
from .quenched import alpha_estimate

GRID_POINTS = 17
GRID_FLOOR = 1e-3      # first nonzero grid point, relative to lambda_max
SIGMA_K = 3.0

QUENCHED, ANNEALED = "quenched", "annealed"


# ---------------------------------------------------------------------------
# curves

@dataclass
class LyapunovCurve:
    """Sampled exponent curve at a (real) point x.

    ``unit_upper`` is the per-unit-l1 upper bound on the exponent at lambda=0
    (log 2d + E[omega] quenched, log 2d - log L(1) annealed); it fixes the
    bracket that the rate-function supremum needs.
    """

    x: tuple
    mode: str
    lambdas: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    spec_id: str = ""
    unit_upper: float = math.nan
    p_zero: float = math.nan          # P(omega = 0)
    essinf_zero: Optional[bool] = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderrs = np.zeros_like(self.values) if self.stderrs is None else np.asarray(self.stderrs, dtype=float)
        if np.any(np.diff(self.lambdas) <= 0):
            raise DomainError("lambda grid must be strictly increasing")
        if self.lambdas.size and self.lambdas[0] < 0:
            raise DomainError("lambda grid must lie in [0, inf)")

    @classmethod
    def from_points(cls, lambdas, values, stderrs=None, x=(1.0,), mode=ANNEALED, **kw) -> "LyapunovCurve":
        return cls(tuple(float(v) for v in np.atleast_1d(x)), mode, lambdas, values, stderrs, **kw)

    @property
    def norm(self) -> float:
        return float(np.abs(self.x).sum())

    def scaled(self, x) -> "LyapunovCurve":
        """The curve at a positive multiple of this curve's x (norm homogeneity)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ratio = float(np.abs(x).sum()) / self.norm
        return LyapunovCurve(tuple(x), self.mode, self.lambdas, self.values * ratio, self.stderrs * ratio,
                             self.spec_id, self.unit_upper, self.p_zero, self.essinf_zero, list(self.warnings))

    def lambda_max(self) -> float:
        """Bracket beyond which exponent - lambda < 0 for |x|_1 < 1."""
        nx = self.norm
        if nx >= 1:
            return math.inf
        return nx * self.unit_upper / (1.0 - nx)

    def check_shape(self, k: float = SIGMA_K, slope_tol: float = 1e-9) -> list:
        """Monotonicity, concavity and the slope bound, within k standard errors."""
        msgs = []
        v, s, lam = self.values, self.stderrs, self.lambdas
        dv = np.diff(v)
        tol = k * np.hypot(s[1:], s[:-1])
        if np.any(dv < -tol - 1e-12):
            msgs.append("curve decreases beyond noise")
        if v.size >= 3:
            slopes = dv / np.diff(lam)
            stol = tol / np.diff(lam)
            if np.any(np.diff(slopes) > stol[1:] + stol[:-1] + 1e-9):
                msgs.append("curve not concave within noise")
        # each step pays the extra lambda and at least n|x|_1 steps are needed
        bound = lam * self.norm * (1 - slope_tol) - k * np.hypot(s, s[0]) - 1e-12
        if np.any(v - v[0] < bound):
            msgs.append("curve rises slower than slope |x|_1")
        return msgs


def default_grid(lam_max: float, points: int = GRID_POINTS, floor: float = GRID_FLOOR) -> np.ndarray:
    """0 followed by a geometric grid ending at ``lam_max``."""
    if not (lam_max > 0 and math.isfinite(lam_max)):
        raise DomainError("lambda_max must be positive and finite")
    return np.concatenate([[0.0], np.geomspace(lam_max * floor, lam_max, points - 1)])


def unit_upper_bound(phi: DistributionSpec, d: int, mode: str) -> float:
    if mode == QUENCHED:
        return math.log(2 * d) + phi.mean()
    if mode == ANNEALED:
        return math.log(2 * d) - math.log(float(laplace_transform(phi, 1.0)))
    raise DomainError(f"unknown mode {mode!r}")


def bracket(phi: DistributionSpec, x, mode: str) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nx = float(np.abs(x).sum())
    if nx >= 1 or nx == 0:
        raise DomainError("the bracket needs 0 < |x|_1 < 1")
    return nx * unit_upper_bound(phi, x.size, mode) / (1.0 - nx)


def integer_direction(x, max_den: int = 16) -> tuple:
    """(u, scale) with u an integer vector and x = scale * u."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.any(x):
        raise DomainError("direction must be nonzero")
    if x.size == 1:
        return (int(np.sign(x[0])),), abs(float(x[0]))
    fr = [Fraction(float(v)).limit_denominator(max_den) for v in x]
    q = math.lcm(*[f.denominator for f in fr])
    u = tuple(int(f * q) for f in fr)
    return u, 1.0 / q


@dataclass
class EstimatorConfig:
    """Per-lambda estimator settings for curve building."""

    n_list: Sequence[int] = (16, 32, 64)
    samples: int = 2000
    seed: int = 0
    estimator: str = "walk_mc"        # annealed: walk_mc or potential_mc
    margin: Optional[int] = None
    cap: Optional[int] = None


def _essinf_zero(phi: DistributionSpec) -> bool:
    return phi.support_hull()[0] == 0


def lyapunov_curve(phi: DistributionSpec, x, lambda_grid=None, mode: str = ANNEALED,
                   config: Optional[EstimatorConfig] = None) -> LyapunovCurve:
    """Exponent estimates at x for the shifted laws phi + lambda.

    Deterministic laws are solved exactly (one solve per lambda).  Random
    laws use, per lambda, the running minimum of b(0, n u)/n over
    ``config.n_list`` (annealed) or the mean of a(0, n u)/n at the largest n
    (quenched), where u is an integer direction with x = scale * u.  One
    batch of walks (annealed) or one set of environments (quenched) is
    shared by all lambda, so neighbouring points are positively correlated.
    Shape violations are reported as warnings, not errors.
    """
    config = EstimatorConfig() if config is None else config
    u, scale = integer_direction(x)
    d = len(u)
    xt = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
    if lambda_grid is None:
        lambda_grid = default_grid(bracket(phi, x, mode))
    lam = np.asarray(lambda_grid, dtype=float)
    specs = [shift_by(phi, float(l)) for l in lam]
    vals = np.empty(lam.size)
    ses = np.zeros(lam.size)
    if phi.is_deterministic and d == 1:
        for i, sp in enumerate(specs):
            vals[i] = b_potential_mc(sp, u, 1).value
    elif mode == ANNEALED:
        best = np.full(lam.size, math.inf)
        for j, n in enumerate(config.n_list):
            y = tuple(n * c for c in u)
            if config.estimator == "walk_mc":
                batch = sample_local_times(y, config.samples, replica_seed(config.seed, j), config.cap)
                ests = b_walk_mc(specs, y, config.samples, batch=batch)
            else:
                ests = [b_potential_mc(sp, y, config.samples, config.margin, replica_seed(config.seed, j))
                        for sp in specs]
            for i, e in enumerate(ests):
                if e.value / n < best[i]:
                    best[i] = e.value / n
                    ses[i] = e.std_error / n
        vals = best
    elif mode == QUENCHED:
        n = max(config.n_list)
        for i, sp in enumerate(specs):
            e = alpha_estimate(sp, u, [n], config.samples, config.seed, config.margin)[0]
            vals[i], ses[i] = e.value, e.std_error
    else:
        raise DomainError(f"unknown mode {mode!r}")
    curve = LyapunovCurve(xt, mode, lam, vals * scale, ses * scale, phi.spec_id,
                          unit_upper_bound(phi, d, mode), float(phi.cdf(0.0)), _essinf_zero(phi))
    curve.warnings = curve.check_shape()
    for w in curve.warnings:
        warnings.warn(f"lyapunov_curve: {w}", RuntimeWarning, stacklevel=2)
    return curve


# ---------------------------------------------------------------------------
# concave fit

def concave_fit(lambdas, values, stderrs=None) -> np.ndarray:
    """Weighted least-squares concave nondecreasing piecewise-linear fit.

    Unknowns are the value at the first knot, the last slope (>= 0) and
    nonnegative slope decrements; fitted values at the knots are returned.
    Exactly concave data is reproduced.
    """
    lam = np.asarray(lambdas, dtype=float)
    v = np.asarray(values, dtype=float)
    m = lam.size
    if m <= 2:
        return v.copy()
    s = np.zeros(m) if stderrs is None else np.asarray(stderrs, dtype=float)
    if np.all(s == 0):
        w = np.ones(m)
    else:
        floor = np.min(s[s > 0])
        w = 1.0 / np.maximum(s, floor)
    h = np.diff(lam)                          # segment lengths, m-1
    # f_i = c + sum_{k<=i} h_k sigma_k, sigma_k = s_last + sum_{j>=k} delta_j
    A = np.zeros((m, 1 + 1 + (m - 2)))
    A[:, 0] = 1.0
    cum_h = np.concatenate([[0.0], np.cumsum(h)])
    A[:, 1] = cum_h
    for j in range(m - 2):
        # delta_j raises the slopes of segments 0..j
        A[:, 2 + j] = np.minimum(cum_h, cum_h[j + 1])
    lb = np.concatenate([[-np.inf, 0.0], np.zeros(m - 2)])
    ub = np.full(A.shape[1], np.inf)
    res = optimize.lsq_linear(A * w[:, None], v * w, bounds=(lb, ub), method="bvls",
                              tol=1e-14, max_iter=10_000)
    return A @ res.x


def _fitted(curve: LyapunovCurve) -> np.ndarray:
    if np.all(curve.stderrs == 0):
        slopes = np.diff(curve.values) / np.diff(curve.lambdas)
        if curve.values.size < 3 or np.all(np.diff(slopes) <= 1e-12 * (1 + np.abs(slopes[1:]))):
            return curve.values.copy()
    return concave_fit(curve.lambdas, curve.values, curve.stderrs)


# ---------------------------------------------------------------------------
# rate function, thresholds, speed

@dataclass
class RateValue:
    value: float
    status: str = "finite"        # finite | infinite | unknown
    argmax: Optional[float] = None

    def __float__(self):
        return self.value


def _sup_minus_lambda(lam: np.ndarray, f: np.ndarray) -> tuple:
    g = f - lam
    i = int(np.argmax(g))
    best, arg = float(g[i]), float(lam[i])
    interp = lambda t: -(np.interp(t, lam, f) - t)
    lo = lam[max(i - 1, 0)]
    hi = lam[min(i + 1, lam.size - 1)]
    if hi > lo:
        r = optimize.minimize_scalar(interp, bounds=(lo, hi), method="bounded",
                                     options={"xatol": 1e-12})
        if -r.fun > best:
            best, arg = float(-r.fun), float(r.x)
    return best, arg


def rate_function(curve: LyapunovCurve) -> RateValue:
    """sup_{lambda >= 0}(curve(lambda) - lambda) on the concave interpolant.

    x = 0 gives 0, |x|_1 > 1 gives +inf and |x|_1 = 1 is reported as
    "unknown".  Otherwise the curve must start at 0 and reach the bracket
    lambda_max.
    """
    nx = curve.norm
    if nx == 0:
        return RateValue(0.0, "finite", 0.0)
    if nx > 1:
        return RateValue(math.inf, "infinite")
    if nx == 1:
        return RateValue(math.nan, "unknown")
    lam_max = curve.lambda_max()
    if curve.lambdas[0] != 0 or curve.lambdas[-1] < lam_max * (1 - 1e-9):
        raise CoverageError(f"curve covers [{curve.lambdas[0]}, {curve.lambdas[-1]}], "
                            f"needs [0, {lam_max}]")
    val, arg = _sup_minus_lambda(curve.lambdas, _fitted(curve))
    return RateValue(max(val, 0.0), "finite", arg)


def lambda_star(curve: LyapunovCurve) -> float:
    """inf{lambda > 0 : left derivative <= 1} on the concave fit; 0 if the
    first slope is already <= 1."""
    f = _fitted(curve)
    slopes = np.diff(f) / np.diff(curve.lambdas)
    below = np.flatnonzero(slopes <= 1.0)
    if below.size == 0:
        return math.inf
    i = int(below[0])
    return 0.0 if i == 0 else float(curve.lambdas[i])


@dataclass
class SpeedEstimate:
    v: float
    slope: float
    diagnostic: bool = True
    degenerate: bool = False       # P(omega = 0) = 1: infinite slope, v -> 0


def km_speed(curve: LyapunovCurve) -> SpeedEstimate:
    """1 / (forward-difference slope at 0) of a d=1 curve at x = 1.

    Biased low in the slope (concavity), hence flagged as a diagnostic.
    """
    if curve.p_zero == 1.0:
        return SpeedEstimate(0.0, math.inf, True, True)
    if curve.lambdas.size < 2:
        raise NumericError("need two grid points for a slope")
    slope = (curve.values[1] - curve.values[0]) / (curve.lambdas[1] - curve.lambdas[0]) / curve.norm
    if not slope > 0:
        raise NumericError(f"degenerate slope {slope}")
    return SpeedEstimate(1.0 / slope, float(slope))


# ---------------------------------------------------------------------------
# d = 1 path-measure dynamic program

def endpoint_log_weights(omega_rows: np.ndarray, n: int) -> np.ndarray:
    """log E^0[exp(-sum_{k<n} omega(S_k)); S_n = z] for z = -n..n.

    ``omega_rows`` has shape (batch, 2n+1) indexed by z + n.  Computed by
    forward recursion in the log domain; shape (batch, 2n+1).
    """
    omega_rows = np.atleast_2d(np.asarray(omega_rows, dtype=float))
    b, w = omega_rows.shape
    if w != 2 * n + 1:
        raise DomainError("potential rows must cover [-n, n]")
    lp = np.full((b, w + 2), -np.inf)        # padded by one site each side
    lp[:, n + 1] = 0.0
    log_half = -math.log(2.0)
    for _ in range(n):
        src = lp[:, 1:-1] - omega_rows + log_half
        new = np.full_like(lp, -np.inf)
        new[:, 2:] = np.logaddexp(new[:, 2:], src)         # step +1
        new[:, :-2] = np.logaddexp(new[:, :-2], src)       # step -1
        lp = new
    return lp[:, 1:-1]


def feasible_endpoint(n: int, x: float) -> tuple:
    """(m, adjusted): m = round(n x) moved to the nearest value with n + m even."""
    target = n * x
    m = int(round(target))
    if (n + m) % 2 == 0:
        return m, False
    cands = sorted([m - 1, m + 1], key=lambda c: (abs(c - target), abs(c)))
    return cands[0], True


@dataclass
class LDPResult:
    value: float
    m: int
    adjusted: bool
    mode: str
    log_prob: float
    n: int = 0
    log_numerator: float = math.nan    # log E[exp(-sum omega); S_n = m]
    log_normalizer: float = math.nan   # log Z_n
    warnings: list = field(default_factory=list)

    @property
    def numerator_rate(self) -> float:
        """-(1/n) log of the unnormalised weight of {S_n = m}."""
        return -self.log_numerator / self.n


def ldp_dp_check(source, n: int, x: float, mode: str = QUENCHED, samples: int = 100,
                 seed: int = 0) -> LDPResult:
    """-(1/n) log Q_n(S_n = m), m = round(n x), for the d=1 weighted path measure

        Q_n(A) proportional to E^0[exp(-sum_{k<n} omega(S_k)); A].

    ``source`` is a :class:`PotentialField` covering [-n, n] or a constant
    (quenched), or a :class:`DistributionSpec` (quenched: one environment
    drawn from ``seed``; annealed: numerator and normaliser averaged over
    ``samples`` environments).
    """
    if n < 1 or n > 256:
        raise DomainError("the dynamic program supports 1 <= n <= 256")
    if not abs(x) < 1:
        raise DomainError("need |x| < 1")
    m, adjusted = feasible_endpoint(n, x)
    msgs = []
    box = Box((-n,), (n,))
    if isinstance(source, PotentialField):
        if mode != QUENCHED:
            raise DomainError("a fixed field only supports quenched mode")
        rows = source.box.subarray(source.values, box)[None, :]
    elif isinstance(source, DistributionSpec):
        if mode == ANNEALED and not _essinf_zero(source):
            msgs.append("essential infimum of the potential is positive")
        k = 1 if mode == QUENCHED else samples
        rows = realize_rows(source, box, [replica_seed(seed, i) for i in range(k)])
    else:
        rows = np.full((1, 2 * n + 1), float(source))
    lw = endpoint_log_weights(rows, n)
    if mode == ANNEALED:
        num = logsumexp(lw[:, m + n]) - math.log(lw.shape[0])
        den = logsumexp(lw) - math.log(lw.shape[0])
    elif mode == QUENCHED:
        num = lw[0, m + n]
        den = logsumexp(lw[0])
    else:
        raise DomainError(f"unknown mode {mode!r}")
    lp = float(num - den)
    for w in msgs:
        warnings.warn(f"ldp_dp_check: {w}", RuntimeWarning, stacklevel=2)
    return LDPResult(-lp / n, m, adjusted, mode, lp, n, float(num), float(den), msgs)


def endpoint_distribution(omega_row, n: int) -> np.ndarray:
    """Q_n(S_n = z) for z = -n..n under one d=1 potential row."""
    lw = endpoint_log_weights(np.asarray(omega_row, dtype=float)[None, :], n)[0]
    return np.exp(lw - logsumexp(lw))


def cramer_rate(x):
    """((1+x)/2) log(1+x) + ((1-x)/2) log(1-x), the simple-walk rate."""
    x = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * (1 + x) * np.log1p(x) + 0.5 * (1 - x) * np.log1p(-x)
    return np.where(x == 1, math.log(2.0), out)[()]
