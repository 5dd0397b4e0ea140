"""Strict-dominance comparison experiments and their combinatorial inputs.

Everything here takes a pair (F, G) with F strictly dominating G and works
with the coupled fields omega_F = F^{-1}(U) >= omega_G = G^{-1}(U).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm as _normal

from .annealed import potential_e_samples
from .distributions import (DistributionSpec, dominance_witness, pseudo_inverse,
                            quantile_gap_measure, strictly_dominates)
from .errors import CouplingViolation, DomainError, PreconditionError, ResourceError
from .fields import Box, PotentialField, keyed_uniforms, replica_seed
from .lattice import (box_crossings, box_hitting_index, box_labels, box_of, hitting_index,
                      local_times, path_animal, sample_walk_until)
from .quenched import quenched_cost_samples

STRICT_GAP, COINCIDE, UNDETERMINED = "StrictGap", "Coincide", "Undetermined"
DEFAULT_A = 6
R_BUDGET = 4096
M_TOL = 1e-3


# ---------------------------------------------------------------------------
# relative entropy and white boxes

def relative_entropy(delta: float, p: float) -> float:
    """D(delta || p) for 0 < delta < p < 1."""
    if not (0 < delta < p < 1):
        raise DomainError(f"need 0 < delta < p < 1, got delta={delta}, p={p}")
    return delta * math.log(delta / p) + (1 - delta) * math.log((1 - delta) / (1 - p))


def entropy_threshold(d: int) -> float:
    """Smallest p with D(1/2 || p) >= 2 log 2d."""
    # D(1/2||p) = -log 2 - log(p(1-p))/2, increasing in p on (1/2, 1)
    t = math.exp(-2 * (2 * math.log(2 * d) + math.log(2)))
    return 0.5 * (1 + math.sqrt(1 - 4 * t))


def classify_white(box: Box, omega_F: PotentialField, omega_G: PotentialField, eta0: float, M: float) -> bool:
    """M-white: some z has omega_F(z) >= omega_G(z) + eta0, and omega_G <= M on the box."""
    f = omega_F.box.subarray(omega_F.values, box)
    g = omega_G.box.subarray(omega_G.values, box)
    return bool(np.any(f >= g + eta0) and np.all(g <= M))


@dataclass
class WhiteBoxResult:
    p_hat: float
    stderr: float
    p_limit: float          # 1 - (1 - rho)^{R^d}
    p_exact: float          # G(M)^{R^d} - P(omega_G <= M, gap < eta0)^{R^d}
    rho: float
    h_measure: Optional[float]
    samples: int

    @property
    def lemma_ok(self) -> bool:
        """The quantile-gap measure dominates the witness interval length."""
        return self.h_measure is None or self.rho >= self.h_measure - 1e-12


def _box_uniforms(R: int, d: int, samples: int, seed: int) -> np.ndarray:
    """Keyed uniforms for ``samples`` disjoint R-boxes, shape (samples, R^d)."""
    hi = (samples * R - 1,) + (R - 1,) * (d - 1)
    box = Box((0,) * d, hi)
    u = keyed_uniforms(seed, box.sites()).reshape(box.shape)
    u = u.reshape((samples, R) + (R,) * (d - 1))
    return u.reshape(samples, R ** d)


def _white_prob_terms(F, G, eta0: float, M: float, grid: int = 200_000) -> tuple:
    """(rho, G(M), P(omega_G <= M and gap < eta0)) by quantile integration."""
    rho = quantile_gap_measure(F, G, eta0)
    gm = float(G.cdf(M)) if math.isfinite(M) else 1.0
    fa, ga = F.atoms(), G.atoms()
    if fa is not None and ga is not None:
        cuts = np.unique(np.concatenate([[0.0, 1.0], np.cumsum(fa[1]), np.cumsum(ga[1])]))
        cuts = np.clip(cuts, 0, 1)
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        wts = np.diff(cuts)
    else:
        mids = (np.arange(grid) + 0.5) / grid
        wts = np.full(grid, 1.0 / grid)
    fq = pseudo_inverse(F, mids)
    gq = pseudo_inverse(G, mids)
    r = float(np.sum(wts[(gq <= M) & (fq - gq < eta0)]))
    return rho, gm, r


def white_box_prob(F, G, eta0: float, M: float, R: int, d: int, samples: int, seed: int) -> WhiteBoxResult:
    """Empirical and analytic probability that an R-box is M-white."""
    if R < 2 or R % 2:
        raise DomainError("R must be even and >= 2")
    u = _box_uniforms(R, d, samples, seed)
    f = pseudo_inverse(F, u)
    g = pseudo_inverse(G, u)
    white = np.any(f >= g + eta0, axis=1) & np.all(g <= M, axis=1)
    p = float(white.mean())
    rho, gm, r = _white_prob_terms(F, G, eta0, M)
    N = R ** d
    try:
        h = dominance_witness(F, G).h_measure
    except PreconditionError:
        h = None
    return WhiteBoxResult(p, math.sqrt(max(p * (1 - p), 0.0) / samples), 1 - (1 - rho) ** N,
                          gm ** N - r ** N, rho, h, samples)


def wilson_lower(p: float, n: int, z: float = 3.0) -> float:
    den = 1 + z * z / n
    centre = p + z * z / (2 * n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return (centre - half) / den


@dataclass
class RMChoice:
    R: int
    M: float
    p_hat: float
    p_lower: float
    threshold: float
    eta0: float


def choose_RM(F, G, d: int, samples: int = 20_000, seed: int = 0, z: float = 3.0,
              max_R: int = R_BUDGET) -> RMChoice:
    """Smallest even R (with M = inf), then smallest M, such that the
    z-sigma lower confidence bound on p_{R,M} exceeds the level where
    D(1/2 || p) = 2 log 2d.

    R is searched by doubling then bisection over even integers; M over the
    atoms of G when G is atomic, otherwise by doubling then bisection to
    relative tolerance 1e-3.  All probes share one seed, so p_hat is monotone
    in both R and M.
    """
    if not strictly_dominates(F, G):
        raise PreconditionError("F must strictly dominate G")
    eta0 = dominance_witness(F, G).eta0
    thr = entropy_threshold(d)

    def ok(R, M):
        res = white_box_prob(F, G, eta0, M, R, d, samples, seed)
        return wilson_lower(res.p_hat, samples, z) > thr, res

    lo, hi = 0, 2
    while not ok(hi, math.inf)[0]:
        lo, hi = hi, 2 * hi
        if hi > max_R:
            raise ResourceError(f"no R <= {max_R} reaches p > {thr:.6f}")
    while hi - lo > 2:
        mid = (lo + hi) // 2
        mid -= mid % 2
        if ok(mid, math.inf)[0]:
            hi = mid
        else:
            lo = mid
    R = hi
    ga = G.atoms()
    if ga is not None:
        # p_{R,M} only changes at atoms of G, and M = max atom equals M = inf
        M = next(float(v) for v in ga[0] if ok(R, float(v))[0])
    else:
        M_hi = 1.0
        while not ok(R, M_hi)[0]:
            M_hi *= 2
            if M_hi > 1e12:
                raise ResourceError("M search diverged")
        M_lo = 0.0
        while M_hi - M_lo > M_TOL * max(1.0, M_hi):
            mid = 0.5 * (M_lo + M_hi)
            if ok(R, mid)[0]:
                M_hi = mid
            else:
                M_lo = mid
        M = M_hi
    _, res = ok(R, M)
    return RMChoice(R, M, res.p_hat, wilson_lower(res.p_hat, samples, z), thr, eta0)


def delta0(eta0: float, d: int, R: int, M: float) -> float:
    """1 - (1 - e^{-eta0}) (2d e^M)^{-2dR}."""
    if eta0 <= 0:
        raise DomainError("eta0 must be positive")
    return 1.0 - (-math.expm1(-eta0)) * math.exp(-2 * d * R * (math.log(2 * d) + M))


# ---------------------------------------------------------------------------
# path animals and crossings

@dataclass
class AnimalFraction:
    size: int
    marked: int

    @property
    def fraction(self) -> float:
        return self.marked / self.size if self.size else 0.0

    @property
    def flag(self) -> bool:
        return self.size > 0 and self.fraction >= 0.5


def animal_white_fraction(trace, R: int, marked, target) -> AnimalFraction:
    """Marked share of the path animal {[S_k]_R : k < H(box of target)}."""
    stop = box_hitting_index(trace, target, R)
    if stop is None:
        raise DomainError("the trace never reaches the target box")
    animal = path_animal(trace, R, stop)
    marked = {tuple(np.atleast_1d(v).tolist()) for v in marked}
    return AnimalFraction(len(animal), sum(1 for v in animal.labels if v in marked))


@dataclass
class FailureTable:
    N: np.ndarray
    failures: np.ndarray
    trials: np.ndarray
    fit: Optional[tuple] = None    # (C1, C2) in C1 exp(-C2 N), diagnostic only

    @property
    def rate(self) -> np.ndarray:
        return self.failures / self.trials

    @property
    def stderr(self) -> np.ndarray:
        r = self.rate
        return np.sqrt(r * (1 - r) / self.trials)


def animal_failure_table(p: float, N_list: Sequence[int], trials: int, seed: int, R: int = 2) -> FailureTable:
    """d=1 frequency of a path animal of size >= N having marked share < 1/2.

    Box labels are marked independently with probability p (keyed by
    label).  The walk runs from 0 until it enters the box with label N - 1,
    first reached at h = R (N - 1) - R/2.  In d=1 the path animal is the label
    interval from [min]_R to N - 2, and the walk minimum before H(h) has the
    exact law P(-min >= m) = h / (h + m), so no step budget is needed.
    """
    if R < 2 or R % 2:
        raise DomainError("R must be even and >= 2")
    fails = []
    rng = np.random.default_rng(seed)
    for N in N_list:
        if N < 2:
            raise DomainError("N must be >= 2")
        h = R * (N - 1) - R // 2
        V = 1.0 - rng.random(trials)                     # (0, 1]
        depth = np.floor(h / V - h).astype(np.int64)     # -min of the walk
        lo = box_labels(-depth[:, None], R)[:, 0]
        bad = 0
        for t in range(trials):
            labels = np.arange(lo[t], N - 1)
            marks = keyed_uniforms(replica_seed(seed, N, t), labels[:, None]) < p
            bad += int(marks.mean() < 0.5)
        fails.append(bad)
    N = np.asarray(N_list, dtype=float)
    fails = np.asarray(fails, dtype=float)
    tr_arr = np.full(N.size, float(trials))
    fit = None
    pos = fails > 0
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(N[pos], np.log(fails[pos] / trials), 1)
        fit = (float(math.exp(icpt)), float(-slope))
    return FailureTable(N, fails, tr_arr, fit)


@dataclass
class CrossingStats:
    animal_size: int
    good_boxes_in_animal: int
    traversals: int
    boxes_traversed_M_times: int
    short_crossings: int
    long_crossings: int
    total_crossing_time: int
    light_sites: int               # #{z : 1 <= ell_z(H) <= M L_B}
    light_site_threshold: float    # |target|_1 / (12 d R)
    e3_bound: int                  # A floor(|target|_inf / R)

    @property
    def good_fraction(self) -> float:
        return self.good_boxes_in_animal / self.animal_size if self.animal_size else 0.0

    @property
    def short_fraction(self) -> float:
        return self.short_crossings / self.traversals if self.traversals else 1.0

    @property
    def e3(self) -> bool:
        return self.traversals <= self.e3_bound

    @property
    def light_flag(self) -> bool:
        return self.light_sites >= self.light_site_threshold


def good_labels(omega_F: PotentialField, labels, kappa: float, R: int) -> set:
    """Labels whose R-box contains a site with omega_F >= kappa."""
    out = set()
    for v in labels:
        b = box_of(v, R, omega_F.box.d)
        if not omega_F.box.covers(b):
            raise DomainError(f"field does not cover box {v}")
        if np.any(omega_F.box.subarray(omega_F.values, b) >= kappa):
            out.add(tuple(int(c) for c in np.atleast_1d(v)))
    return out


def crossing_statistics(trace, omega_F: PotentialField, kappa: float, R: int, M: int, L_B: int,
                        target, A: int = DEFAULT_A) -> CrossingStats:
    """Crossing counts of kappa-good boxes along the trace up to H(target).

    ``L_B`` is the crossing-duration threshold (B R^{2d} for a chosen B).
    """
    target = tuple(int(v) for v in np.atleast_1d(target))
    d = len(target)
    hit = hitting_index(trace, [target])
    if hit is None:
        raise DomainError("the trace never reaches the target")
    tr = trace.prefix(hit)
    visited = {tuple(r) for r in np.unique(box_labels(tr.steps, R), axis=0).tolist()}
    good = good_labels(omega_F, visited, kappa, R)
    stop = box_hitting_index(tr, target, R)
    animal = path_animal(tr, R, stop)
    cr = box_crossings(tr, good, R)
    per_box = {}
    for c in cr:
        per_box[c.label] = per_box.get(c.label, 0) + 1
    lt = local_times(tr, hit)
    light = sum(1 for v in lt.counts.values() if 1 <= v <= M * L_B)
    n1 = sum(abs(v) for v in target)
    ninf = max(abs(v) for v in target)
    return CrossingStats(
        animal_size=len(animal),
        good_boxes_in_animal=sum(1 for v in animal.labels if v in good),
        traversals=len(cr),
        boxes_traversed_M_times=sum(1 for k in per_box.values() if k >= M),
        short_crossings=sum(1 for c in cr if c.duration <= L_B),
        long_crossings=sum(1 for c in cr if c.duration > L_B),
        total_crossing_time=sum(c.duration for c in cr),
        light_sites=light,
        light_site_threshold=n1 / (12 * d * R),
        e3_bound=A * (ninf // R),
    )


def crossing_box_for(trace, R: int) -> Box:
    """Box covering every R-box the trace visits."""
    lab = box_labels(trace.steps, R)
    lo = lab.min(axis=0) * R - R // 2
    hi = lab.max(axis=0) * R + R // 2 - 1
    return Box(tuple(lo), tuple(hi))


# ---------------------------------------------------------------------------
# coupled gap experiments

@dataclass
class GapEntry:
    n: int
    gap: float
    stderr: float
    per_unit: float
    per_unit_stderr: float
    min_sample_gap: float


@dataclass
class GapReport:
    mode: str
    x: tuple
    n_list: list
    entries: list
    confidence: float = 0.99
    seed: int = 0
    samples: int = 0
    warnings: list = field(default_factory=list)

    def lower_bound(self, i: int = -1) -> float:
        """One-sided lower confidence bound on the per-unit gap."""
        e = self.entries[i]
        return e.per_unit - _normal.ppf(self.confidence) * e.per_unit_stderr

    @property
    def positive(self) -> bool:
        return all(self.lower_bound(i) > 0 for i in range(len(self.entries)))

    def stable(self, k: float = 3.0) -> bool:
        """Consecutive per-unit gaps agree within k combined standard errors."""
        for a, b in zip(self.entries[:-1], self.entries[1:]):
            if abs(a.per_unit - b.per_unit) > k * math.hypot(a.per_unit_stderr, b.per_unit_stderr) + 1e-9:
                return False
        return True


COUPLING_TOL = {1: 1e-12, 2: 1e-9}


def coupled_gap_experiment(F, G, x, n_list: Sequence[int], samples: int, mode: str = "quenched",
                           seed: int = 0, margin: Optional[int] = None,
                           beta_G: Optional[tuple] = None) -> GapReport:
    """Per-unit gap between the F and G costs under the quantile coupling.

    Quenched: a(0, nx, omega_F) - a(0, nx, omega_G) per coupled sample, which
    must be >= 0 (up to solver round-off).  Annealed: b_F - b_G from coupled
    potential_mc runs, with a joint delta-method standard error.
    """
    if not strictly_dominates(F, G):
        raise PreconditionError("F must strictly dominate G")
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    d = x.size
    norm = float(np.abs(x).sum())
    report = GapReport(mode, tuple(int(v) for v in x), list(n_list), [], seed=seed, samples=samples)
    for n in n_list:
        if mode == "quenched":
            aF, _ = quenched_cost_samples(F, x, n, samples, seed, margin)
            aG, _ = quenched_cost_samples(G, x, n, samples, seed, margin)
            diff = aF - aG
            tol = COUPLING_TOL.get(d, 1e-9) * max(1.0, float(np.max(np.abs(aF))))
            if np.any(diff < -tol):
                raise CouplingViolation(f"negative coupled gap {diff.min():.3e} at n={n}")
            deterministic = F.is_deterministic and G.is_deterministic
            gap = float(diff.mean())
            se = 0.0 if deterministic or samples < 2 else float(diff.std(ddof=1) / math.sqrt(samples))
            mn = float(diff.min())
        elif mode == "annealed":
            y = tuple(int(v) for v in n * x)
            lF, _, _ = potential_e_samples(F, y, samples, seed, margin)
            lG, _, _ = potential_e_samples(G, y, samples, seed, margin)
            mF = logsumexp(lF) - math.log(samples)
            mG = logsumexp(lG) - math.log(samples)
            gap = float(mG - mF)
            infl = -np.exp(lF - mF) + np.exp(lG - mG)
            se = float(infl.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
            mn = float(np.min(lG - lF))
        else:
            raise DomainError(f"unknown mode {mode!r}")
        report.entries.append(GapEntry(n, gap, se, gap / (n * norm), se / (n * norm), mn))
    if mode == "annealed" and d == 1:
        F0 = float(F.cdf(0.0))
        if beta_G is None:
            report.warnings.append("no beta_G estimate supplied; threshold condition not checked")
        elif not F0 < math.exp(-(beta_G[0] + 3 * beta_G[1])):
            report.warnings.append("F(0) < exp(-beta_G(1)) not established; a gap is not guaranteed")
    for w in report.warnings:
        warnings.warn(f"coupled_gap_experiment: {w}", RuntimeWarning, stacklevel=2)
    return report


# ---------------------------------------------------------------------------
# d = 1 criteria

@dataclass
class CriterionResult:
    regime: str
    reason: str
    F0: float
    G0: float
    beta_G: Optional[tuple]
    predicted_common: Optional[float] = None
    key_ceiling: float = math.inf
    key_ok: Optional[bool] = None


def criterion_d1(F, G, beta_G: Optional[tuple] = None, beta_F: Optional[tuple] = None,
                 k: float = 3.0) -> CriterionResult:
    """Classify whether the d=1 annealed exponents of F and G differ.

    ``beta_G`` and ``beta_F`` are (estimate, stderr) of beta(1).  The ceiling
    beta_F(1) <= -log F(0) is checked whenever ``beta_F`` is given.
    """
    if not strictly_dominates(F, G):
        raise PreconditionError("F must strictly dominate G")
    F0, G0 = float(F.cdf(0.0)), float(G.cdf(0.0))
    ceiling = math.inf if F0 == 0 else -math.log(F0)
    key_ok = None if beta_F is None else bool(beta_F[0] <= ceiling + k * beta_F[1])
    if F0 == 0:
        return CriterionResult(STRICT_GAP, "F(0) = 0", F0, G0, beta_G, None, ceiling, key_ok)
    if F0 < G0:
        return CriterionResult(STRICT_GAP, "F(0) < G(0)", F0, G0, beta_G, None, ceiling, key_ok)
    if beta_G is None:
        return CriterionResult(UNDETERMINED, "F(0) = G(0) and no beta_G estimate", F0, G0, None,
                               None, ceiling, key_ok)
    b, s = beta_G
    if F0 < math.exp(-(b + k * s)):
        return CriterionResult(STRICT_GAP, "F(0) < exp(-beta_G(1))", F0, G0, beta_G, None, ceiling, key_ok)
    if F0 > math.exp(-(b - k * s)) or (s == 0 and F0 >= math.exp(-b)):
        return CriterionResult(COINCIDE, "F(0) >= exp(-beta_G(1))", F0, G0, beta_G, ceiling, ceiling, key_ok)
    return CriterionResult(UNDETERMINED, "F(0) within the confidence band of exp(-beta_G(1))",
                           F0, G0, beta_G, None, ceiling, key_ok)


def gamblers_ruin(n: int, m: int) -> float:
    """P^0(H(n) < H(-m)) = m / (n + m)."""
    if n < 1 or m < 1:
        raise DomainError("n and m must be >= 1")
    return m / (n + m)


@dataclass
class ThresholdResult:
    v0: float
    diffs: np.ndarray
    stderrs: np.ndarray
    resolved: bool          # a coincidence region was found
    monotone: bool          # zero region followed by a positive region, no negatives
    note: str = ""


def threshold_scan(x_grid, J_F, J_G, se_F=None, se_G=None, k: float = 3.0,
                   add_a_holds: Optional[bool] = None) -> ThresholdResult:
    """Largest grid |x| where J_F - J_G is within k sigma of 0.

    ``add_a_holds`` is the outcome of F(0) < exp(-beta_G(1)); when true a gap
    is expected on all of 0 < |x| < 1 and a warning is issued.
    """
    x = np.abs(np.asarray(x_grid, dtype=float))
    order = np.argsort(x)
    x = x[order]
    diff = (np.asarray(J_F, dtype=float) - np.asarray(J_G, dtype=float))[order]
    sF = np.zeros_like(diff) if se_F is None else np.asarray(se_F, dtype=float)[order]
    sG = np.zeros_like(diff) if se_G is None else np.asarray(se_G, dtype=float)[order]
    se = np.hypot(sF, sG)
    noise = k * se + 1e-9
    zero = np.abs(diff) <= noise
    note = ""
    if add_a_holds:
        note = "threshold condition holds: a gap is predicted for every 0 < |x| < 1"
        warnings.warn(f"threshold_scan: {note}", RuntimeWarning, stacklevel=2)
    if not zero.any():
        return ThresholdResult(0.0, diff, se, False, bool(np.all(diff >= -noise)),
                               note or "no coincidence region resolved")
    v0 = float(x[np.flatnonzero(zero)[-1]])
    first_pos = np.flatnonzero(~zero)
    monotone = bool(np.all(diff >= -noise) and (first_pos.size == 0 or np.all(~zero[first_pos[0]:])))
    return ThresholdResult(v0, diff, se, True, monotone, note)
