"""Annealed travel cost b(0, y) = -log E[e(0, y, omega)] by two independent
estimators, and upper-bound sequences for the annealed exponent.

walk_mc uses the factorisation over sites,

    E[e(0, y, omega)] = E^0[ prod_z L(ell_z(H(y))) ; H(y) < inf ],

so only walk local times need sampling and one batch of walks serves every
potential law.  potential_mc averages solved values of e over sampled
environments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .distributions import DistributionSpec, laplace_transform, log_laplace_transform
from .errors import DomainError
from .lattice import (LocalTimeBatch, local_times_from_traces, sample_local_times_1d,
                      sample_walk_until)
from .quenched import (CostEstimate, TruncatedDomain, default_margin, log_e_1d, realize,
                       sample_uniform_field, solve_e)
from .fields import realize_rows, replica_seed

CAP_FACTOR = 64


@dataclass
class AnnealedEstimate(CostEstimate):
    estimator: str = "walk_mc"
    cap: Optional[int] = None
    margin: Optional[int] = None
    mean_e: float = math.nan
    bias_bound: float = 0.0   # b is underestimated by at most this (truncated profiles)


def _site(z) -> tuple:
    return tuple(int(v) for v in np.atleast_1d(z))


def _from_log_weights(logw: np.ndarray) -> tuple:
    """(b, stderr of b, mean e) from per-sample log weights, delta method."""
    N = logw.size
    if N == 0 or not np.any(np.isfinite(logw)):
        return math.inf, math.nan, 0.0
    log_m = float(logsumexp(logw) - math.log(N))
    rel = np.exp(logw - log_m)               # w_i / mean, finite
    se_rel = float(np.std(rel, ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return -log_m, se_rel, math.exp(log_m)


def default_cap(y) -> int:
    n = int(np.abs(np.asarray(_site(y))).sum())
    return CAP_FACTOR * n * n


def sample_local_times(y, samples: int, seed, cap: Optional[int] = None,
                       sampler: str = "auto") -> LocalTimeBatch:
    """Local times ell_z(H(y)) for ``samples`` walks from the origin.

    ``sampler`` is "crossing" (exact, d=1 only), "trace" (step-by-step with
    step budget ``cap``) or "auto" (crossing in d=1, trace otherwise).
    """
    y = _site(y)
    d = len(y)
    if not any(y):
        raise DomainError("target must differ from the origin")
    if sampler == "auto":
        sampler = "crossing" if d == 1 else "trace"
    rng = np.random.default_rng(seed)
    if sampler == "crossing":
        if d != 1:
            raise DomainError("the crossing sampler is d=1 only")
        n = abs(y[0])
        # the law of the local-time profile is mirror symmetric
        return sample_local_times_1d(n, samples, rng)
    cap = default_cap(y) if cap is None else int(cap)
    if cap < sum(abs(v) for v in y):
        raise DomainError("step budget smaller than the distance to the target")
    traces = [sample_walk_until((0,) * d, [y], cap, rng) for _ in range(samples)]
    return local_times_from_traces(traces)


def b_walk_mc(phi: Union[DistributionSpec, Sequence[DistributionSpec]], y, samples: int,
              cap: Optional[int] = None, seed=0, sampler: str = "auto",
              batch: Optional[LocalTimeBatch] = None):
    """Walk Monte Carlo estimate of b(0, y).

    Passing a sequence of specs reuses one batch of walks for all of them
    and returns a list.  Capped walks contribute weight 0; their share is
    reported as ``capped_fraction``.
    """
    many = not isinstance(phi, DistributionSpec)
    specs = list(phi) if many else [phi]
    if batch is None:
        batch = sample_local_times(y, samples, seed, cap, sampler)
    uniq, inv = np.unique(batch.counts, return_inverse=True)
    used_cap = None if (sampler == "crossing" or (sampler == "auto" and len(_site(y)) == 1)) else (
        default_cap(y) if cap is None else cap)
    n = int(np.abs(np.asarray(_site(y))).sum())
    out = []
    for spec in specs:
        logL = np.asarray(log_laplace_transform(spec, uniq.astype(float)))[inv]
        logw = np.bincount(batch.sample, weights=logL, minlength=batch.n_samples)
        logw = np.where(batch.hit, logw, -np.inf)
        b, se, m = _from_log_weights(logw)
        bias = 0.0
        if batch.truncated is not None and batch.truncated.any() and math.isfinite(b):
            share = float(np.exp(logsumexp(logw[batch.truncated]) - logsumexp(logw)))
            bias = math.inf if share >= 1 else -math.log1p(-share)
        out.append(AnnealedEstimate(b, se, batch.n_samples, (None, None), batch.capped_fraction,
                                    not math.isfinite(b), n, {}, None, "walk_mc", used_cap, None, m,
                                    bias))
    return out if many else out[0]


def potential_e_samples(phi: DistributionSpec, y, samples: int, seed, margin: Optional[int] = None) -> tuple:
    """log e(0, y, omega) per sampled environment at margins L and 2L."""
    y = _site(y)
    d = len(y)
    origin = (0,) * d
    L = default_margin(origin, y) if margin is None else int(margin)
    dom = TruncatedDomain.around(origin, y, L)
    dom2 = dom.enlarged(2)
    if d == 1:
        rows = realize_rows(phi, dom2.box, [replica_seed(seed, i) for i in range(samples)])
        off = dom.box.lo[0] - dom2.box.lo[0]
        iy2 = y[0] - dom2.box.lo[0]
        i0 = -dom2.box.lo[0]
        ext = float(phi.atoms()[0][0]) if phi.is_deterministic else None
        le2 = log_e_1d(rows, iy2, ext)[:, i0]
        le1 = log_e_1d(rows[:, off:off + dom.box.size], iy2 - off, ext)[:, i0 - off]
        return le1, le2, L
    le1 = np.empty(samples)
    le2 = np.empty(samples)
    for i in range(samples):
        fld = realize(sample_uniform_field(dom2.box, replica_seed(seed, i)), phi)
        le1[i] = solve_e(fld, y, dom).log_at(origin)
        le2[i] = solve_e(fld, y, dom2).log_at(origin)
    return le1, le2, L


def b_potential_mc(phi: DistributionSpec, y, samples: int, margin: Optional[int] = None,
                   seed=0) -> AnnealedEstimate:
    """b(0, y) = -log of the sample mean of solved e(0, y, omega).

    Environment i is keyed by ``replica_seed(seed, i)``, so two laws run with
    the same seed are coupled through one uniform field.
    """
    le1, le2, L = potential_e_samples(phi, y, samples, seed, margin)
    b, se, m = _from_log_weights(le1)
    b2, _, _ = _from_log_weights(le2)
    n = int(np.abs(np.asarray(_site(y))).sum())
    return AnnealedEstimate(b, se, samples, (b, b2), 0.0, not math.isfinite(b), n, {},
                            le1, "potential_mc", None, L, m)


def beta_bounds(phi: DistributionSpec, d: int) -> tuple:
    """(-log L(1), log 2d - log L(1)): per-unit bounds on the annealed exponent."""
    l1 = -math.log(float(laplace_transform(phi, 1.0)))
    return l1, math.log(2 * d) + l1


@dataclass
class BetaSequence:
    entries: list          # per-unit AnnealedEstimate for each n
    running_min: list      # (value, stderr) after each n
    x: tuple

    @property
    def estimate(self) -> tuple:
        return self.running_min[-1]


def beta_upper_sequence(phi: DistributionSpec, x, n_list: Sequence[int], samples: int = 10_000,
                        seed=0, estimator: str = "walk_mc", cap: Optional[int] = None,
                        margin: Optional[int] = None, sampler: str = "auto") -> BetaSequence:
    """b(0, nx)/n for each n and the running minimum over the list.

    Every entry is an upper bound on beta(x) up to statistical error.  The
    running minimum carries the standard error of the entry attaining it.
    ``checks`` on each entry record the bounds on beta(x)/|x|_1 within 3
    standard errors.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if not np.any(x):
        raise DomainError("direction must be nonzero")
    d = x.size
    norm = float(np.abs(x).sum())
    lo, hi = beta_bounds(phi, d)
    entries, run = [], []
    best = (math.inf, math.nan)
    for j, n in enumerate(n_list):
        y = tuple(int(v) for v in n * x)
        if estimator == "walk_mc":
            est = b_walk_mc(phi, y, samples, cap, replica_seed(int(seed), j), sampler)
        elif estimator == "potential_mc":
            est = b_potential_mc(phi, y, samples, margin, replica_seed(int(seed), j))
        else:
            raise DomainError(f"unknown estimator {estimator!r}")
        est.value /= n
        est.std_error /= n
        est.truncation_diag = tuple(None if v is None else v / n for v in est.truncation_diag)
        unit, se_unit = est.value / norm, est.std_error / norm
        est.checks = {
            "sandwich_lower": unit >= lo - 3 * se_unit - 1e-12,
            "sandwich_upper": unit <= hi + 3 * se_unit + 1e-12,
        }
        entries.append(est)
        if est.value < best[0]:
            best = (est.value, est.std_error)
        run.append(best)
    return BetaSequence(entries, run, tuple(int(v) for v in x))
