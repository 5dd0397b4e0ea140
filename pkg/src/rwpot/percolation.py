"""Site percolation eta_M = 1{omega <= M}: clusters, chemical distance, the
projection onto the giant cluster, and estimates of the norm mu_M.

The infinite cluster is proxied by the largest cluster inside a finite box.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .distributions import DistributionSpec, shift_by
from .errors import DomainError, PreconditionError
from .fields import Box, PotentialField, realize, replica_seed, sample_uniform_field
from .quenched import TruncatedDomain, solve_e

SUPERCRITICAL_GUARD = 0.75
UNREACHABLE = -1


@dataclass(frozen=True, eq=False)
class PercolationConfig:
    box: Box
    open: np.ndarray
    M: float = math.nan

    @classmethod
    def from_field(cls, omega: PotentialField, M: float) -> "PercolationConfig":
        if M < 0:
            raise DomainError("threshold M must be >= 0")
        return cls(omega.box, omega.values <= M, float(M))

    @classmethod
    def all_open(cls, box: Box) -> "PercolationConfig":
        return cls(box, np.ones(box.shape, dtype=bool))


@dataclass(frozen=True, eq=False)
class Clusters:
    labels: np.ndarray      # 0 for closed sites, 1..k for clusters
    sizes: np.ndarray       # sizes[j] is the size of cluster j+1
    largest: int            # label of the largest cluster, 0 if none

    @property
    def count(self) -> int:
        return int(self.sizes.size)

    def same(self, box: Box, u, v) -> bool:
        a = self.labels[box.index(u)]
        return a != 0 and a == self.labels[box.index(v)]


def clusters(config: PercolationConfig) -> Clusters:
    """Nearest-neighbour connected components of the open sites.

    The largest cluster is the one of maximal size; ties go to the cluster
    containing the lexicographically smallest site.
    """
    d = config.box.d
    structure = ndimage.generate_binary_structure(d, 1)
    labels, k = ndimage.label(config.open, structure=structure)
    if k == 0:
        return Clusters(labels, np.zeros(0, dtype=np.int64), 0)
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=k + 1)[1:]
    # C order is lexicographic order of coordinates
    first = np.full(k, flat.size)
    nz = np.flatnonzero(flat)
    np.minimum.at(first, flat[nz] - 1, nz)
    best = np.lexsort((first, -sizes))[0]
    return Clusters(labels, sizes, int(best) + 1)


def _neighbour_shift(mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mask)
    for ax in range(mask.ndim):
        sl_a = [slice(None)] * mask.ndim
        sl_b = [slice(None)] * mask.ndim
        sl_a[ax], sl_b[ax] = slice(1, None), slice(None, -1)
        out[tuple(sl_a)] |= mask[tuple(sl_b)]
        out[tuple(sl_b)] |= mask[tuple(sl_a)]
    return out


def distance_map(config: PercolationConfig, u) -> np.ndarray:
    """Chemical distance from u to every site (-1 where unreachable).

    Breadth-first search over open sites, one whole frontier per step.
    """
    idx = config.box.index(u)
    dist = np.full(config.box.shape, UNREACHABLE, dtype=np.int64)
    if not config.open[idx]:
        return dist
    frontier = np.zeros(config.box.shape, dtype=bool)
    frontier[idx] = True
    dist[idx] = 0
    k = 0
    while frontier.any():
        k += 1
        frontier = _neighbour_shift(frontier) & config.open & (dist == UNREACHABLE)
        dist[frontier] = k
    return dist


def chemical_distance(config: PercolationConfig, u, v) -> Optional[int]:
    """Length of the shortest open path from u to v, ``None`` if unreachable."""
    dv = distance_map(config, u)[config.box.index(v)]
    return None if dv == UNREACHABLE else int(dv)


def project_to_giant(config: PercolationConfig, z, cl: Optional[Clusters] = None) -> tuple:
    """l1-closest site of the largest cluster; ties go to the lexicographically smallest."""
    cl = clusters(config) if cl is None else cl
    if cl.largest == 0:
        raise DomainError("no open sites")
    z = np.atleast_1d(np.asarray(z, dtype=np.int64))
    sites = config.box.sites()[cl.labels.ravel() == cl.largest]   # already lexicographic
    dist = np.abs(sites - z).sum(axis=1)
    return tuple(int(c) for c in sites[int(np.argmin(dist))])


def spans(cl: Clusters, axis: int) -> bool:
    """Whether the largest cluster touches both faces orthogonal to ``axis``."""
    if cl.largest == 0:
        return False
    g = cl.labels == cl.largest
    first = np.take(g, 0, axis=axis).any()
    last = np.take(g, -1, axis=axis).any()
    return bool(first and last)


@dataclass
class MuEstimate:
    n: int
    mu_hat: float
    stderr: float
    unreachable_fraction: float      # largest cluster fails to span the box along y
    disconnected_fraction: float     # 0 or ny itself outside the largest cluster
    samples: int
    per_sample: np.ndarray


def mu_estimate(phi: DistributionSpec, M: float, y, n_list: Sequence[int], samples: int,
                margin: Optional[int] = None, seed: int = 0,
                guard: float = SUPERCRITICAL_GUARD) -> list:
    """Sample means of d_M(0~, (ny)~)/n with the largest in-box cluster as
    the infinite-cluster proxy.

    Environment i is keyed by ``replica_seed(seed, i)`` for every n and M, so
    runs at different thresholds are coupled.
    """
    y = tuple(int(v) for v in np.atleast_1d(y))
    d = len(y)
    if d < 2:
        raise DomainError("percolation norms need d >= 2")
    if not any(y):
        raise DomainError("direction must be nonzero")
    pM = float(phi.cdf(M))
    if pM < guard:
        raise PreconditionError(f"phi(M) = {pM:.4f} is below the supercriticality guard {guard}")
    axis = int(np.argmax(np.abs(y)))
    out = []
    for n in n_list:
        target = tuple(n * c for c in y)
        L = 2 * n if margin is None else int(margin)
        box = Box.around([(0,) * d, target], L)
        vals = np.empty(samples)
        span_fail = 0
        disc = 0
        for i in range(samples):
            omega = realize(sample_uniform_field(box, replica_seed(seed, i)), phi)
            cfg = PercolationConfig.from_field(omega, M)
            cl = clusters(cfg)
            span_fail += not spans(cl, axis)
            disc += not (cl.same(box, (0,) * d, (0,) * d) and cl.same(box, (0,) * d, target)
                         and cl.labels[box.index((0,) * d)] == cl.largest)
            a = project_to_giant(cfg, (0,) * d, cl)
            b = project_to_giant(cfg, target, cl)
            vals[i] = chemical_distance(cfg, a, b) / n
        est = MuEstimate(n, float(vals.mean()),
                         float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0,
                         span_fail / samples, disc / samples, samples, vals)
        if est.unreachable_fraction > 0.5:
            warnings.warn(f"mu_estimate: largest cluster fails to span in {est.unreachable_fraction:.0%} "
                          "of samples; the threshold may be subcritical", RuntimeWarning, stacklevel=2)
        out.append(est)
    return out


@dataclass
class ChainCheck:
    cost: float
    d_M: Optional[int]
    bound: float
    applicable: bool

    @property
    def holds(self) -> bool:
        return (not self.applicable) or self.cost <= self.bound + 1e-9


def chain_check(phi: DistributionSpec, M: float, lam: float, y, n: int, seed: int,
                margin: Optional[int] = None) -> ChainCheck:
    """a(0, ny, omega + lambda) <= d_M(0, ny) (lambda + log 2d + M) on one box.

    Both sides are computed on the same truncated box; the open path found
    by the search stays in the box, so the inequality holds exactly there.
    Applicable only when 0 and ny are joined by an open path.
    """
    y = tuple(int(v) for v in np.atleast_1d(y))
    d = len(y)
    target = tuple(n * c for c in y)
    L = 2 * n if margin is None else int(margin)
    dom = TruncatedDomain.around((0,) * d, target, L)
    U = sample_uniform_field(dom.box, seed)
    omega = realize(U, phi)
    cfg = PercolationConfig.from_field(omega, M)
    dm = chemical_distance(cfg, (0,) * d, target)
    shifted = realize(U, shift_by(phi, lam))
    cost = -solve_e(shifted, target, dom).log_at((0,) * d)
    if dm is None:
        return ChainCheck(cost, None, math.inf, False)
    return ChainCheck(cost, dm, dm * (lam + math.log(2 * d) + M), True)
