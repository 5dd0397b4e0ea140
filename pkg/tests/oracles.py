"""Reference computations that share no code with the package.

Each oracle uses a different method from the implementation it checks:
matrix powers instead of a linear solve, Redelmeier's algorithm instead of
set growth, a numerical Legendre transform instead of the closed form,
plain flood fill and breadth-first search instead of array operations.
"""
from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np
from scipy import optimize, stats

PATH_LENGTH = 30


def first_passage_gf(s: float) -> float:
    """E^0[s^{H(1)}] for the simple walk on Z."""
    return (1 - math.sqrt(1 - s * s)) / s


def path_sum_e(omega: np.ndarray, lo, y, x, terms: int = PATH_LENGTH) -> tuple:
    """Truncated path enumeration of e(x, y) on a box with absorbing exterior.

    Sums exp(-sum omega) (2d)^{-len} over paths x -> y of length <= ``terms``
    that stay in the box and meet y only at the end, via powers of the
    killed transition matrix K.  Returns (partial sum, tail bound) with the
    tail K^{terms} e <= K^{terms} 1 because 0 <= e <= 1.
    """
    shape = omega.shape
    d = len(shape)
    sites = list(itertools.product(*[range(s) for s in shape]))
    index = {s: i for i, s in enumerate(sites)}
    iy = index[tuple(c - l for c, l in zip(y, lo))]
    ix = index[tuple(c - l for c, l in zip(x, lo))]
    n = len(sites)
    K = np.zeros((n, n))
    b = np.zeros(n)
    for s, i in index.items():
        if i == iy:
            continue
        w = math.exp(-omega[s]) / (2 * d)
        for ax in range(d):
            for step in (-1, 1):
                t = list(s)
                t[ax] += step
                t = tuple(t)
                if t not in index:
                    continue
                j = index[t]
                if j == iy:
                    b[i] += w
                else:
                    K[i, j] += w
    total = np.zeros(n)
    v = b.copy()
    for _ in range(terms):
        total += v
        v = K @ v
    tail = np.ones(n)
    for _ in range(terms):
        tail = K @ tail
    tail[iy] = 0.0
    total[iy] = 1.0
    return float(total[ix]), float(tail[ix])


def redelmeier_fixed(n: int) -> list:
    """Fixed polyomino counts r(1..n) by Redelmeier's algorithm."""
    counts = [0] * (n + 1)

    def admissible(c):
        return c[1] > 0 or (c[1] == 0 and c[0] >= 0)

    def grow(untried, seen, size):
        untried = list(untried)
        while untried:
            c = untried.pop()
            counts[size + 1] += 1
            if size + 1 < n:
                new = []
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nb = (c[0] + dx, c[1] + dy)
                    if admissible(nb) and nb not in seen:
                        new.append(nb)
                grow(untried + new, seen | set(new), size + 1)

    grow([(0, 0)], {(0, 0)}, 0)
    return counts[1:]


def animals_with_origin(d: int, ell: int) -> int:
    """Connected ell-site sets containing the origin: ell * r(ell)."""
    if d == 1:
        return ell
    return ell * redelmeier_fixed(ell)[-1]


def legendre_log_cosh(x: float) -> float:
    """sup_l (l x - log cosh l), maximised numerically."""
    res = optimize.minimize_scalar(lambda l: -(l * x - math.log(math.cosh(l))),
                                   bounds=(0.0, 50.0), method="bounded",
                                   options={"xatol": 1e-12})
    return -res.fun


def binomial_endpoint(n: int) -> np.ndarray:
    """P(S_n = z) for z = -n..n."""
    z = np.arange(-n, n + 1)
    out = np.zeros(2 * n + 1)
    even = (n + z) % 2 == 0
    out[even] = stats.binom.pmf((n + z[even]) // 2, n, 0.5)
    return out


def flood_fill(open_mask: np.ndarray) -> list:
    """Clusters as a list of site sets, by explicit stack flood fill."""
    seen = set()
    out = []
    d = open_mask.ndim
    for s in itertools.product(*[range(k) for k in open_mask.shape]):
        if not open_mask[s] or s in seen:
            continue
        comp = {s}
        stack = [s]
        seen.add(s)
        while stack:
            v = stack.pop()
            for ax in range(d):
                for step in (-1, 1):
                    w = list(v)
                    w[ax] += step
                    w = tuple(w)
                    if all(0 <= c < k for c, k in zip(w, open_mask.shape)) and open_mask[w] and w not in seen:
                        seen.add(w)
                        comp.add(w)
                        stack.append(w)
        out.append(frozenset(comp))
    return out


def bfs_distance(open_mask: np.ndarray, u, v):
    """Shortest open path length between array indices u and v, or None."""
    if not (open_mask[u] and open_mask[v]):
        return None
    dist = {u: 0}
    q = deque([u])
    while q:
        a = q.popleft()
        if a == v:
            return dist[a]
        for ax in range(open_mask.ndim):
            for step in (-1, 1):
                w = list(a)
                w[ax] += step
                w = tuple(w)
                if all(0 <= c < k for c, k in zip(w, open_mask.shape)) and open_mask[w] and w not in dist:
                    dist[w] = dist[a] + 1
                    q.append(w)
    return None
