"""Lattice geometry, R-box decomposition, simple-random-walk traces, local
times, box crossings and lattice animals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import DomainError, ResourceError
from .fields import Box

ANIMAL_MAX_SIZE = 8


def _as_site(z) -> tuple:
    return tuple(int(v) for v in np.atleast_1d(z))


def _check_R(R: int) -> None:
    if R < 2 or R % 2:
        raise DomainError(f"box side R must be an even integer >= 2, got {R}")


def box_index(z, R: int):
    """Label v of the R-box Lambda_R(v) = R v + [-R/2, R/2)^d containing z.

    Returns an int in d=1 and a tuple otherwise.
    """
    _check_R(R)
    v = tuple((c + R // 2) // R for c in _as_site(z))
    return v[0] if len(v) == 1 else v


def box_labels(points: np.ndarray, R: int) -> np.ndarray:
    """Vectorised :func:`box_index`; ``points`` has shape (n, d)."""
    _check_R(R)
    return np.floor_divide(np.asarray(points, dtype=np.int64) + R // 2, R)


def box_of(label, R: int, d: Optional[int] = None) -> Box:
    _check_R(R)
    v = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if d is not None and v.size != d:
        raise DomainError("label dimension mismatch")
    lo = R * v - R // 2
    return Box(tuple(lo), tuple(lo + R - 1))


# ---------------------------------------------------------------------------
# walk traces

@dataclass(frozen=True, eq=False)
class WalkTrace:
    """Positions S_0, ..., S_K as an integer array of shape (K + 1, d)."""

    steps: np.ndarray
    hit_index: Optional[int] = None
    capped: bool = False

    @property
    def start(self) -> tuple:
        return _as_site(self.steps[0])

    @property
    def length(self) -> int:
        return len(self.steps) - 1

    @property
    def d(self) -> int:
        return self.steps.shape[1]

    def prefix(self, k: int) -> "WalkTrace":
        """Trace restricted to S_0..S_k."""
        hit = self.hit_index if self.hit_index is not None and self.hit_index <= k else None
        return WalkTrace(self.steps[: k + 1], hit, False)

    def dump(self, path) -> None:
        """Debug dump, one "k x_1 ... x_d" line per step."""
        with open(path, "w") as fh:
            for k, s in enumerate(self.steps):
                fh.write(f"{k} " + " ".join(map(str, s)) + "\n")


def trace_from_path(path) -> WalkTrace:
    arr = np.asarray(path, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if len(arr) > 1 and np.any(np.abs(np.diff(arr, axis=0)).sum(axis=1) != 1):
        raise DomainError("consecutive sites must be nearest neighbours")
    return WalkTrace(arr)


TargetLike = Union[Box, Callable[[np.ndarray], np.ndarray], "list", "tuple", np.ndarray]


def _target_mask(target) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(target, Box):
        return target.contains
    if callable(target):
        return target
    t = np.asarray(target, dtype=np.int64)
    if t.ndim == 0:
        t = t.reshape(1, 1)
    elif t.ndim == 1:
        t = t[:, None] if t.size > 1 and not isinstance(target, tuple) else t[None, :]
    keys = {tuple(row) for row in t}

    if len(keys) == 1:
        (only,) = keys
        only_arr = np.asarray(only)
        return lambda pts: np.all(pts == only_arr, axis=1)

    def mask(pts):
        return np.array([tuple(p) in keys for p in pts], dtype=bool)

    return mask


def _unit_moves(d: int, choice: np.ndarray) -> np.ndarray:
    moves = np.zeros((choice.size, d), dtype=np.int64)
    moves[np.arange(choice.size), choice // 2] = 1 - 2 * (choice % 2)
    return moves


def sample_walk_until(start, target, cap: int, seed) -> WalkTrace:
    """Run a simple random walk from ``start`` until it enters ``target``.

    ``target`` is a :class:`Box`, a predicate on (n, d) arrays, or a
    collection of sites (a tuple is read as one site).  At most ``cap`` steps
    are taken; ``capped`` is set when the budget runs out.
    """
    if cap < 1:
        raise DomainError("step budget must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    start_arr = np.asarray(_as_site(start), dtype=np.int64)
    d = start_arr.size
    in_target = _target_mask(target)
    if in_target(start_arr[None, :])[0]:
        return WalkTrace(start_arr[None, :], 0, False)
    chunks = [start_arr[None, :]]
    pos = start_arr
    done = 0
    chunk = 256
    while done < cap:
        m = min(chunk, cap - done)
        pts = pos + np.cumsum(_unit_moves(d, rng.integers(0, 2 * d, size=m)), axis=0)
        hit = np.flatnonzero(in_target(pts))
        if hit.size:
            chunks.append(pts[: hit[0] + 1])
            steps = np.concatenate(chunks)
            return WalkTrace(steps, len(steps) - 1, False)
        chunks.append(pts)
        pos = pts[-1]
        done += m
        chunk = min(2 * chunk, 1 << 16)
    return WalkTrace(np.concatenate(chunks), None, True)


def hitting_index(trace: WalkTrace, target) -> Optional[int]:
    """First k with S_k in ``target`` (same target forms as the sampler)."""
    hit = np.flatnonzero(_target_mask(target)(trace.steps))
    return int(hit[0]) if hit.size else None


def box_hitting_index(trace: WalkTrace, z, R: int) -> Optional[int]:
    """H(Lambda_R([z]_R)) along the trace."""
    label = box_labels(np.asarray(_as_site(z))[None, :], R)[0]
    hit = np.flatnonzero(np.all(box_labels(trace.steps, R) == label, axis=1))
    return int(hit[0]) if hit.size else None


# ---------------------------------------------------------------------------
# local times and range

@dataclass(frozen=True)
class LocalTimeField:
    counts: dict
    horizon: int

    def __getitem__(self, z):
        return self.counts.get(_as_site(z), 0)

    def total(self) -> int:
        return sum(self.counts.values())


def local_times(trace: WalkTrace, N: int) -> LocalTimeField:
    """ell_z(N) = #{0 <= k < N : S_k = z}."""
    if N < 0 or N > len(trace.steps):
        raise DomainError(f"horizon {N} exceeds the {len(trace.steps)} recorded positions")
    if N == 0:
        return LocalTimeField({}, 0)
    sites, cnt = np.unique(trace.steps[:N], axis=0, return_counts=True)
    return LocalTimeField({_as_site(s): int(c) for s, c in zip(sites, cnt)}, N)


def range_size(trace: WalkTrace, k: int) -> int:
    """#{S_j : 0 <= j <= k}."""
    if k < 0 or k > trace.length:
        raise DomainError(f"k={k} outside the trace")
    return int(np.unique(trace.steps[: k + 1], axis=0).shape[0])


# ---------------------------------------------------------------------------
# box crossings

@dataclass(frozen=True)
class Crossing:
    sigma: int
    tau: int            # exit index; len(steps) when truncated
    label: tuple
    truncated: bool = False

    @property
    def duration(self) -> int:
        return self.tau - self.sigma


def _label_keys(labels: np.ndarray) -> list:
    return [tuple(int(c) for c in row) for row in labels]


def box_crossings(trace: WalkTrace, marked, R: int) -> List[Crossing]:
    """Entrance/exit pairs for marked R-boxes.

    tau_0 = 1; sigma_{j+1} = inf{k >= tau_j : S_k in a marked box};
    tau_{j+1} = inf{k > sigma_{j+1} : S_k leaves the box entered at sigma}.
    A crossing still open at the end of the trace is flagged ``truncated``.
    """
    marked = {(_as_site(v)) for v in marked}
    if not marked:
        return []
    labels = box_labels(trace.steps, R)
    keys = _label_keys(labels)
    in_marked = np.fromiter((k in marked for k in keys), dtype=bool, count=len(keys))
    marked_idx = np.flatnonzero(in_marked)
    change = np.flatnonzero(np.any(labels[1:] != labels[:-1], axis=1)) + 1
    out = []
    tau = 1
    n = len(trace.steps)
    while True:
        j = np.searchsorted(marked_idx, tau, side="left")
        if j >= marked_idx.size:
            break
        sigma = int(marked_idx[j])
        c = np.searchsorted(change, sigma, side="right")
        if c >= change.size:
            out.append(Crossing(sigma, n, keys[sigma], True))
            break
        tau = int(change[c])
        out.append(Crossing(sigma, tau, keys[sigma], False))
    return out


# ---------------------------------------------------------------------------
# lattice animals

@dataclass(frozen=True)
class LatticeAnimal:
    labels: frozenset

    def __len__(self):
        return len(self.labels)

    def __contains__(self, v):
        return _as_site(v) in self.labels

    @property
    def connected(self) -> bool:
        return is_connected(self.labels)


def _neighbours(v: tuple):
    for i in range(len(v)):
        for s in (-1, 1):
            yield v[:i] + (v[i] + s,) + v[i + 1:]


def is_connected(sites) -> bool:
    sites = set(sites)
    if not sites:
        return True
    first = next(iter(sites))
    seen = {first}
    stack = [first]
    while stack:
        v = stack.pop()
        for w in _neighbours(v):
            if w in sites and w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(sites)


def path_animal(trace: WalkTrace, R: int, stop_index: int) -> LatticeAnimal:
    """Labels [S_k]_R for 0 <= k < stop_index."""
    if stop_index < 0 or stop_index > len(trace.steps):
        raise DomainError("stop index outside the trace")
    if stop_index == 0:
        return LatticeAnimal(frozenset())
    labels = np.unique(box_labels(trace.steps[:stop_index], R), axis=0)
    return LatticeAnimal(frozenset(_label_keys(labels)))


def enumerate_animals(d: int, ell: int, return_list: bool = False):
    """Count connected ell-site subsets of Z^d containing the origin.

    Grows every animal of size k by one neighbouring site and deduplicates,
    so level k holds each animal exactly once.
    """
    if d not in (1, 2):
        raise DomainError("animal enumeration supports d in {1, 2}")
    if ell < 1:
        raise DomainError("animal size must be >= 1")
    if ell > ANIMAL_MAX_SIZE:
        raise ResourceError(f"animal size {ell} exceeds the enumeration budget {ANIMAL_MAX_SIZE}")
    origin = (0,) * d
    level = {frozenset([origin])}
    for _ in range(ell - 1):
        nxt = set()
        for a in level:
            for v in a:
                for w in _neighbours(v):
                    if w not in a:
                        nxt.add(a | {w})
        level = nxt
    if return_list:
        return len(level), sorted(tuple(sorted(a)) for a in level)
    return len(level)


# ---------------------------------------------------------------------------
# exact d = 1 local-time sampler

@dataclass(frozen=True, eq=False)
class LocalTimeBatch:
    """Local-time fields of many independent walks, in flattened form.

    ``counts[i]`` is the local time of one visited site of walk
    ``sample[i]``; sites with zero local time are omitted.  ``hit`` marks
    walks that reached the target within the budget; ``truncated`` marks
    walks whose local-time profile was cut short (their recorded counts are
    a subset of the true ones, so product weights are upper bounds).
    """

    sample: np.ndarray
    counts: np.ndarray
    n_samples: int
    hit: np.ndarray
    truncated: Optional[np.ndarray] = None

    def log_weights(self, log_L: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """sum_z log L(ell_z) per walk; -inf for walks that missed the target."""
        out = np.bincount(self.sample, weights=log_L(self.counts), minlength=self.n_samples)
        return np.where(self.hit, out, -np.inf)

    @property
    def capped_fraction(self) -> float:
        return float(1.0 - self.hit.mean()) if self.n_samples else 0.0

    @property
    def truncated_fraction(self) -> float:
        return 0.0 if self.truncated is None else float(self.truncated.mean())


def default_depth(n: int) -> int:
    return max(4096, 64 * n)


def sample_local_times_1d(n: int, samples: int, rng: np.random.Generator,
                          max_depth: Optional[int] = None) -> LocalTimeBatch:
    """Local times ell_z(H(n)) of the d=1 walk from 0, sampled exactly.

    Uses the edge-crossing representation: with u_z the number of up-steps
    from z before H(n), the number of down-steps from z is negative binomial
    NB(u_z, 1/2) given u_z, u_{n-1} = 1, and the up-steps from z-1 equal the
    down-steps from z (plus one while z-1 >= 0).  Then ell_z = up + down steps
    from z.  The walk hits n almost surely in d=1, so nothing is capped.

    Below the origin the profile is a critical branching chain whose
    lifetime has a 1/t tail; it is followed for at most ``max_depth`` sites
    and longer excursions are flagged in ``truncated``.
    """
    if n < 1:
        raise DomainError("target must be a positive integer")
    max_depth = default_depth(n) if max_depth is None else int(max_depth)
    k = np.ones(samples, dtype=np.int64)
    idx = np.arange(samples)
    sample_parts, count_parts = [], []
    for z in range(n - 1, -1, -1):
        down = rng.negative_binomial(k, 0.5)
        sample_parts.append(idx)
        count_parts.append(k + down)
        k = down + 1 if z >= 1 else down
    alive = k > 0
    idx, k = idx[alive], k[alive]
    depth = 0
    while idx.size and depth < max_depth:
        down = rng.negative_binomial(k, 0.5)
        sample_parts.append(idx)
        count_parts.append(k + down)
        alive = down > 0
        idx, k = idx[alive], down[alive]
        depth += 1
    truncated = np.zeros(samples, dtype=bool)
    truncated[idx] = True
    return LocalTimeBatch(np.concatenate(sample_parts), np.concatenate(count_parts), samples,
                          np.ones(samples, dtype=bool), truncated)


def local_times_from_traces(traces: List[WalkTrace]) -> LocalTimeBatch:
    """Flatten ell_z(H) over traces; capped traces are marked as misses."""
    sample_parts, count_parts = [], []
    hit = np.zeros(len(traces), dtype=bool)
    for i, tr in enumerate(traces):
        if tr.hit_index is None:
            continue
        hit[i] = True
        if tr.hit_index == 0:
            continue
        _, cnt = np.unique(tr.steps[: tr.hit_index], axis=0, return_counts=True)
        sample_parts.append(np.full(cnt.size, i))
        count_parts.append(cnt)
    if sample_parts:
        s, c = np.concatenate(sample_parts), np.concatenate(count_parts)
    else:
        s, c = np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return LocalTimeBatch(s, c, len(traces), hit)


def hit_first_frequency(n: int, m: int, walks: int, seed) -> tuple:
    """Monte Carlo P^0(H(n) < H(-m)) in d=1, vectorised over walks.

    Returns (frequency, standard error).
    """
    if n < 1 or m < 1:
        raise DomainError("n and m must be >= 1")
    rng = np.random.default_rng(seed)
    pos = np.zeros(walks, dtype=np.int64)
    active = np.ones(walks, dtype=bool)
    won = np.zeros(walks, dtype=bool)
    while active.any():
        ia = np.flatnonzero(active)
        pos[ia] += 2 * rng.integers(0, 2, size=ia.size) - 1
        up = pos[ia] >= n
        down = pos[ia] <= -m
        won[ia[up]] = True
        active[ia[up | down]] = False
    p = won.mean()
    return float(p), float(np.sqrt(p * (1 - p) / walks))
