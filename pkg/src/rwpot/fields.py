"""Coupled potential fields omega_phi(x) = phi^{-1}(U(x)) over lattice boxes.

The uniform field is counter-based: the value at a site is a hash of
(seed, coordinates), so enlarging a box never changes values already drawn
and the result does not depend on enumeration order or worker count.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distributions import DistributionSpec, pseudo_inverse
from .errors import CouplingViolation, DomainError

GENERATOR_ID = "splitmix64-chain-v1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    # splitmix64 finaliser; uint64 arithmetic wraps by design
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def keyed_uniforms(seed, coords) -> np.ndarray:
    """Uniforms in (0, 1), one per row of ``coords`` (shape (n, d)).

    ``seed`` may be an array of seeds; the result then has shape
    (len(seed), n) and row i equals ``keyed_uniforms(seed[i], coords)``.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    seeds = np.asarray([int(v) & 0xFFFFFFFFFFFFFFFF for v in np.atleast_1d(seed)], dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = np.broadcast_to(_mix(seeds + _GOLDEN)[:, None], (seeds.size, coords.shape[0])).copy()
        if np.ndim(seed) == 0:
            h = h[0]
        for j in range(coords.shape[1]):
            c = np.ascontiguousarray(coords[:, j]).view(np.uint64)
            h = _mix(h ^ (c + _GOLDEN * np.uint64(j + 1)))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def replica_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for replica ``keys`` of a run seeded by ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Box:
    """Integer box ``prod_i [lo_i, hi_i]`` (inclusive)."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(int(v) for v in np.atleast_1d(self.lo))
        hi = tuple(int(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise DomainError(f"invalid box {lo}..{hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def around(cls, points, margin: int) -> "Box":
        """Bounding box of ``points`` inflated by ``margin`` sites per face."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        return cls(tuple(pts.min(axis=0) - margin), tuple(pts.max(axis=0) + margin))

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def sites(self) -> np.ndarray:
        """All sites in C order, shape (size, d)."""
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts))
        return np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=1)

    def index(self, site) -> tuple:
        """Array index of ``site`` inside this box."""
        site = tuple(int(v) for v in np.atleast_1d(site))
        if not self.contains(site)[0]:
            raise DomainError(f"site {site} outside box {self.lo}..{self.hi}")
        return tuple(s - a for s, a in zip(site, self.lo))

    def interior(self, site) -> bool:
        site = np.atleast_1d(site)
        return bool(np.all(site > np.asarray(self.lo)) and np.all(site < np.asarray(self.hi)))

    def covers(self, other: "Box") -> bool:
        return all(a <= c for a, c in zip(self.lo, other.lo)) and all(b >= e for b, e in zip(self.hi, other.hi))

    def subarray(self, values: np.ndarray, other: "Box") -> np.ndarray:
        """Restrict ``values`` (over self) to the sub-box ``other``."""
        if not self.covers(other):
            raise DomainError("requested box is not covered")
        sl = tuple(slice(c - a, e - a + 1) for a, c, e in zip(self.lo, other.lo, other.hi))
        return values[sl]


@dataclass(frozen=True, eq=False)
class UniformField:
    box: Box
    values: np.ndarray
    seed: int
    generator: str = GENERATOR_ID


@dataclass(frozen=True, eq=False)
class PotentialField:
    box: Box
    values: np.ndarray
    spec: Optional[DistributionSpec] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.values.shape != self.box.shape:
            raise DomainError(f"values of shape {self.values.shape} do not match box {self.box.shape}")
        if np.any(self.values < 0) or np.any(np.isnan(self.values)):
            raise DomainError("potential values must be nonnegative")

    @property
    def spec_id(self) -> Optional[str]:
        return None if self.spec is None else self.spec.spec_id

    def at(self, site) -> float:
        return float(self.values[self.box.index(site)])

    def restrict(self, box: Box) -> "PotentialField":
        return PotentialField(box, self.box.subarray(self.values, box), self.spec, self.seed)


def sample_uniform_field(domain, seed: int) -> UniformField:
    """i.i.d. uniforms over ``domain`` (a :class:`Box`) keyed by (seed, site)."""
    if not isinstance(domain, Box):
        raise DomainError("domain must be a Box")
    if domain.size == 0:
        raise DomainError("empty domain")
    u = keyed_uniforms(seed, domain.sites()).reshape(domain.shape)
    return UniformField(domain, u, int(seed))


def realize(U: UniformField, spec: DistributionSpec) -> PotentialField:
    """Apply the pseudo-inverse of ``spec`` sitewise."""
    return PotentialField(U.box, np.asarray(pseudo_inverse(spec, U.values), dtype=float).reshape(U.box.shape),
                          spec, U.seed)


def constant_field(box: Box, value: float) -> PotentialField:
    return PotentialField(box, np.full(box.shape, float(value)))


def delta_field(omega_F: PotentialField, omega_G: PotentialField) -> PotentialField:
    if omega_F.box != omega_G.box:
        raise DomainError("fields live on different boxes")
    diff = omega_F.values - omega_G.values
    if np.any(diff < 0):
        n_bad = int(np.count_nonzero(diff < 0))
        raise CouplingViolation(f"omega_F < omega_G at {n_bad} sites (F not <= G, or uniforms differ)")
    return PotentialField(omega_F.box, diff)


# ---------------------------------------------------------------------------
# text snapshots: header lines start with '#', then "x_1 ... x_d value"

def write_field(path, fld: PotentialField, seed: Optional[int] = None) -> None:
    seed = fld.seed if seed is None else seed
    with open(path, "w") as fh:
        fh.write(f"# d {fld.box.d}\n")
        fh.write("# lo " + " ".join(map(str, fld.box.lo)) + "\n")
        fh.write("# hi " + " ".join(map(str, fld.box.hi)) + "\n")
        fh.write(f"# seed {'' if seed is None else seed}\n")
        fh.write(f"# spec {fld.spec_id or ''}\n")
        for site, v in zip(fld.box.sites(), fld.values.ravel()):
            fh.write(" ".join(map(str, site)) + f" {float(v)!r}\n")


def read_field(path) -> PotentialField:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, rest = line[1:].strip().partition(" ")
                header[key] = rest.strip()
            elif line.strip():
                rows.append(line.split())
    d = int(header["d"])
    box = Box(tuple(int(v) for v in header["lo"].split()), tuple(int(v) for v in header["hi"].split()))
    values = np.empty(box.shape)
    for r in rows:
        values[box.index([int(v) for v in r[:d]])] = float(r[d])
    seed = int(header["seed"]) if header.get("seed") else None
    return PotentialField(box, values, None, seed)


def coupled_pair(box: Box, seed: int, F: DistributionSpec, G: DistributionSpec, *, U: Optional[UniformField] = None):
    """(omega_F, omega_G) realised from one shared uniform field."""
    U = sample_uniform_field(box, seed) if U is None else U
    return realize(U, F), realize(U, G)


def realize_rows(spec: DistributionSpec, box: Box, seeds) -> np.ndarray:
    """Flattened realisations over ``box`` for many seeds, shape (len(seeds), size).

    Row i equals ``realize(sample_uniform_field(box, seeds[i]), spec).values.ravel()``.
    """
    u = keyed_uniforms(np.asarray(seeds, dtype=object), box.sites())
    return np.asarray(pseudo_inverse(spec, u), dtype=float).reshape(len(seeds), box.size)


def realize_many(specs: Sequence[DistributionSpec], box: Box, seed: int):
    U = sample_uniform_field(box, seed)
    return [realize(U, s) for s in specs]
