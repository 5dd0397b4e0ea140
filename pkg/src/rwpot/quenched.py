"""Two-point function e(x, y, omega) on truncated boxes, quenched travel
costs a = -log e, and Monte Carlo estimates of the quenched exponent.

e solves e(y) = 1 and, for x != y,

    e(x) = exp(-omega(x)) / (2d) * sum_{|x' - x|_1 = 1} e(x'),

with e = 0 outside the box (absorbing boundary).  The absorbing boundary
only removes paths, so every finite-box value is a lower bound for the
infinite-volume one and increases with the box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .distributions import DistributionSpec, laplace_transform
from .errors import DomainError, ModelAssumptionError, NumericError
from .fields import (Box, PotentialField, realize, realize_rows, replica_seed,
                     sample_uniform_field)

RESIDUAL_TOL = 1e-10
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class TruncatedDomain:
    """Box containing source and target, with the margin it was built with."""

    box: Box
    margin: int

    @property
    def d(self) -> int:
        return self.box.d

    @classmethod
    def around(cls, x, y, margin: int) -> "TruncatedDomain":
        if margin < 1:
            raise DomainError("margin must be >= 1")
        return cls(Box.around([_site(x), _site(y)], margin), int(margin))

    def enlarged(self, factor: int = 2) -> "TruncatedDomain":
        extra = (factor - 1) * self.margin
        lo = tuple(a - extra for a in self.box.lo)
        hi = tuple(b + extra for b in self.box.hi)
        return TruncatedDomain(Box(lo, hi), factor * self.margin)


def _site(z) -> tuple:
    return tuple(int(v) for v in np.atleast_1d(z))


def default_margin(x, y) -> int:
    """L = 2n with n the l1 distance between the endpoints (at least 1)."""
    return max(1, 2 * int(np.abs(np.subtract(_site(y), _site(x))).sum()))


def exterior_ratio(lam: float) -> float:
    """E^0[s^{H(1)}] = (1 - sqrt(1 - s^2)) / s for s = exp(-lam), d = 1.

    The e-ratio e(x)/e(x+1) to the left of the target in a constant
    potential lam; used to close a d=1 box exactly when the potential
    outside the box is the constant lam.
    """
    if lam < 0:
        raise DomainError("potential must be nonnegative")
    if lam == 0:
        return 1.0
    s = math.exp(-lam)
    # (1 - sqrt(1 - s^2)) / s written without cancellation
    return s / (1.0 + math.sqrt(-math.expm1(-2.0 * lam)))


@dataclass(frozen=True, eq=False)
class ESolution:
    """Values of e(., y, omega) over ``box``; ``log_values`` avoids underflow."""

    box: Box
    y: tuple
    log_values: np.ndarray
    residual: float

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    def __getitem__(self, site) -> float:
        return float(np.exp(self.log_values[self.box.index(site)]))

    def log_at(self, site) -> float:
        return float(self.log_values[self.box.index(site)])


# ---------------------------------------------------------------------------
# d = 1: ratio recursion in the log domain

def _log_ratios(omega_rows: np.ndarray, log_r0) -> np.ndarray:
    """log r_j for r_j = (c_j/2) / (1 - c_j r_{j-1}/2), c_j = exp(-omega_j).

    ``omega_rows`` has shape (batch, m); the recursion runs along axis 1
    starting from r_{-1} = exp(log_r0).  Every r lies in [0, 1] and the
    denominator in [1/2, 1], so the recursion is stable.
    """
    out = np.empty(omega_rows.shape)
    prev = np.broadcast_to(np.asarray(log_r0, dtype=float), omega_rows.shape[:1]).copy()
    log_half = -math.log(2.0)
    with np.errstate(under="ignore"):
        for j in range(omega_rows.shape[1]):
            lc = -omega_rows[:, j] + log_half
            prev = lc - np.log1p(-np.exp(lc + prev))
            out[:, j] = prev
    return out


def log_e_1d(omega_rows: np.ndarray, iy: int, exterior: Optional[float] = None) -> np.ndarray:
    """log e(., y) for a batch of d=1 potentials on a common interval.

    ``iy`` is the array index of y.  ``exterior`` is the constant potential
    assumed outside the interval (``None`` means absorbing).
    """
    omega_rows = np.atleast_2d(np.asarray(omega_rows, dtype=float))
    b, m = omega_rows.shape
    log_r0 = -np.inf if exterior is None else math.log(exterior_ratio(exterior))
    out = np.zeros((b, m))
    if iy > 0:
        # left side, ratios e(x)/e(x+1), recursion from the left end
        lr = _log_ratios(omega_rows[:, :iy], log_r0)
        out[:, :iy] = np.cumsum(lr[:, ::-1], axis=1)[:, ::-1]
    if iy < m - 1:
        lr = _log_ratios(omega_rows[:, iy + 1:][:, ::-1], log_r0)
        out[:, iy + 1:] = np.cumsum(lr[:, ::-1], axis=1)
    return out


def solve_e(omega: PotentialField, y, domain: Optional[TruncatedDomain] = None,
            exterior: Optional[float] = None) -> ESolution:
    """Solve for e(., y, omega) on ``domain`` (default: the field's box).

    Parameters
    ----------
    omega : PotentialField
        Must cover the domain box.
    y : site
        Target; must lie strictly inside the box.
    exterior : float, optional
        d=1 only.  Constant potential outside the box; the box is then closed
        exactly instead of absorbing.  Used for deterministic potentials.
    """
    box = omega.box if domain is None else domain.box
    y = _site(y)
    if len(y) != box.d:
        raise DomainError("target dimension does not match the domain")
    if not box.interior(y):
        raise DomainError(f"target {y} must lie strictly inside the box {box.lo}..{box.hi}")
    om = omega.box.subarray(omega.values, box) if box != omega.box else omega.values
    y_idx = box.index(y)
    if box.d == 1:
        if exterior is not None and exterior < 0:
            raise DomainError("exterior potential must be nonnegative")
        le = log_e_1d(om[None, :], y_idx[0], exterior)[0]
        with np.errstate(under="ignore"):
            v = np.exp(le)
        r_ext = 0.0 if exterior is None else exterior_ratio(exterior)
        pad = np.concatenate([[r_ext * v[0]], v, [r_ext * v[-1]]])
        r = v - np.exp(-om) / 2 * (pad[:-2] + pad[2:])
        r[y_idx[0]] = v[y_idx[0]] - 1.0
        res = float(np.max(np.abs(r)))
        if res > RESIDUAL_TOL:
            raise NumericError(f"d=1 recursion residual {res:.3e}", residual=res)
        return ESolution(box, y, le, res)
    if exterior is not None:
        raise DomainError("exterior closure is only available in d=1")
    return _solve_sparse(om, box, y, y_idx)


def _solve_sparse(om: np.ndarray, box: Box, y: tuple, y_idx: tuple) -> ESolution:
    d = box.d
    shape = box.shape
    size = box.size
    idx = np.arange(size).reshape(shape)
    coef = np.exp(-om).ravel() / (2 * d)
    rows, cols, vals = [np.arange(size)], [np.arange(size)], [np.ones(size)]
    for ax in range(d):
        for s in (-1, 1):
            src = [slice(None)] * d
            dst = [slice(None)] * d
            if s == 1:
                src[ax], dst[ax] = slice(0, -1), slice(1, None)
            else:
                src[ax], dst[ax] = slice(1, None), slice(0, -1)
            a = idx[tuple(src)].ravel()
            b = idx[tuple(dst)].ravel()
            rows.append(a)
            cols.append(b)
            vals.append(-coef[a])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    iy = int(idx[y_idx])
    keep = rows != iy
    rows = np.concatenate([rows[keep], [iy]])
    cols = np.concatenate([cols[keep], [iy]])
    vals = np.concatenate([vals[keep], [1.0]])
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(size, size))
    rhs = np.zeros(size)
    rhs[iy] = 1.0
    sol = splinalg.spsolve(A, rhs)
    res = float(np.max(np.abs(A @ sol - rhs)))
    if not np.all(np.isfinite(sol)) or res > RESIDUAL_TOL:
        raise NumericError(f"sparse solve residual {res:.3e}", residual=res)
    sol = np.clip(sol, 0.0, 1.0).reshape(shape)
    with np.errstate(divide="ignore"):
        le = np.log(sol)
    return ESolution(box, y, le, res)


# ---------------------------------------------------------------------------
# costs

@dataclass
class CostEstimate:
    """A cost (nats) with its standard error and diagnostics.

    ``truncation_diag`` holds the value at margins (L, 2L); either entry is
    ``None`` when not computed.  ``checks`` collects named boolean invariant
    checks.
    """

    value: float
    std_error: float = 0.0
    n_samples: int = 1
    truncation_diag: tuple = (None, None)
    capped_fraction: float = 0.0
    infinite: bool = False
    n: Optional[int] = None
    checks: dict = field(default_factory=dict)
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def within(self, target: float, k: float = 3.0, tol: float = 0.0) -> bool:
        return abs(self.value - target) <= k * self.std_error + tol


def travel_cost_quenched(omega: PotentialField, x, y, domain: Optional[TruncatedDomain] = None,
                         exterior: Optional[float] = None) -> CostEstimate:
    """a(x, y, omega) = -log e(x, y, omega).

    With the default domain the margin is L = 2|y - x|_1.  When the field
    covers the 2L box, the 2L value is also solved and reported.
    """
    x, y = _site(x), _site(y)
    if x == y:
        return CostEstimate(0.0, truncation_diag=(0.0, 0.0))
    if domain is None:
        domain = TruncatedDomain.around(x, y, default_margin(x, y))
    vals = []
    for dom in (domain, domain.enlarged(2)):
        if not omega.box.covers(dom.box):
            vals.append(None)
            continue
        vals.append(-solve_e(omega, y, dom, exterior).log_at(x))
    a = vals[0]
    infinite = (not math.isfinite(a)) or a > -math.log(UNDERFLOW) and omega.box.d >= 2
    return CostEstimate(math.inf if infinite else a, truncation_diag=tuple(vals), infinite=infinite)


# ---------------------------------------------------------------------------
# quenched exponent

def _direction(x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if not np.any(x):
        raise DomainError("direction must be nonzero")
    return x


def check_model_assumption(phi: DistributionSpec, d: int) -> None:
    if d == 1 and not math.isfinite(phi.mean()):
        raise ModelAssumptionError(
            "d=1 requires a finite mean potential; otherwise a(0, nx)/n diverges")


def alpha_bounds(phi: DistributionSpec, d: int) -> tuple:
    """(-log L(1), log 2d + E[omega]): per-unit bounds on the quenched exponent."""
    return -math.log(float(laplace_transform(phi, 1.0))), math.log(2 * d) + phi.mean()


def quenched_cost_samples(phi: DistributionSpec, x, n: int, samples: int, seed: int,
                          margin: Optional[int] = None) -> tuple:
    """Per-sample a(0, nx, omega) at margins L and 2L.

    Sample i uses the field keyed by ``replica_seed(seed, i)`` so that the same
    environment is reused across n.  Returns two arrays (L, 2L).
    """
    x = _direction(x)
    d = x.size
    target = tuple(int(v) for v in n * x)
    origin = (0,) * d
    L = default_margin(origin, target) if margin is None else int(margin)
    dom = TruncatedDomain.around(origin, target, L)
    dom2 = dom.enlarged(2)
    ext = float(phi.atoms()[0][0]) if (phi.is_deterministic and d == 1) else None
    if phi.is_deterministic:
        # every realisation is the same field
        fld = PotentialField(dom2.box, np.full(dom2.box.shape, float(phi.atoms()[0][0])))
        c = travel_cost_quenched(fld, origin, target, dom, ext)
        return np.full(samples, c.truncation_diag[0]), np.full(samples, c.truncation_diag[1])
    if d == 1:
        rows = realize_rows(phi, dom2.box, [replica_seed(seed, i) for i in range(samples)])
        iy2 = target[0] - dom2.box.lo[0]
        off = dom.box.lo[0] - dom2.box.lo[0]
        i0 = -dom2.box.lo[0]
        a2 = -log_e_1d(rows, iy2)[:, i0]
        a1 = -log_e_1d(rows[:, off:off + dom.box.size], iy2 - off)[:, i0 - off]
        return a1, a2
    a1 = np.empty(samples)
    a2 = np.empty(samples)
    for i in range(samples):
        fld = realize(sample_uniform_field(dom2.box, replica_seed(seed, i)), phi)
        c = travel_cost_quenched(fld, origin, target, dom)
        a1[i], a2[i] = c.truncation_diag
    return a1, a2


def alpha_estimate(phi: DistributionSpec, x, n_list: Sequence[int], samples: int, seed: int,
                   margin: Optional[int] = None) -> list:
    """Estimates of a(0, nx, omega)/n for each n, with the bound checks.

    Each entry's value is the sample mean at margin L; ``truncation_diag``
    holds the per-unit means at (L, 2L).  ``checks`` records whether
    -log L(1) <= value/|x|_1 <= log 2d + E[omega] holds within 3 standard
    errors.
    """
    x = _direction(x)
    d = x.size
    check_model_assumption(phi, d)
    norm = float(np.abs(x).sum())
    lo, hi = alpha_bounds(phi, d)
    out = []
    for n in n_list:
        if n < 1:
            raise DomainError("n must be >= 1")
        a1, a2 = quenched_cost_samples(phi, x, n, samples, seed, margin)
        per1, per2 = a1 / n, a2 / n
        inf_frac = float(np.mean(~np.isfinite(per1)))
        m = float(np.mean(per1))
        se = float(np.std(per1, ddof=1) / math.sqrt(samples)) if samples > 1 and not phi.is_deterministic else 0.0
        if not math.isfinite(se):
            se = math.inf
        unit = m / norm
        checks = {
            "sandwich_lower": unit >= lo - 3 * se / norm - 1e-12,
            "sandwich_upper": unit <= hi + 3 * se / norm + 1e-12,
        }
        out.append(CostEstimate(m, se, samples, (m, float(np.mean(per2))), 0.0,
                                inf_frac > 0, n, checks, per1))
    return out
