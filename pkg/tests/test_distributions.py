import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from rwpot.distributions import (Atomic, Exponential, PointMass, Shifted, Uniform, dominance_witness,
                                 evaluate_cdf, generic_laplace, generic_pseudo_inverse,
                                 laplace_transform, log_laplace_transform, pseudo_inverse,
                                 quantile_gap_measure, shift_by, strictly_dominates,
                                 witness_violations)
from rwpot.errors import DomainError, PreconditionError

BERN = Atomic((0, 1), (0.5, 0.5))
F_PAIR = Atomic((0, 1), (0.3, 0.7))
G_PAIR = Atomic((0, 1), (0.6, 0.4))


def test_cdf_examples():
    assert evaluate_cdf(Exponential(1), math.log(2)) == pytest.approx(0.5, abs=1e-15)
    assert evaluate_cdf(BERN, 0.3) == 0.5
    assert evaluate_cdf(PointMass(0), 0.0) == 1.0
    assert evaluate_cdf(Exponential(1), -1.0) == 0.0


def test_pseudo_inverse_examples():
    assert pseudo_inverse(Exponential(1), 0.5) == pytest.approx(math.log(2), abs=1e-15)
    assert pseudo_inverse(BERN, 0.5) == 0.0
    assert pseudo_inverse(BERN, 0.6) == 1.0
    for s in (1e-9, 0.3, 0.999):
        assert pseudo_inverse(PointMass(0), s) == 0.0


@pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.5])
def test_pseudo_inverse_domain(s):
    with pytest.raises(DomainError):
        pseudo_inverse(BERN, s)


def test_generic_pseudo_inverse_matches_closed_forms():
    for spec in (Exponential(2.0), Uniform(0.5, 3.0), BERN):
        for s in (0.1, 0.5, 0.77):
            assert generic_pseudo_inverse(spec, s) == pytest.approx(float(pseudo_inverse(spec, s)), abs=1e-9)


def test_laplace_examples():
    for spec in (BERN, Exponential(1), Uniform(0, 2), PointMass(0.3), shift_by(BERN, 0.4)):
        assert laplace_transform(spec, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert laplace_transform(Exponential(1), 1.0) == pytest.approx(0.5, abs=1e-15)
    assert laplace_transform(BERN, 1.0) == pytest.approx(0.683940, abs=1e-6)


def test_laplace_closed_forms_match_quadrature():
    for spec in (Exponential(1.5), Uniform(0.2, 1.7), shift_by(Exponential(1), 0.3)):
        for k in (0.5, 1.0, 3.0):
            assert float(laplace_transform(spec, k)) == pytest.approx(generic_laplace(spec, k), rel=1e-9)


def test_log_laplace_no_underflow():
    # exp(-2000) underflows; the log-domain forms stay exact
    assert log_laplace_transform(PointMass(1.0), 2000.0) == pytest.approx(-2000.0)
    assert log_laplace_transform(BERN, 2000.0) == pytest.approx(math.log(0.5), abs=1e-12)
    assert log_laplace_transform(shift_by(BERN, 1.0), 2000.0) == pytest.approx(-2000 + math.log(0.5))
    u = Uniform(1.0, 2.0)
    k = 800.0
    assert log_laplace_transform(u, k) == pytest.approx(-k + math.log(-math.expm1(-k)) - math.log(k), rel=1e-12)


def test_laplace_limit_is_F0():
    assert float(laplace_transform(BERN, 60.0)) == pytest.approx(0.5, abs=1e-12)
    assert float(laplace_transform(Exponential(1), 1e9)) < 1e-8


def test_dominance_examples():
    assert strictly_dominates(PointMass(1), PointMass(0))
    assert not strictly_dominates(Exponential(1), Exponential(1))
    assert strictly_dominates(F_PAIR, G_PAIR)
    assert not strictly_dominates(G_PAIR, F_PAIR)
    assert strictly_dominates(Exponential(0.5), Exponential(1.0))
    assert strictly_dominates(shift_by(Uniform(0, 1), 0.1), Uniform(0, 1))


def test_witness_point_masses():
    w = dominance_witness(PointMass(1), PointMass(0))
    assert (w.t_prime, w.epsilon, w.eta0) == (0.0, 0.5, 0.5)
    assert w.h_lo == pytest.approx(1 / 3) and w.h_hi == pytest.approx(2 / 3)
    assert witness_violations(PointMass(1), PointMass(0), w) == 0


def test_witness_bernoulli_pair():
    w = dominance_witness(F_PAIR, G_PAIR)
    assert w.t_prime == 0.0
    assert w.epsilon == pytest.approx(0.15)
    assert w.eta0 == 0.5
    assert w.h_lo == pytest.approx(0.4) and w.h_hi == pytest.approx(0.5)
    assert witness_violations(F_PAIR, G_PAIR, w) == 0


def test_witness_requires_dominance():
    with pytest.raises(PreconditionError):
        dominance_witness(BERN, BERN)


def test_shift_examples():
    s = shift_by(PointMass(0), 0.7)
    assert s.is_deterministic and float(s.atoms()[0][0]) == 0.7
    grid = np.linspace(0, 5, 101)
    e = Exponential(1.3)
    assert np.array_equal(shift_by(e, 0.0).cdf(grid), e.cdf(grid))
    with pytest.raises(DomainError):
        shift_by(e, -0.1)


def test_quantile_gap_measure_dominates_h():
    for F, G in ((F_PAIR, G_PAIR), (PointMass(1), PointMass(0)), (Exponential(0.5), Exponential(1.0))):
        w = dominance_witness(F, G)
        assert quantile_gap_measure(F, G, w.eta0) >= w.h_measure - 1e-4


def test_atomic_validation():
    with pytest.raises(DomainError):
        Atomic((0, 1), (0.5, 0.6))
    with pytest.raises(DomainError):
        Atomic((1, 0), (0.5, 0.5))
    with pytest.raises(DomainError):
        Atomic((-1, 0), (0.5, 0.5))


# ---------------------------------------------------------------------------
# properties

@st.composite
def atomic_specs(draw, max_atoms=4):
    k = draw(st.integers(1, max_atoms))
    vals = sorted(draw(st.sets(st.integers(0, 20), min_size=k, max_size=k)))
    w = np.asarray(draw(st.lists(st.integers(1, 20), min_size=k, max_size=k)), dtype=float)
    p = w / w.sum()
    p[-1] = 1.0 - p[:-1].sum()
    return Atomic(tuple(v / 4 for v in vals), tuple(p))


continuous_specs = st.one_of(
    st.floats(0.2, 5.0).map(Exponential),
    st.tuples(st.floats(0, 2), st.floats(0.05, 3)).map(lambda t: Uniform(t[0], t[0] + t[1])),
)
any_spec = st.one_of(atomic_specs(), continuous_specs,
                     st.tuples(continuous_specs, st.floats(0, 2)).map(lambda t: Shifted(*t)))
probs = st.floats(1e-6, 1 - 1e-6)


@settings(max_examples=200, deadline=None)
@given(atomic_specs(), probs)
def test_round_trip_atomic(spec, s):
    assert evaluate_cdf(spec, pseudo_inverse(spec, s)) >= s - 1e-12


@settings(max_examples=150, deadline=None)
@given(any_spec, st.floats(0, 3))
def test_anti_monotone_inversion(G, lam):
    # F = G shifted up is dominated pointwise: F <= G on every grid t
    F = shift_by(G, lam)
    s = np.linspace(0.01, 0.99, 99)
    assert np.all(pseudo_inverse(F, s) >= pseudo_inverse(G, s) - 1e-12)


@settings(max_examples=100, deadline=None)
@given(atomic_specs(), atomic_specs())
def test_anti_monotone_inversion_atomic_pairs(F, G):
    grid = np.union1d(F.atoms()[0], G.atoms()[0])
    if np.all(F.cdf(grid) <= G.cdf(grid)):
        s = np.linspace(0.005, 0.995, 199)
        assert np.all(pseudo_inverse(F, s) >= pseudo_inverse(G, s))


@settings(max_examples=150, deadline=None)
@given(any_spec)
def test_laplace_strictly_decreasing(spec):
    k = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0])
    L = np.asarray(laplace_transform(spec, k), dtype=float)
    if spec.is_deterministic and float(spec.atoms()[0][0]) == 0.0:
        assert np.all(L == 1.0)
    else:
        assert np.all(np.diff(L) < 0)
        assert L[-1] >= float(spec.cdf(0.0)) - 1e-15


@settings(max_examples=60, deadline=None)
@given(atomic_specs(), st.floats(0.05, 2.0))
@example(Atomic((2.0,), (1.0,)), 0.05)   # shifted atom rounds below its own jump
def test_witness_zero_violations(G, lam):
    F = shift_by(G, lam)
    w = dominance_witness(F, G)
    assert witness_violations(F, G, w, 10_000) == 0
    assert 0 < w.h_lo < w.h_hi < 1
