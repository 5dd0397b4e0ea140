import math

import numpy as np
import pytest

from rwpot.annealed import (b_potential_mc, b_walk_mc, beta_bounds, beta_upper_sequence,
                            sample_local_times)
from rwpot.distributions import Atomic, Exponential, PointMass, shift_by
from rwpot.errors import DomainError
from rwpot.quenched import alpha_estimate

LN2 = math.log(2)
A01 = -math.log(2 - math.sqrt(3))
BERN = Atomic((0, 1), (0.5, 0.5))


def test_zero_potential_b_is_zero():
    e = b_walk_mc(PointMass(0), 5, 2000, seed=1)
    assert e.value == 0.0 and e.capped_fraction == 0.0


def test_zero_potential_d2_capped_fraction_accounts():
    e = b_walk_mc(PointMass(0), (2, 0), 500, seed=1)
    assert e.value == pytest.approx(-math.log(1 - e.capped_fraction), abs=1e-12)


def test_point_mass_ln2_closed_form():
    assert b_potential_mc(PointMass(LN2), 1, 1).value == pytest.approx(A01, abs=1e-9)
    # walk estimator: E[2^{-H}] = 2 - sqrt 3, noisy
    e = b_walk_mc(PointMass(LN2), 1, 50_000, seed=2)
    assert e.within(A01)


def test_estimators_agree_y4():
    a = b_walk_mc(BERN, 4, 20_000, seed=11)
    b = b_potential_mc(BERN, 4, 20_000, seed=12)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)


def test_deterministic_potential_mc_is_single_solve():
    e1 = b_potential_mc(PointMass(0.4), 3, 1)
    e5 = b_potential_mc(PointMass(0.4), 3, 5)
    assert e1.value == pytest.approx(e5.value, abs=1e-13) and e5.std_error < 1e-12


def test_beta_sequence_point_masses():
    s0 = beta_upper_sequence(PointMass(0), 1, [4, 8], 100, seed=0)
    assert all(e.value == 0.0 for e in s0.entries)
    s = beta_upper_sequence(PointMass(LN2), 1, [1, 2, 4], 1, estimator="potential_mc")
    for e, n in zip(s.entries, (1, 2, 4)):
        assert e.value == pytest.approx(A01, abs=1e-9)


def test_running_min_is_monotone():
    s = beta_upper_sequence(BERN, 1, [4, 8, 16], 4000, seed=3)
    vals = [v for v, _ in s.running_min]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert s.estimate == s.running_min[-1]


def test_shared_batch_gives_many_laws():
    batch = sample_local_times(6, 3000, 9)
    lams = [0.0, 0.5, 1.0]
    ests = b_walk_mc([shift_by(BERN, l) for l in lams], 6, 3000, batch=batch)
    vals = [e.value for e in ests]
    assert vals[0] < vals[1] < vals[2]
    # the shift adds at least lambda per step and n steps are needed
    assert vals[2] - vals[0] >= 6 * 1.0 - 1e-9


def test_crossing_sampler_flags_truncation():
    batch = sample_local_times(2, 20_000, 5)
    assert batch.truncated is not None and 0 <= batch.truncated_fraction < 0.02
    e = b_walk_mc(BERN, 2, 20_000, batch=batch)
    assert 0 <= e.bias_bound < 0.01


def test_bad_target():
    with pytest.raises(DomainError):
        b_walk_mc(BERN, 0, 10)


def test_monotone_coupling_potential_mc():
    F, G = Atomic((0, 1), (0.3, 0.7)), Atomic((0, 1), (0.6, 0.4))
    for y in (3, (2, 1)):
        eF = b_potential_mc(F, y, 300, seed=4)
        eG = b_potential_mc(G, y, 300, seed=4)
        assert eF.mean_e <= eG.mean_e


def test_triangle_inequality_on_estimates():
    b4 = b_walk_mc(BERN, 4, 20_000, seed=1)
    b8 = b_walk_mc(BERN, 8, 20_000, seed=2)
    assert b8.value <= 2 * b4.value + 3 * math.hypot(b8.std_error, 2 * b4.std_error)


@pytest.mark.parametrize("phi", [BERN, Exponential(2.0)])
def test_annealed_below_quenched(phi):
    (a,) = alpha_estimate(phi, 1, [16], 400, 7)
    s = beta_upper_sequence(phi, 1, [16], 20_000, seed=8)
    b = s.entries[0]
    assert b.value <= a.value + 3 * math.hypot(a.std_error, b.std_error)
    lo, hi = beta_bounds(phi, 1)
    assert lo - 3 * b.std_error <= b.value <= hi + 3 * b.std_error
