import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rwpot.distributions import Atomic, PointMass
from rwpot.errors import CoverageError, DomainError, NumericError
from rwpot.rates import (ANNEALED, QUENCHED, EstimatorConfig, LyapunovCurve, _fitted, concave_fit,
                         cramer_rate, endpoint_distribution, feasible_endpoint, km_speed, lambda_star,
                         ldp_dp_check, lyapunov_curve, rate_function)

BERN = Atomic((0, 1), (0.5, 0.5))


def _exact_zero_curve(x, mode=ANNEALED):
    # omega = 0 in d=1: beta(lambda, x) = |x| arccosh(e^lambda)
    lam = np.concatenate([[0.0], np.geomspace(1e-6, 12.0, 400)])
    return LyapunovCurve.from_points(lam, abs(x) * np.arccosh(np.exp(lam)), x=(x,), mode=mode,
                                     unit_upper=2 * math.log(2))


def test_rate_trivial_cases():
    assert rate_function(LyapunovCurve.from_points([0.0], [0.0], x=(0.0,))).value == 0.0
    r = rate_function(LyapunovCurve.from_points([0.0], [0.0], x=(1.5,)))
    assert r.value == math.inf and r.status == "infinite"
    assert rate_function(LyapunovCurve.from_points([0.0], [0.0], x=(1.0,))).status == "unknown"


def test_legendre_oracle_agrees_with_closed_form():
    for x in (0.2, 0.5, 0.8):
        assert oracles.legendre_log_cosh(x) == pytest.approx(float(cramer_rate(x)), abs=1e-9)


@pytest.mark.parametrize("x", [0.2, 0.5, 0.8])
def test_zero_potential_rate_is_cramer_exact_curve(x):
    r = rate_function(_exact_zero_curve(x))
    assert r.value == pytest.approx(oracles.legendre_log_cosh(x), abs=2e-3)


def test_zero_potential_rate_from_solver():
    curve = lyapunov_curve(PointMass(0), 0.5, None, ANNEALED)
    assert rate_function(curve).value == pytest.approx(0.1308, abs=0.02)
    assert lambda_star(curve) > 0


def test_coverage_error():
    c = LyapunovCurve.from_points([0.0, 0.1], [0.0, 0.2], x=(0.5,), unit_upper=1.0)
    with pytest.raises(CoverageError):
        rate_function(c)


def test_lambda_star_synthetic():
    c = LyapunovCurve.from_points([0, 1, 2, 3], [0, 2, 2.5, 3.0])
    assert lambda_star(c) == 1.0
    c2 = LyapunovCurve.from_points([0, 1, 2], [0, 0.5, 0.9])
    assert lambda_star(c2) == 0.0


def test_km_speed_examples():
    c = LyapunovCurve.from_points([0, 0.5, 1], [0, 1.0, 1.5], p_zero=0.5)
    assert km_speed(c).v == pytest.approx(0.5)
    assert km_speed(LyapunovCurve.from_points([0, 1], [0, 1], p_zero=1.0)).degenerate
    with pytest.raises(NumericError):
        km_speed(LyapunovCurve.from_points([0, 1], [1, 1], p_zero=0.5))


def test_ldp_binomial_exact():
    for n in (1, 5, 16):
        p = endpoint_distribution(np.zeros(2 * n + 1), n)
        assert np.max(np.abs(p - oracles.binomial_endpoint(n))) < 1e-12


def test_ldp_rate_n128():
    r = ldp_dp_check(0.0, 128, 0.5)
    assert abs(r.value - 0.1308) <= 0.15
    assert r.m == 64 and not r.adjusted


def test_ldp_central_and_parity():
    vals = [ldp_dp_check(0.0, n, 0.0).value for n in (16, 64, 256)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert feasible_endpoint(5, 0.5) == (3, True)
    with pytest.raises(DomainError):
        ldp_dp_check(0.0, 10, 1.0)


def test_ldp_annealed_smoke():
    r = ldp_dp_check(BERN, 32, 0.25, ANNEALED, samples=20, seed=1)
    assert r.value > 0 and math.isfinite(r.numerator_rate)


def test_curve_shape_checks():
    good = _exact_zero_curve(0.5)
    assert good.check_shape() == []
    bad = LyapunovCurve.from_points([0, 1, 2], [0, 0.1, 0.2], x=(0.5,))
    assert "curve rises slower than slope |x|_1" in bad.check_shape()
    dec = LyapunovCurve.from_points([0, 1, 2], [0, 1.0, 0.5], x=(0.5,))
    assert "curve decreases beyond noise" in dec.check_shape()


def test_quenched_dominates_annealed_rate():
    cfg = EstimatorConfig(n_list=(8, 16), samples=300, seed=2)
    grid = np.concatenate([[0.0], np.geomspace(1e-3, 6.0, 12)])
    cq = lyapunov_curve(BERN, 0.5, grid, QUENCHED, cfg)
    ca = lyapunov_curve(BERN, 0.5, grid, ANNEALED, EstimatorConfig(n_list=(8, 16), samples=4000, seed=3))
    I, J = rate_function(cq), rate_function(ca)
    sig = float(np.max(cq.stderrs) + np.max(ca.stderrs))
    assert I.value >= J.value - 3 * sig


def test_scaling_in_x():
    base = _exact_zero_curve(0.25)
    scaled = base.scaled((0.5,))
    direct = _exact_zero_curve(0.5)
    assert rate_function(scaled).value == pytest.approx(rate_function(direct).value, abs=1e-9)


# ---------------------------------------------------------------------------
# properties

@st.composite
def noisy_concave(draw):
    k = draw(st.integers(3, 12))
    lam = np.cumsum(draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k)))
    lam = np.concatenate([[0.0], lam])
    slopes = np.sort(draw(st.lists(st.floats(0.0, 5.0), min_size=k, max_size=k)))[::-1]
    v = np.concatenate([[0.0], np.cumsum(slopes * np.diff(lam))])
    noise = np.asarray(draw(st.lists(st.floats(-0.05, 0.05), min_size=k + 1, max_size=k + 1)))
    return lam, v + noise


@settings(max_examples=80, deadline=None)
@given(noisy_concave())
def test_concave_fit_is_concave_nondecreasing(data):
    lam, v = data
    f = concave_fit(lam, v, np.full(v.size, 0.05))
    s = np.diff(f) / np.diff(lam)
    assert np.all(s >= -1e-9)
    assert np.all(np.diff(s) <= 1e-7)


@settings(max_examples=80, deadline=None)
@given(noisy_concave(), st.floats(0.05, 0.95))
def test_rate_dominates_every_term(data, x):
    lam, v = data
    v = np.maximum.accumulate(v - v[0])
    lam_top = x * 5.0 / (1 - x)
    lam = lam * (lam_top / lam[-1]) if lam[-1] < lam_top else lam
    c = LyapunovCurve.from_points(lam, v, np.full(v.size, 0.05), x=(x,), unit_upper=5.0)
    r = rate_function(c)
    f = _fitted(c)
    assert np.all(r.value >= f - lam - 1e-9)
    assert r.value >= 0
