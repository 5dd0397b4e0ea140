import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rwpot.errors import DomainError, ResourceError
from rwpot.fields import Box
from rwpot.lattice import (box_crossings, box_hitting_index, box_index, box_labels, enumerate_animals,
                           hit_first_frequency, hitting_index, is_connected, local_times,
                           local_times_from_traces, path_animal, range_size, sample_local_times_1d,
                           sample_walk_until, trace_from_path)


def test_box_index_examples():
    assert box_index(-1, 2) == 0
    assert box_index(1, 2) == 1
    assert box_index((2, -3), 4) == (1, -1)
    with pytest.raises(DomainError):
        box_index(0, 3)


def test_walk_start_in_target():
    tr = sample_walk_until((0,), [(0,)], 10, 1)
    assert tr.length == 0 and tr.hit_index == 0


def test_walk_hits_one_in_d1():
    rng = np.random.default_rng(4)
    capped = sum(sample_walk_until((0,), [(1,)], 10**6, rng).capped for _ in range(10_000))
    assert capped / 10_000 <= 0.005


def test_walk_box_target_and_predicate():
    tr = sample_walk_until((0, 0), Box((3, -10), (10, 10)), 10**5, 2)
    assert tr.steps[tr.hit_index][0] == 3
    tr2 = sample_walk_until((0, 0), lambda p: np.abs(p).sum(axis=1) >= 4, 10**5, 2)
    assert np.abs(tr2.steps[tr2.hit_index]).sum() == 4


def test_walk_cap():
    tr = sample_walk_until((0, 0), [(1000, 0)], 50, 3)
    assert tr.capped and tr.hit_index is None and tr.length == 50


def test_gamblers_ruin_example():
    p, se = hit_first_frequency(3, 1, 100_000, 5)
    assert abs(p - 0.25) <= 3 * se


def test_local_time_examples():
    tr = trace_from_path([0, 1, 0, 1])
    lt = local_times(tr, 3)
    assert lt[(0,)] == 2 and lt[(1,)] == 1
    assert local_times(tr, 0).counts == {}
    with pytest.raises(DomainError):
        local_times(tr, 5)


def test_range_examples():
    tr = trace_from_path([0, 1, 0, 1])
    assert range_size(tr, 0) == 1
    assert range_size(tr, 3) == 2


def test_crossing_examples():
    tr = trace_from_path([0, 1, 2, 3])
    cr = box_crossings(tr, [1], 2)
    assert [(c.sigma, c.tau) for c in cr] == [(1, 3)]
    assert box_crossings(tr, [], 2) == []
    tr2 = trace_from_path([0, 1, 2, 1, 2])
    cr2 = box_crossings(tr2, [1], 2)
    assert len(cr2) == 1 and cr2[0].truncated


def test_path_animal_examples():
    tr = trace_from_path([0, 1, 2, 3, 4, 5])
    stop = box_hitting_index(tr, 5, 2)
    assert set(path_animal(tr, 2, stop).labels) == {(0,), (1,), (2,)}
    assert len(path_animal(tr, 2, 1)) == 1


def test_enumerate_animals_examples():
    assert enumerate_animals(1, 3) == 3
    assert enumerate_animals(2, 1) == 1
    assert enumerate_animals(2, 3) == 18 <= 4 ** 6
    with pytest.raises(ResourceError):
        enumerate_animals(2, 40)
    with pytest.raises(DomainError):
        enumerate_animals(3, 2)


@pytest.mark.parametrize("ell", range(1, 7))
def test_animals_match_redelmeier(ell):
    for d in (1, 2):
        n = enumerate_animals(d, ell)
        assert n == oracles.animals_with_origin(d, ell)
        assert n <= (2 * d) ** (2 * ell)


def test_enumerated_animals_connected():
    _, animals = enumerate_animals(2, 4, return_list=True)
    assert all(is_connected(a) and (0, 0) in a for a in animals)


def test_crossing_sampler_matches_traces():
    """The exact crossing sampler and direct walk simulation give the same
    law of the local-time profile (checked through two functionals)."""
    n = 3
    rng = np.random.default_rng(6)
    b = sample_local_times_1d(n, 20_000, rng)
    tr = [sample_walk_until((0,), [(n,)], 10**6, rng) for _ in range(4000)]
    t = local_times_from_traces(tr)
    # mean of prod 2^{-ell} and P(at most 6 distinct sites); both bounded
    def stats(batch):
        lw = np.bincount(batch.sample, weights=-np.log(2) * batch.counts, minlength=batch.n_samples)
        small = np.bincount(batch.sample, minlength=batch.n_samples) <= 6
        w = np.exp(lw)
        return w.mean(), w.std() / np.sqrt(w.size), small.mean(), small.std() / np.sqrt(w.size)
    a, sa, r, sr = stats(b)
    c, sc, q, sq = stats(t)
    assert abs(a - c) <= 4 * np.hypot(sa, sc)
    assert abs(r - q) <= 4 * np.hypot(sr, sq)


# ---------------------------------------------------------------------------
# properties

@st.composite
def lattice_paths(draw, d=1, max_len=60):
    k = draw(st.integers(0, max_len))
    moves = draw(st.lists(st.integers(0, 2 * d - 1), min_size=k, max_size=k))
    pos = [np.zeros(d, dtype=np.int64)]
    for m in moves:
        step = np.zeros(d, dtype=np.int64)
        step[m // 2] = 1 - 2 * (m % 2)
        pos.append(pos[-1] + step)
    return trace_from_path(np.array(pos))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 2).flatmap(lambda d: st.tuples(st.just(d), lattice_paths(d))),
       st.sampled_from([2, 4]), st.data())
def test_crossing_time_equals_time_in_marked_boxes(dpath, R, data):
    d, tr = dpath
    labels = np.unique(box_labels(tr.steps, R), axis=0)
    marked = [tuple(v) for v in labels if data.draw(st.booleans())]
    cr = box_crossings(tr, marked, R)
    keys = {tuple(v) for v in marked}
    inside = sum(1 for k in range(1, len(tr.steps)) if tuple(box_labels(tr.steps[k:k + 1], R)[0]) in keys)
    assert sum(c.duration for c in cr) == inside


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 2).flatmap(lambda d: st.tuples(st.just(d), lattice_paths(d, 80))),
       st.sampled_from([2, 4]))
def test_path_animal_connected(dpath, R):
    d, tr = dpath
    stop = len(tr.steps)
    a = path_animal(tr, R, stop)
    assert a.connected
    start = box_index(tuple(tr.steps[0]), R)
    assert (start if isinstance(start, tuple) else (start,)) in a.labels


@settings(max_examples=100, deadline=None)
@given(lattice_paths(2, 50), st.integers(0, 50))
def test_local_times_sum_to_horizon(tr, N):
    N = min(N, len(tr.steps))
    assert local_times(tr, N).total() == N


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_hitting_index_is_first(seed):
    tr = sample_walk_until((0,), [(4,)], 10_000, seed)
    if not tr.capped:
        h = hitting_index(tr, [(4,)])
        assert h == tr.hit_index and np.all(tr.steps[:h, 0] < 4)
