import random

import pytest
from hypothesis import given, settings, strategies as st

from cpcplan.clock import VirtualClock
from cpcplan.evaluator import (
    SampleSet, commit_addition, draw_sample, maybe_resample, prune_dominated, should_add,
    surviving_indices, walk_length,
)
from cpcplan.pdb import INFINITY, CollectionSet, build_collection

import oracles
from helpers import make_task, random_task, toy_task

INF = INFINITY


class Stub:
    def __init__(self, values, default=0):
        self.values = values
        self.default = default

    def heuristic(self, s):
        return self.values.get(s, self.default)


def sample_of(states, stored, initial=(0,), init_h=0):
    return SampleSet(list(states), list(stored), initial, init_h)


def test_dead_initial_state_has_no_moves():
    task = make_task([2], [("a", {0: 1}, {0: 0}, 1)], [0], {0: 1})
    sample = draw_sample(task, CollectionSet(), random.Random(0), VirtualClock(), max_states=50)
    assert sample.states == [(0,)]


def test_size_limit_one():
    sample = draw_sample(toy_task(), CollectionSet(), random.Random(0), VirtualClock(), max_states=1)
    assert sample.m == 1


def test_samples_are_reachable():
    task = toy_task()
    cset = CollectionSet([build_collection(task, [(0,), (1,)])])
    sample = draw_sample(task, cset, random.Random(7), VirtualClock(), max_states=300)
    reach = oracles.reachable(task)
    assert set(sample.states) <= reach
    assert len(set(sample.states)) == sample.m
    assert sample.stored_h == [cset.heuristic(s) for s in sample.states]


def test_time_limit_stops_sampling():
    clock = VirtualClock(unit_seconds=1.0)
    sample = draw_sample(toy_task(), CollectionSet(), random.Random(0), clock, time_limit=5)
    assert clock.now() < 10
    assert 1 <= sample.m <= 4


def test_walks_restart_at_dead_ends():
    # a -> dead end (v0=2 with no way back and goal v0=1)
    ops = [("to_dead", {0: 0}, {0: 2}, 1), ("win", {0: 0}, {0: 1}, 1)]
    task = make_task([3], ops, [0], {0: 1})
    cset = CollectionSet([build_collection(task, [(0,)])])
    assert cset.heuristic((2,)) == INF
    sample = draw_sample(task, cset, random.Random(1), VirtualClock(), max_states=200)
    assert (2,) not in sample.states


def test_walk_length_law():
    rng = random.Random(0)
    lengths = [walk_length(rng, 10, 1.0) for _ in range(4000)]
    assert min(lengths) >= 1 and max(lengths) <= 20
    assert abs(sum(lengths) / len(lengths) - 10) < 0.3
    assert walk_length(rng, 0, 1.0) == 1


@pytest.mark.parametrize("m", [4, 8, 100])
def test_threshold_boundaries(m):
    import math
    need = math.ceil(0.25 * m)
    states = [(i,) for i in range(m)]
    sample = sample_of(states, [1] * m)
    for k, expected in [(need - 1, False), (need, True), (need + 1, True)]:
        cand = Stub({(i,): 2 for i in range(k)}, default=1)
        assert should_add(sample, cand) is expected


def test_threshold_examples():
    sample = sample_of([(0,), (1,), (2,), (3,)], [1, 1, 1, 1])
    assert should_add(sample, Stub({(0,): 5}, default=1))
    assert not should_add(sample, Stub({}, default=1))


def test_identical_candidate_rejected():
    task = toy_task()
    c = build_collection(task, [(0,), (1,)])
    cset = CollectionSet([c])
    sample = draw_sample(task, cset, random.Random(0), VirtualClock(), max_states=100)
    assert not should_add(sample, build_collection(task, [(0,), (1,)]))


def test_infinity_improves_finite():
    sample = sample_of([(0,)], [7])
    assert should_add(sample, Stub({(0,): INF}))


def test_commit_pointwise_max_and_dead_removal():
    states = [(0,), (1,), (2,), (3,)]
    sample = sample_of(states, [1, 1, 1, 1])
    cset = CollectionSet()
    trigger = commit_addition(sample, cset, Stub({(1,): 4, (2,): INF}, default=0))
    assert len(cset) == 1
    assert sample.states == [(0,), (1,), (3,)]
    assert sample.stored_h == [1, 4, 1]
    assert trigger is False


def test_commit_keeps_dead_initial_state():
    sample = sample_of([(0,), (1,)], [1, 1])
    commit_addition(sample, CollectionSet(), Stub({}, default=INF))
    assert sample.states == [(0,)] and sample.unsolvable


def test_resample_trigger_rule():
    sample = sample_of([(0,)], [10], init_h=10)
    assert commit_addition(sample, CollectionSet(), Stub({(0,): 12}))
    sample = sample_of([(0,)], [10], init_h=10)
    assert not commit_addition(sample, CollectionSet(), Stub({(0,): 11}))


def test_maybe_resample():
    task = toy_task()
    cset = CollectionSet([build_collection(task, [(0,), (1,)])])
    clock = VirtualClock()
    sample = draw_sample(task, cset, random.Random(0), clock, max_states=20)
    assert maybe_resample(sample, False, task, cset, random.Random(0), clock) is sample
    again = maybe_resample(sample, True, task, cset, random.Random(0), clock, max_states=20)
    assert again.stored_h == [cset.heuristic(s) for s in again.states]
    third = maybe_resample(again, True, task, cset, random.Random(0), clock, max_states=20)
    assert third.resample_time_spent >= again.resample_time_spent > 0


def test_prune_example():
    assert surviving_indices([(2, 3), (2, 3), (1, 4)]) == [1, 2]
    assert surviving_indices([(0, 0)]) == [0]
    assert surviving_indices([(5, 5), (5, 5)]) == [1]


def test_prune_dominated_collections():
    states = [(0,), (1,)]
    a, b, c = Stub({(0,): 2, (1,): 3}), Stub({(0,): 2, (1,): 3}), Stub({(0,): 1, (1,): 4})
    pruned = prune_dominated(CollectionSet([a, b, c]), sample_of(states, [2, 4]))
    assert list(pruned) == [b, c]


def brute_force_keep(hm):
    keep = []
    for i, row in enumerate(hm):
        later = hm[i + 1:]
        if not later or any(row[k] > max(r[k] for r in later) for k in range(len(row))):
            keep.append(i)
    return keep


@given(st.lists(st.lists(st.sampled_from([0, 1, 2, 3, INF]), min_size=3, max_size=3), min_size=1, max_size=8))
def test_prune_matches_brute_force(hm):
    keep = surviving_indices(hm)
    assert keep == brute_force_keep(hm)
    before = [max(r[k] for r in hm) for k in range(3)]
    after = [max(hm[i][k] for i in keep) for k in range(3)]
    assert before == after


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_stored_h_stays_synchronised(seed):
    rng = random.Random(seed)
    task = random_task(rng)
    cset = CollectionSet()
    sample = draw_sample(task, cset, rng, VirtualClock(), max_states=60)
    for k in range(4):
        vars_ = rng.sample(range(task.num_vars), rng.randint(1, task.num_vars))
        cand = build_collection(task, [tuple(sorted(vars_))])
        verdict = should_add(sample, cand)
        if verdict:
            commit_addition(sample, cset, cand)
            cset = prune_dominated(cset, sample)
        assert sample.stored_h == [cset.heuristic(s) for s in sample.states]
        assert sample.m >= 1
