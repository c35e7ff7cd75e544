"""Random-walk sampling evaluator for candidate PDB collections."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .clock import Clock, WallClock
from .pdb import INFINITY, CollectionSet, PdbCollection
from .sas import SasTask, State

MAX_SAMPLE_STATES = 10_000
SAMPLE_TIME_LIMIT = 30.0
IMPROVEMENT_RATIO = 0.25
RESAMPLE_RISE = 1.1


@dataclass
class SampleSet:
    states: list[State]
    stored_h: list[float]
    initial: State
    init_h_at_sampling: float
    resample_time_spent: float = 0.0
    unsolvable: bool = False
    draws: int = 1

    @property
    def m(self) -> int:
        return len(self.states)

    def refresh(self, cset: CollectionSet) -> None:
        self.stored_h = [cset.heuristic(s) for s in self.states]


def mean_positive_cost(task: SasTask) -> float:
    positive = [op.cost for op in task.operators if op.cost > 0]
    return sum(positive) / len(positive) if positive else 1.0


def walk_length(rng: random.Random, init_h: float, mean_cost: float) -> int:
    """Binomial(2 * ceil(h0 / mean cost), 1/2) steps, at least one."""
    trials = 2 * math.ceil(init_h / mean_cost) if init_h > 0 else 0
    steps = bin(rng.getrandbits(trials)).count("1") if trials else 0
    return max(steps, 1)


def draw_sample(task: SasTask, cset: CollectionSet, rng: random.Random, clock: Clock | None = None,
                max_states: int = MAX_SAMPLE_STATES, time_limit: float = SAMPLE_TIME_LIMIT) -> SampleSet:
    """Collect random-walk endpoints from the initial state.

    Each walk restarts at the initial state whenever it reaches a state the
    current collection set proves dead, or a state without applicable
    operators. Sampling stops after ``max_states`` walks or ``time_limit``
    seconds; duplicate endpoints are then dropped.
    """
    clock = clock or WallClock()
    s0 = tuple(task.initial)
    h0 = cset.heuristic(s0)
    if h0 == INFINITY:
        return SampleSet([s0], [h0], s0, h0, unsolvable=True)
    mean_cost = mean_positive_cost(task)
    dead: dict[State, bool] = {}
    ops = task.operators
    deadline = clock.now() + time_limit
    endpoints: list[State] = []
    while len(endpoints) < max_states and clock.now() < deadline:
        s = s0
        for _ in range(walk_length(rng, h0, mean_cost)):
            applicable = [op for op in ops if op.applicable(s)]
            clock.charge(len(ops))
            if not applicable:
                s = s0
                continue
            op = rng.choice(applicable)
            t = list(s)
            for v, val in op.eff:
                t[v] = val
            s = tuple(t)
            if s not in dead:
                dead[s] = cset.heuristic(s) == INFINITY
            if dead[s]:
                s = s0
        endpoints.append(s)
    states = list(dict.fromkeys(endpoints)) or [s0]
    return SampleSet(states, [cset.heuristic(s) for s in states], s0, h0)


def candidate_values(sample: SampleSet, candidate: PdbCollection) -> list[float]:
    return [candidate.heuristic(s) for s in sample.states]


def improved_count(sample: SampleSet, values: Sequence[float]) -> int:
    return sum(1 for h, old in zip(values, sample.stored_h) if h > old)


def should_add(sample: SampleSet, candidate: PdbCollection, values: Sequence[float] | None = None) -> bool:
    """True iff the candidate strictly improves at least a quarter of the sample states."""
    if values is None:
        values = candidate_values(sample, candidate)
    # 0.25 * m is exact in binary floating point
    return improved_count(sample, values) >= IMPROVEMENT_RATIO * sample.m


def commit_addition(sample: SampleSet, cset: CollectionSet, candidate: PdbCollection,
                    values: Sequence[float] | None = None) -> bool:
    """Add ``candidate`` to ``cset`` and update the sample in place.

    Returns the resampling trigger: whether the initial state's heuristic
    now exceeds 110% of its value when the sample was drawn.
    """
    if values is None:
        values = candidate_values(sample, candidate)
    cset.append(candidate)
    sample.stored_h = [max(old, h) for old, h in zip(sample.stored_h, values)]
    s0 = sample.initial
    keep = [i for i, h in enumerate(sample.stored_h) if h != INFINITY or sample.states[i] == s0]
    sample.states = [sample.states[i] for i in keep]
    sample.stored_h = [sample.stored_h[i] for i in keep]
    init_h = cset.heuristic(s0)
    if init_h == INFINITY:
        sample.unsolvable = True
    if not sample.states:
        sample.states, sample.stored_h = [s0], [init_h]
    return init_h > RESAMPLE_RISE * sample.init_h_at_sampling


def maybe_resample(sample: SampleSet, trigger: bool, task: SasTask, cset: CollectionSet,
                   rng: random.Random, clock: Clock | None = None,
                   max_states: int = MAX_SAMPLE_STATES, time_limit: float = SAMPLE_TIME_LIMIT) -> SampleSet:
    if not trigger:
        return sample
    clock = clock or WallClock()
    start = clock.now()
    fresh = draw_sample(task, cset, rng, clock, max_states, time_limit)
    fresh.resample_time_spent = sample.resample_time_spent + (clock.now() - start)
    fresh.draws = sample.draws + 1
    return fresh


def surviving_indices(hmatrix: Sequence[Sequence[float]]) -> list[int]:
    """Indices of rows kept by the backward dominance scan.

    Rows are visited from last to first; a row survives iff it strictly
    exceeds the running maximum of the surviving rows after it somewhere.
    """
    if not hmatrix:
        return []
    running = [-INFINITY] * len(hmatrix[0])
    keep = []
    for c in range(len(hmatrix) - 1, -1, -1):
        row = hmatrix[c]
        if any(h > r for h, r in zip(row, running)):
            keep.append(c)
            running = [max(h, r) for h, r in zip(row, running)]
    return keep[::-1]


def prune_dominated(cset: CollectionSet, sample: SampleSet) -> CollectionSet:
    hmatrix = [[c.heuristic(s) for s in sample.states] for c in cset]
    return CollectionSet(cset[i] for i in surviving_indices(hmatrix))


@dataclass
class Evaluator:
    """Sampling parameters bound to a task, an RNG stream and a clock."""

    task: SasTask
    rng: random.Random
    clock: Clock = field(default_factory=WallClock)
    max_states: int = MAX_SAMPLE_STATES
    time_limit: float = SAMPLE_TIME_LIMIT

    def draw(self, cset: CollectionSet) -> SampleSet:
        return draw_sample(self.task, cset, self.rng, self.clock, self.max_states, self.time_limit)

    def resample(self, sample: SampleSet, trigger: bool, cset: CollectionSet) -> SampleSet:
        return maybe_resample(sample, trigger, self.task, cset, self.rng, self.clock,
                              self.max_states, self.time_limit)

    def commit(self, sample: SampleSet, cset: CollectionSet, candidate: PdbCollection,
               values: Sequence[float] | None = None) -> bool:
        return commit_addition(sample, cset, candidate, values)
