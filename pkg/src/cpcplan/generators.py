"""Pattern generators: Next-Fit bin packing, causal-dependency bin packing and
GAMER-style hill climbing.

All randomness goes through the ``random.Random`` passed in, and every
candidate list is put in a fixed order before it is shuffled or sampled, so a
seeded run is reproducible call for call.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .clock import Clock, WallClock
from .evaluator import SampleSet, draw_sample
from .pdb import (
    DEFAULT_MAX_ENTRIES, INFINITY, CollectionSet, ConstructionRefused, Pattern, Pdb,
    PdbCollection, build_pdb, make_pattern,
)
from .sas import CausalGraph, SasTask, build_causal_graph, causally_related_vars

DECREASING = "decreasing"
INCREASING = "increasing"


@dataclass(frozen=True)
class PackingConfig:
    order: str = DECREASING
    N: int = 1
    S: int = 10**8
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.S < 2:
            raise ValueError("S must be at least 2")
        if self.order not in (DECREASING, INCREASING):
            raise ValueError(f"unknown order {self.order!r}")


def next_fit_pack(task: SasTask, order: str, S: int, rng: random.Random,
                  graph: CausalGraph | None = None) -> list[Pattern]:
    """Next-Fit bin packing (NFD for ``decreasing``, NFI for ``increasing``).

    A bin has space for ``v`` while ``size(bin) * |D_v| < S``. After placing a
    variable, its causally related candidates (listed in candidate order, then
    shuffled) are pulled into the bin greedily.
    """
    graph = graph or build_causal_graph(task)
    doms = task.domain_sizes
    if order == DECREASING:
        key = lambda v: (-doms[v], v)
    elif order == INCREASING:
        key = lambda v: (doms[v], v)
    else:
        raise ValueError(f"unknown order {order!r}")
    candidates = sorted((v for v in range(task.num_vars) if doms[v] < S), key=key)

    bins: list[list[int]] = []
    current: list[int] = []
    size = 1
    while candidates:
        v = candidates.pop(0)
        if current and size * doms[v] >= S:
            bins.append(current)
            current, size = [], 1
        current.append(v)
        size *= doms[v]
        related = [u for u in candidates if u in graph.related[v]]
        rng.shuffle(related)
        for u in related:
            if size * doms[u] < S:
                current.append(u)
                size *= doms[u]
                candidates.remove(u)
    if current:
        bins.append(current)
    return [make_pattern(b) for b in bins]


def cbp_pack(task: SasTask, N: int, S: int, rng: random.Random,
             graph: CausalGraph | None = None) -> list[Pattern]:
    """Causal-dependency bin packing.

    Each bin is opened with up to ``N`` goal variables drawn with
    ``rng.sample`` and then grows by absorbing shuffled causally related
    variables that fit, transitively. Drawn goal variables that do not fit
    the opened bin stay available for later bins. Bins are returned longest
    first (stable for equal lengths).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    graph = graph or build_causal_graph(task)
    doms = task.domain_sizes
    candidates = [v for v in range(task.num_vars) if doms[v] < S]
    goal_candidates = [v for v in sorted(task.goal_vars) if doms[v] < S]

    bins: list[list[int]] = []
    while goal_candidates:
        chosen = rng.sample(goal_candidates, min(N, len(goal_candidates)))
        current: list[int] = []
        size = 1
        for v in chosen:
            if size * doms[v] < S:
                current.append(v)
                size *= doms[v]
                goal_candidates.remove(v)
                candidates.remove(v)
        related = [u for u in candidates if not graph.related[u].isdisjoint(current)]
        rng.shuffle(related)
        while True:
            v = next((u for u in related if size * doms[u] < S), None)
            if v is None:
                break
            current.append(v)
            size *= doms[v]
            related.remove(v)
            candidates.remove(v)
            if v in goal_candidates:
                goal_candidates.remove(v)
            related += [u for u in candidates if u in graph.related[v] and u not in related]
            rng.shuffle(related)
        bins.append(current)
    patterns = [make_pattern(b) for b in bins]
    patterns.sort(key=len, reverse=True)
    return patterns


# ---------------------------------------------------------------------------
# GAMER-style hill climbing

NEW_PATTERN = "new"
NO_CHANGE = "no-change"
TERMINATED = "terminated"

ITERATION_CAP = 120.0
SELECTION_MARGIN = 0.001
RESAMPLE_RISE = 1.1


@dataclass
class GamerState:
    p_sel: Pattern = ()
    s_can: list[int] = field(default_factory=list)
    sample: SampleSet | None = None
    pdb: Pdb | None = None
    last_init_h: float = 0.0
    started: bool = False
    terminated: bool = False
    resample_time_spent: float = 0.0


@dataclass
class GamerStep:
    status: str
    pattern: Pattern | None = None
    pdb: Pdb | None = None
    candidates_evaluated: int = 0


def _single(pdb: Pdb) -> CollectionSet:
    return CollectionSet([PdbCollection((pdb,))])


def mean_sample_h(pdb: Pdb, sample: SampleSet) -> float:
    total = 0.0
    for s in sample.states:
        h = pdb.lookup(s)
        if h == INFINITY:
            return INFINITY
        total += h
    return total / len(sample.states)


def select_within_margin(values: dict[int, float], threshold: float) -> list[int]:
    """Candidates within 0.1% of the best value, provided the best beats ``threshold``."""
    if not values:
        return []
    best = max(values.values())
    if not best > threshold:
        return []
    if best == INFINITY:
        return [v for v, x in values.items() if x == INFINITY]
    floor = best - SELECTION_MARGIN * abs(best)
    return [v for v, x in values.items() if x >= floor]


@dataclass
class GamerLimits:
    max_entries: int = DEFAULT_MAX_ENTRIES
    candidate_time: float = 10.0
    iteration_cap: float = ITERATION_CAP
    sample_states: int = 10_000
    sample_time: float = 30.0


def gamer_style_step(task: SasTask, state: GamerState, rng: random.Random,
                     clock: Clock | None = None, limits: GamerLimits | None = None,
                     stop: Callable[[], bool] = lambda: False,
                     graph: CausalGraph | None = None) -> GamerStep:
    """One call of GAMER-style hill climbing on ``state`` (mutated in place).

    Candidates ``P_sel + {v}`` are scored by the mean heuristic of their PDB
    over a sample drawn for the current ``P_sel`` PDB. ``stop`` reports
    exhaustion of the caller's time or memory budget.
    """
    clock = clock or WallClock()
    limits = limits or GamerLimits()
    graph = graph or build_causal_graph(task)
    s0 = tuple(task.initial)

    def build(pattern):
        return build_pdb(task, pattern, None, limits.max_entries, limits.candidate_time, clock)

    def sample_for(pdb):
        start = clock.now()
        sample = draw_sample(task, _single(pdb), rng, clock, limits.sample_states, limits.sample_time)
        state.resample_time_spent += clock.now() - start
        return sample

    if state.terminated:
        return GamerStep(TERMINATED)
    if not state.started:
        state.p_sel = make_pattern(task.goal_vars)
        try:
            state.pdb = build(state.p_sel)
        except ConstructionRefused:
            state.terminated = True
            return GamerStep(TERMINATED)
        state.sample = sample_for(state.pdb)
        state.last_init_h = state.pdb.lookup(s0)
        state.started = True

    if not state.s_can:
        state.s_can = sorted(causally_related_vars(graph, state.p_sel))
    else:
        rng.shuffle(state.s_can)

    threshold = mean_sample_h(state.pdb, state.sample)
    values: dict[int, float] = {}
    pdbs: dict[int, Pdb] = {}
    start = clock.now()
    while state.s_can and clock.now() - start < limits.iteration_cap and not stop():
        v = state.s_can.pop()
        try:
            pdb = build(state.p_sel + (v,))
        except ConstructionRefused:
            values[v] = -INFINITY
            continue
        pdbs[v] = pdb
        values[v] = mean_sample_h(pdb, state.sample)
        clock.charge(state.sample.m)

    selected = select_within_margin(values, threshold)
    if selected:
        state.p_sel = make_pattern(state.p_sel + tuple(selected))
        if len(selected) == 1:
            new_pdb = pdbs[selected[0]]
        else:
            try:
                new_pdb = build(state.p_sel)
            except ConstructionRefused:
                new_pdb = pdbs[max(selected, key=lambda v: values[v])]
                state.p_sel = new_pdb.pattern
        state.pdb = new_pdb
        init_h = new_pdb.lookup(s0)
        if init_h > RESAMPLE_RISE * state.last_init_h:
            state.sample = sample_for(new_pdb)
        state.last_init_h = init_h
        state.s_can = []
        return GamerStep(NEW_PATTERN, state.p_sel, new_pdb, len(values))
    if not state.s_can:
        state.terminated = True
        return GamerStep(TERMINATED, candidates_evaluated=len(values))
    return GamerStep(NO_CHANGE, candidates_evaluated=len(values))
