"""Explicit A* over the original state space, plan validation and IPC plan files."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .clock import Clock, WallClock
from .sas import SasTask, State

SOLVED = "solved"
UNSOLVABLE = "unsolvable"
LIMIT = "limit"

STATE_BYTES = 64  # rough per-state bookkeeping estimate used for memory accounting


@dataclass
class SearchResult:
    status: str
    plan: list[str] | None = None
    cost: int = 0
    expansions: int = 0
    evaluated: int = 0
    generated: int = 0
    search_time: float = 0.0
    init_h: float = 0.0
    peak_states: int = 0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


def _zero(_state) -> int:
    return 0


def astar_search(task: SasTask, heuristic: Callable[[State], float] | None = None,
                 clock: Clock | None = None, time_limit: float = math.inf,
                 max_states: int | None = None) -> SearchResult:
    """Cost-optimal A* with a closed list.

    Assumes ``heuristic`` is admissible and consistent, so states are closed
    on their first expansion. Ties on f prefer larger g, then insertion order.
    States with infinite heuristic are pruned.
    """
    clock = clock or WallClock()
    h = heuristic or _zero
    start_time = clock.now()
    deadline = start_time + time_limit
    s0 = tuple(task.initial)
    ops = task.operators

    result = SearchResult(UNSOLVABLE)
    h0 = h(s0)
    result.evaluated = 1
    result.init_h = h0
    if h0 == math.inf:
        result.search_time = clock.now() - start_time
        return result

    counter = itertools.count()
    best_g: dict[State, int] = {s0: 0}
    parent: dict[State, tuple[State, int] | None] = {s0: None}
    h_cache: dict[State, float] = {s0: h0}
    closed: set[State] = set()
    open_list = [(h0, 0, next(counter), s0)]

    while open_list:
        f, neg_g, _, s = heapq.heappop(open_list)
        g = -neg_g
        if s in closed or g > best_g[s]:
            continue
        if task.is_goal(s):
            result.status = SOLVED
            result.plan, result.cost = _extract(task, parent, s), g
            break
        if clock.now() >= deadline or (max_states is not None and len(best_g) > max_states):
            result.status = LIMIT
            break
        closed.add(s)
        result.expansions += 1
        clock.charge(len(ops))
        for i, op in enumerate(ops):
            if not op.applicable(s):
                continue
            t = list(s)
            for v, val in op.eff:
                t[v] = val
            t = tuple(t)
            result.generated += 1
            if t in closed:
                continue
            new_g = g + op.cost
            if new_g >= best_g.get(t, math.inf):
                continue
            ht = h_cache.get(t)
            if ht is None:
                ht = h_cache[t] = h(t)
                result.evaluated += 1
            if ht == math.inf:
                continue
            best_g[t] = new_g
            parent[t] = (s, i)
            heapq.heappush(open_list, (new_g + ht, -new_g, next(counter), t))

    result.peak_states = len(best_g)
    result.search_time = clock.now() - start_time
    return result


def _extract(task: SasTask, parent, s: State) -> list[str]:
    plan = []
    while parent[s] is not None:
        s, i = parent[s]
        plan.append(task.operators[i].name)
    return plan[::-1]


@dataclass
class PlanValidation:
    valid: bool
    cost: int = 0
    reason: str = ""


def validate_plan(task: SasTask, plan: Sequence[str]) -> PlanValidation:
    state = tuple(task.initial)
    cost = 0
    for step, name in enumerate(plan, 1):
        index = task.operator_index.get(name)
        if index is None:
            return PlanValidation(False, cost, f"step {step}: unknown operator '{name}'")
        op = task.operators[index]
        if not op.applicable(state):
            return PlanValidation(False, cost, f"step {step}: operator '{name}' is not applicable")
        t = list(state)
        for v, val in op.eff:
            t[v] = val
        state = tuple(t)
        cost += op.cost
    if not task.is_goal(state):
        return PlanValidation(False, cost, "final state does not satisfy the goal")
    return PlanValidation(True, cost)


def format_plan(plan: Sequence[str], cost: int) -> str:
    lines = [f"({name})" for name in plan]
    lines.append(f"; cost = {cost} (general cost)")
    return "\n".join(lines) + "\n"


def write_plan(path: str | Path, plan: Sequence[str], cost: int) -> None:
    Path(path).write_text(format_plan(plan, cost))


def parse_plan(text: str) -> list[str]:
    plan = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("(") and line.endswith(")"):
            line = line[1:-1].strip()
        plan.append(line)
    return plan
