"""Explicit pattern databases.

A PDB table stores, for every abstract state of a pattern, its optimal cost
to the abstract goal under a (zero-one partitioned) operator cost function.
Tables are filled by a bucketed backward Dijkstra over numpy index arrays.
Patterns whose abstract space exceeds ``max_entries`` use a sparse dict table
capped at ``max_entries`` visited states; truncated searches yield partial
PDBs that can later be resumed from their saved frontier.
"""

from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clock import Clock
from .sas import SasTask

Pattern = tuple[int, ...]

UNVISITED = 0xFFFFFFFF
INF_ENTRY = 0xFFFFFFFE
MAX_STORED_COST = 0xFFFFFFFD
INFINITY = math.inf
ENTRY_BYTES = 4
MAX_RANKABLE = 1 << 62
DEFAULT_MAX_ENTRIES = 10**7
BUILD_OVERHEAD_UNITS = 200  # virtual-clock charge for setting up one backward search


class ConstructionRefused(Exception):
    """The pattern is too large for the explicit backend to even start."""


def make_pattern(variables: Iterable[int]) -> Pattern:
    pattern = tuple(sorted(set(variables)))
    if not pattern:
        raise ValueError("pattern must be nonempty")
    return pattern


def pattern_size(task: SasTask, pattern: Iterable[int]) -> int:
    """Number of abstract states (exact integer, never overflows)."""
    return math.prod(task.domain_sizes[v] for v in pattern)


def multipliers(task: SasTask, pattern: Pattern) -> list[int]:
    mults, m = [], 1
    for v in pattern:
        mults.append(m)
        m *= task.domain_sizes[v]
    return mults


def rank_state(task: SasTask, pattern: Pattern, state: Sequence[int]) -> int:
    """Mixed-radix index of ``state`` restricted to ``pattern`` (first variable least significant)."""
    index, m = 0, 1
    for v in pattern:
        index += state[v] * m
        m *= task.domain_sizes[v]
    return index


def unrank_state(task: SasTask, pattern: Pattern, index: int) -> dict[int, int]:
    out = {}
    for v in pattern:
        index, out[v] = divmod(index, task.domain_sizes[v])
    return out


# ---------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class AbstractOperator:
    pre: tuple[tuple[int, int], ...]  # (position in pattern, value)
    eff: tuple[tuple[int, int], ...]
    cost: int
    sources: tuple[int, ...]  # original operator ids merged into this one


@dataclass(frozen=True)
class AbstractTask:
    pattern: Pattern
    domain_sizes: tuple[int, ...]
    operators: tuple[AbstractOperator, ...]
    goal: tuple[tuple[int, int], ...]
    initial: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.domain_sizes)


def project_task(task: SasTask, pattern: Pattern, op_costs: Sequence[int] | None = None) -> AbstractTask:
    """Restrict ``task`` to ``pattern``.

    Operators without an effect on the pattern are dropped and operators that
    coincide after projection are merged, keeping the cheapest cost.
    """
    if op_costs is None:
        op_costs = [op.cost for op in task.operators]
    pos = {v: i for i, v in enumerate(pattern)}
    merged: dict[tuple, tuple[int, list[int]]] = {}
    for i, op in enumerate(task.operators):
        eff = tuple((pos[v], val) for v, val in op.eff if v in pos)
        if not eff:
            continue
        pre = tuple((pos[v], val) for v, val in op.pre if v in pos)
        key = (pre, eff)
        if key in merged:
            cost, sources = merged[key]
            sources.append(i)
            merged[key] = (min(cost, op_costs[i]), sources)
        else:
            merged[key] = (op_costs[i], [i])
    operators = tuple(AbstractOperator(pre, eff, cost, tuple(src))
                      for (pre, eff), (cost, src) in merged.items())
    return AbstractTask(
        pattern=pattern,
        domain_sizes=tuple(task.domain_sizes[v] for v in pattern),
        operators=operators,
        goal=tuple((pos[v], val) for v, val in task.goal if v in pos),
        initial=tuple(task.initial[v] for v in pattern),
    )


# ---------------------------------------------------------------------------
# tables


class _DenseTable:
    sparse = False

    def __init__(self, size: int):
        self.dist = np.full(size, UNVISITED, dtype=np.uint32)
        self.settled = np.zeros(size, dtype=bool)

    def __len__(self):
        return int(np.count_nonzero(self.dist != UNVISITED))

    def get(self, idx: np.ndarray) -> np.ndarray:
        return self.dist[idx].astype(np.int64)

    def put(self, idx: np.ndarray, cost: int) -> None:
        self.dist[idx] = cost

    def is_settled(self, idx: np.ndarray) -> np.ndarray:
        return self.settled[idx]

    def settle(self, idx: np.ndarray) -> None:
        self.settled[idx] = True

    def snapshot(self, complete: bool):
        costs = np.where(self.settled, self.dist, UNVISITED).astype(np.uint32)
        if complete:
            costs[costs == UNVISITED] = INF_ENTRY
        return costs


class _SparseTable:
    sparse = True

    def __init__(self):
        self.dist: dict[int, int] = {}
        self.settled: set[int] = set()

    def __len__(self):
        return len(self.dist)

    def get(self, idx: np.ndarray) -> np.ndarray:
        d = self.dist
        return np.fromiter((d.get(i, UNVISITED) for i in idx.tolist()), dtype=np.int64, count=len(idx))

    def put(self, idx: np.ndarray, cost: int) -> None:
        self.dist.update(dict.fromkeys(idx.tolist(), cost))

    def is_settled(self, idx: np.ndarray) -> np.ndarray:
        s = self.settled
        return np.fromiter((i in s for i in idx.tolist()), dtype=bool, count=len(idx))

    def settle(self, idx: np.ndarray) -> None:
        self.settled.update(idx.tolist())

    def snapshot(self, complete: bool):
        return {i: self.dist[i] for i in self.settled}


# ---------------------------------------------------------------------------
# backward search


def _expand(base: np.ndarray, free: Iterable[int], doms, mults) -> np.ndarray:
    for p in free:
        base = (base[:, None] + np.arange(doms[p], dtype=np.int64) * mults[p]).ravel()
    return base


class BackwardSearch:
    """Bucketed Dijkstra from the abstract goal states over regressed operators.

    The search can be stopped between cost layers and resumed later; the
    frontier lives in ``buckets`` (cost -> list of index arrays).
    """

    def __init__(self, abstract: AbstractTask, max_entries: int = DEFAULT_MAX_ENTRIES):
        self.abstract = abstract
        self.size = abstract.size
        if self.size >= MAX_RANKABLE:
            raise ConstructionRefused(f"abstract space of {self.size} states cannot be indexed")
        self.max_entries = max_entries
        self.doms = np.array(abstract.domain_sizes, dtype=np.int64)
        self.mults = np.ones(len(self.doms), dtype=np.int64)
        for i in range(1, len(self.doms)):
            self.mults[i] = self.mults[i - 1] * self.doms[i - 1]
        positive = [o.cost for o in abstract.operators if o.cost > 0]
        self.min_cost = min(positive) if positive else 0
        self.last_closed = -1
        self.buckets: dict[int, list[np.ndarray]] = {}
        self.keys: list[int] = []
        self._prepare_operators()

        goal_pos = dict(abstract.goal)
        free = [p for p in range(len(self.doms)) if p not in goal_pos]
        n_goals = math.prod(int(self.doms[p]) for p in free)
        if self.size <= max_entries:
            self.table = _DenseTable(self.size)
        else:
            if n_goals > max_entries:
                raise ConstructionRefused(f"{n_goals} abstract goal states exceed the entry cap")
            self.table = _SparseTable()
        base = np.array([sum(int(self.mults[p]) * v for p, v in goal_pos.items())], dtype=np.int64)
        goals = _expand(base, free, self.doms, self.mults)
        self.table.put(goals, 0)
        self._push(0, goals)

    def _prepare_operators(self):
        self.ops = []
        for op in self.abstract.operators:
            eff_pos = {p for p, _ in op.eff}
            pre = dict(op.pre)
            # target must show the effect values and the untouched preconditions
            checks = list(op.eff) + [(p, v) for p, v in op.pre if p not in eff_pos]
            offset = 0
            free = []
            for p, v in op.eff:
                offset -= v * int(self.mults[p])
                if p in pre:
                    offset += pre[p] * int(self.mults[p])
                else:
                    free.append(p)
            self.ops.append((checks, offset, free, op.cost))

    def _push(self, cost: int, idx: np.ndarray) -> None:
        if cost not in self.buckets:
            self.buckets[cost] = []
            heapq.heappush(self.keys, cost)
        self.buckets[cost].append(idx)

    def _digit(self, idx: np.ndarray, p: int) -> np.ndarray:
        return (idx // self.mults[p]) % self.doms[p]

    def _predecessors(self, targets: np.ndarray, op) -> np.ndarray:
        checks, offset, free, _ = op
        mask = np.ones(len(targets), dtype=bool)
        for p, v in checks:
            mask &= self._digit(targets, p) == v
        base = targets[mask] + offset
        if len(base) == 0:
            return base
        return _expand(base, free, self.doms, self.mults)

    def _valid(self, cost: int, idx: np.ndarray) -> np.ndarray:
        idx = np.unique(idx)
        keep = (self.table.get(idx) == cost) & ~self.table.is_settled(idx)
        return idx[keep]

    @property
    def done(self) -> bool:
        return not self.keys

    def _out_of_entries(self) -> bool:
        return self.table.sparse and len(self.table) >= self.max_entries

    def run(self, clock: Clock | None = None, deadline: float = INFINITY) -> bool:
        """Continue the search until it completes or a limit hits; return completion."""
        while self.keys:
            if self.last_closed >= 0 and (
                    self._out_of_entries() or (clock is not None and clock.now() >= deadline)):
                return False
            cost = heapq.heappop(self.keys)
            frontier = np.concatenate(self.buckets.pop(cost))
            while True:
                frontier = self._valid(cost, frontier)
                if len(frontier) == 0:
                    break
                self.table.settle(frontier)
                zero = []
                generated = 0
                for op in self.ops:
                    preds = self._predecessors(frontier, op)
                    if len(preds) == 0:
                        continue
                    generated += len(preds)
                    new_cost = min(cost + op[3], MAX_STORED_COST)
                    preds = np.unique(preds)
                    preds = preds[self.table.get(preds) > new_cost]
                    if len(preds) == 0:
                        continue
                    self.table.put(preds, new_cost)
                    if op[3] == 0:
                        zero.append(preds)
                    else:
                        self._push(new_cost, preds)
                if clock is not None:
                    clock.charge(len(frontier) + generated)
                if not zero:
                    break
                frontier = np.concatenate(zero)
            self.last_closed = cost
        return True

    def next_open_cost(self) -> float:
        """Smallest tentative cost still on the frontier (discarding stale buckets)."""
        while self.keys:
            cost = self.keys[0]
            live = self._valid(cost, np.concatenate(self.buckets[cost]))
            if len(live):
                self.buckets[cost] = [live]
                return cost
            heapq.heappop(self.keys)
            del self.buckets[cost]
        return INFINITY


# ---------------------------------------------------------------------------
# pattern databases


@dataclass(eq=False)
class Pdb:
    pattern: Pattern
    domain_sizes: tuple[int, ...]
    costs: object  # np.ndarray (dense) or dict rank -> cost (sparse)
    partial: bool
    depth: int
    fallback_increment: int
    op_costs: tuple[int, ...]
    _search: BackwardSearch | None = field(default=None, repr=False)

    def __post_init__(self):
        self._rank_terms = []
        m = 1
        for v, d in zip(self.pattern, self.domain_sizes):
            self._rank_terms.append((v, m))
            m *= d

    @property
    def size(self) -> int:
        return math.prod(self.domain_sizes)

    @property
    def sparse(self) -> bool:
        return isinstance(self.costs, dict)

    @property
    def num_entries(self) -> int:
        return len(self.costs)

    @property
    def memory_bytes(self) -> int:
        return self.num_entries * ENTRY_BYTES

    @property
    def fallback_value(self) -> int:
        return self.depth + self.fallback_increment

    @property
    def resumable(self) -> bool:
        return self.partial and self._search is not None

    def rank(self, state: Sequence[int]) -> int:
        return sum(state[v] * m for v, m in self._rank_terms)

    def lookup(self, state: Sequence[int]) -> float:
        return self.lookup_index(self.rank(state))

    def lookup_index(self, index: int) -> float:
        if self.sparse:
            value = self.costs.get(index, UNVISITED)
        else:
            value = int(self.costs[index])
        if value == UNVISITED:
            return self.fallback_value if self.partial else INFINITY
        if value == INF_ENTRY:
            return INFINITY
        return value


def _finish(search: BackwardSearch, complete: bool, op_costs: Sequence[int]) -> Pdb:
    abstract = search.abstract
    if complete:
        return Pdb(abstract.pattern, abstract.domain_sizes, search.table.snapshot(True), False,
                   max(search.last_closed, 0), search.min_cost, tuple(op_costs))
    inc = search.min_cost
    depth = search.last_closed
    nxt = search.next_open_cost()
    if nxt == INFINITY:
        return Pdb(abstract.pattern, abstract.domain_sizes, search.table.snapshot(True), False,
                   depth, inc, tuple(op_costs))
    # unsettled states cost at least nxt; keep depth + increment below it
    depth = int(min(depth, nxt - inc))
    return Pdb(abstract.pattern, abstract.domain_sizes, search.table.snapshot(False), True,
               depth, inc, tuple(op_costs), search)


def build_pdb(task: SasTask, pattern: Iterable[int], op_costs: Sequence[int] | None = None,
              max_entries: int = DEFAULT_MAX_ENTRIES, time_budget: float = INFINITY,
              clock: Clock | None = None) -> Pdb:
    """Build the PDB of ``pattern`` under ``op_costs`` (original costs by default).

    Stops early, returning a partial PDB, when the sparse table reaches
    ``max_entries`` or ``time_budget`` seconds of ``clock`` elapse. The goal
    layer is always closed first.
    """
    pattern = make_pattern(pattern)
    if op_costs is None:
        op_costs = [op.cost for op in task.operators]
    abstract = project_task(task, pattern, op_costs)
    search = BackwardSearch(abstract, max_entries)
    if clock is not None:
        clock.charge(BUILD_OVERHEAD_UNITS + (0 if search.table.sparse else search.size))
    deadline = clock.now() + time_budget if clock is not None else INFINITY
    complete = search.run(clock, deadline)
    return _finish(search, complete, op_costs)


def resume_pdb(pdb: Pdb, time_budget: float = INFINITY, clock: Clock | None = None,
               max_entries: int | None = None) -> Pdb:
    """Continue a partial PDB's backward search; returns a new PDB."""
    if not pdb.resumable:
        return pdb
    search = pdb._search
    if max_entries is not None:
        search.max_entries = max_entries
    deadline = clock.now() + time_budget if clock is not None else INFINITY
    complete = search.run(clock, deadline)
    new = _finish(search, complete, pdb.op_costs)
    pdb._search = None  # the frontier now belongs to the new PDB
    return new


def heuristic_lookup(pdb: Pdb, state: Sequence[int]) -> float:
    return pdb.lookup(state)


# ---------------------------------------------------------------------------
# cost partitioning and combination


def apply_zero_one_partition(task: SasTask, patterns: Sequence[Pattern]) -> list[tuple[int, ...]]:
    """Give each operator's cost to the first pattern it affects, zero to the rest."""
    if not patterns:
        raise ValueError("at least one pattern is required")
    member_sets = [set(p) for p in patterns]
    costs = [[0] * len(task.operators) for _ in patterns]
    for i, op in enumerate(task.operators):
        for k, members in enumerate(member_sets):
            if not op.eff_vars.isdisjoint(members):
                costs[k][i] = op.cost
                break
    return [tuple(c) for c in costs]


@dataclass(eq=False)
class PdbCollection:
    pdbs: tuple[Pdb, ...]
    provenance: str = ""
    creation_seq: int = 0
    params: dict = field(default_factory=dict)

    @property
    def patterns(self) -> list[Pattern]:
        return [p.pattern for p in self.pdbs]

    @property
    def memory_bytes(self) -> int:
        return sum(p.memory_bytes for p in self.pdbs)

    def heuristic(self, state: Sequence[int]) -> float:
        total = 0
        for pdb in self.pdbs:
            h = pdb.lookup(state)
            if h == INFINITY:
                return INFINITY
            total += h
        return total


class CollectionSet:
    """Ordered set of additive collections; the heuristic is the max over them."""

    def __init__(self, collections: Iterable[PdbCollection] = ()):
        self.collections: list[PdbCollection] = list(collections)

    def __len__(self):
        return len(self.collections)

    def __iter__(self):
        return iter(self.collections)

    def __getitem__(self, i):
        return self.collections[i]

    def append(self, collection: PdbCollection) -> None:
        self.collections.append(collection)

    @property
    def memory_bytes(self) -> int:
        return sum(c.memory_bytes for c in self.collections)

    def heuristic(self, state: Sequence[int]) -> float:
        best = 0
        for c in self.collections:
            h = c.heuristic(state)
            if h == INFINITY:
                return INFINITY
            if h > best:
                best = h
        return best

    __call__ = heuristic


def collection_heuristic(collection: PdbCollection, state: Sequence[int]) -> float:
    return collection.heuristic(state)


def max_heuristic(cset: CollectionSet, state: Sequence[int]) -> float:
    return cset.heuristic(state)


def build_collection(task: SasTask, patterns: Sequence[Pattern], provenance: str = "",
                     creation_seq: int = 0, max_entries: int = DEFAULT_MAX_ENTRIES,
                     time_budget: float = INFINITY, clock: Clock | None = None,
                     params: dict | None = None) -> PdbCollection | None:
    """Zero-one partition ``patterns`` in order and build every member PDB.

    Members whose construction is refused are left out; ``None`` if none remain.
    """
    patterns = [make_pattern(p) for p in patterns]
    if not patterns:
        return None
    pdbs = []
    for pattern, costs in zip(patterns, apply_zero_one_partition(task, patterns)):
        try:
            pdbs.append(build_pdb(task, pattern, costs, max_entries, time_budget, clock))
        except ConstructionRefused:
            continue
    if not pdbs:
        return None
    return PdbCollection(tuple(pdbs), provenance, creation_seq, dict(params or {}))


# ---------------------------------------------------------------------------
# binary dump / load (test fixtures only)

_MAGIC = b"CPCPDB1\n"


def dump_pdb(pdb: Pdb, path: str | Path) -> None:
    header = {
        "pattern": list(pdb.pattern), "domain_sizes": list(pdb.domain_sizes),
        "partial": pdb.partial, "depth": pdb.depth, "fallback_increment": pdb.fallback_increment,
        "op_costs": list(pdb.op_costs), "entry_width": ENTRY_BYTES, "sparse": pdb.sparse,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        if pdb.sparse:
            keys = np.array(sorted(pdb.costs), dtype="<i8")
            vals = np.array([pdb.costs[k] for k in keys.tolist()], dtype="<u4")
            f.write(struct.pack("<Q", len(keys)))
            f.write(keys.tobytes())
            f.write(vals.tobytes())
        else:
            f.write(np.asarray(pdb.costs, dtype="<u4").tobytes())


def load_pdb(path: str | Path) -> Pdb:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a PDB dump")
    pos = len(_MAGIC)
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    header = json.loads(data[pos:pos + n])
    pos += n
    if header["entry_width"] != ENTRY_BYTES:
        raise ValueError(f"{path}: unsupported entry width {header['entry_width']}")
    if header["sparse"]:
        (count,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        keys = np.frombuffer(data, dtype="<i8", count=count, offset=pos)
        vals = np.frombuffer(data, dtype="<u4", count=count, offset=pos + 8 * count)
        costs = dict(zip(keys.tolist(), vals.tolist()))
    else:
        costs = np.frombuffer(data, dtype="<u4", offset=pos).astype(np.uint32)
    return Pdb(tuple(header["pattern"]), tuple(header["domain_sizes"]), costs, header["partial"],
               header["depth"], header["fallback_increment"], tuple(header["op_costs"]))
