"""Complementary PDB construction: seeding, bandit-driven adaptive phase, finalization."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Any

from .clock import Clock, WallClock
from .evaluator import Evaluator, SampleSet, candidate_values, prune_dominated, should_add
from .generators import (
    DECREASING, INCREASING, NEW_PATTERN, TERMINATED, GamerLimits, GamerState,
    cbp_pack, gamer_style_step, next_fit_pack,
)
from .pdb import (
    ENTRY_BYTES, INFINITY, CollectionSet, PdbCollection, build_collection, pattern_size,
    resume_pdb,
)
from .sas import SasTask, build_causal_graph

log = logging.getLogger(__name__)

MIN_PULL_TIME = 0.001
GiB = 2**30


# ---------------------------------------------------------------------------
# UCB1


@dataclass
class BanditArm:
    label: Any
    total_reward: float = 0.0
    pulled_time: float = 0.0

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.pulled_time if self.pulled_time > 0 else 0.0


@dataclass
class BanditState:
    arms: list[BanditArm]
    total_time: float = 0.0

    @classmethod
    def over(cls, labels) -> "BanditState":
        return cls([BanditArm(label) for label in labels])

    @property
    def labels(self) -> list:
        return [a.label for a in self.arms]

    def remove(self, label) -> None:
        for i, arm in enumerate(self.arms):
            if arm.label == label:
                self.total_time -= arm.pulled_time
                del self.arms[i]
                return

    def to_dict(self) -> dict:
        return {"total_time": self.total_time,
                "arms": [{"label": a.label, "total_reward": a.total_reward, "pulled_time": a.pulled_time}
                         for a in self.arms]}


def ucb1_score(arm: BanditArm, total_time: float) -> float:
    """Mean reward plus sqrt(2 ln n / n_i); the bonus is 0 while ln n <= 0."""
    bonus = math.sqrt(2.0 * math.log(total_time) / arm.pulled_time) if total_time > 1.0 else 0.0
    return arm.mean_reward + bonus


def ucb1_select(bandit: BanditState) -> int:
    if not bandit.arms:
        raise ValueError("bandit has no arms")
    for i, arm in enumerate(bandit.arms):
        if arm.pulled_time == 0:
            return i
    scores = [ucb1_score(arm, bandit.total_time) for arm in bandit.arms]
    return max(range(len(scores)), key=lambda i: (scores[i], -i))


def update_bandit(bandit: BanditState, arm: int, elapsed: float, accepted: bool) -> BanditState:
    elapsed = max(elapsed, MIN_PULL_TIME)
    bandit.arms[arm].pulled_time += elapsed
    bandit.total_time += elapsed
    if accepted:
        bandit.arms[arm].total_reward += 1.0
    return bandit


# ---------------------------------------------------------------------------
# configuration and audit


def size_choices(s_l: int, choices=tuple(10**k for k in range(9, 36)), factor: int = 10**4) -> list[int]:
    """Size limits not exceeding ``factor * s_l``; the smallest survives if all are filtered."""
    kept = [s for s in choices if s <= factor * s_l]
    return kept or [min(choices)]


@dataclass
class ConstructionConfig:
    seed: int = 0
    seed_phase_budget: float = 80.0
    seed_size_start: int = 10**8
    seed_size_scale: int = 10
    construction_time: float = 1080.0
    construction_memory: int = 4 * GiB
    size_set: tuple[int, ...] = tuple(10**k for k in range(9, 36))
    size_filter_factor: int = 10**4
    max_entries: int = 10**7
    pdb_time_budget: float = 30.0
    gamer_candidate_time: float = 10.0
    gamer_iteration_cap: float = 120.0
    sample_states: int = 10_000
    sample_time: float = 30.0
    max_stalled_attempts: int | None = None

    def __post_init__(self):
        for name in ("seed_phase_budget", "construction_time", "pdb_time_budget", "sample_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.construction_memory <= 0 or self.max_entries <= 0 or self.sample_states <= 0:
            raise ValueError("memory, entry and sample limits must be positive")
        if not self.size_set:
            raise ValueError("size_set must be nonempty")


def _num(x: float):
    if x == INFINITY:
        return "inf"
    if x == -INFINITY:
        return "-inf"
    return x


class AuditLog:
    def __init__(self):
        self.records: list[dict] = []

    def record(self, **fields) -> dict:
        fields["attempt"] = len(self.records)
        self.records.append(fields)
        return fields

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


@dataclass
class ConstructionResult:
    collections: CollectionSet
    sample: SampleSet
    audit: AuditLog
    size_limit_seed: int
    algorithm_bandit: BanditState
    n_bandit: BanditState
    s_bandit: BanditState | None
    phase_times: dict[str, float] = field(default_factory=dict)
    peak_memory: int = 0

    def census(self) -> dict:
        mix: dict[str, int] = {}
        for c in self.collections:
            mix[c.provenance] = mix.get(c.provenance, 0) + 1
        return {"count": len(self.collections), "provenance": dict(sorted(mix.items())),
                "pdbs": sum(len(c.pdbs) for c in self.collections),
                "partial_pdbs": sum(p.partial for c in self.collections for p in c.pdbs)}


# ---------------------------------------------------------------------------
# the construction pipeline


class HeuristicBuilder:
    """Runs the seeding, adaptive and finalization phases on one task."""

    def __init__(self, task: SasTask, config: ConstructionConfig | None = None,
                 clock: Clock | None = None):
        self.task = task
        self.config = config or ConstructionConfig()
        self.clock = clock or WallClock()
        self.graph = build_causal_graph(task)
        self.rng = random.Random(f"{self.config.seed}/generators")
        self.evaluator = Evaluator(task, random.Random(f"{self.config.seed}/sampling"), self.clock,
                                   self.config.sample_states, self.config.sample_time)
        self.cset = CollectionSet()
        self.audit = AuditLog()
        self.gamer = GamerState()
        self.sample: SampleSet | None = None
        self.next_seq = 0
        self.peak_memory = 0
        self.start = self.clock.now()
        self.deadline = self.start + self.config.construction_time
        self.algorithms = BanditState.over(["cbp", "gamer"])
        self.n_bandit = BanditState.over(range(1, len(task.goal_vars) + 1))
        self.s_bandit: BanditState | None = None
        self.size_limit_seed = self.config.seed_size_start
        self.phase_times: dict[str, float] = {}

    # -- bookkeeping

    def memory_used(self) -> int:
        used = self.cset.memory_bytes
        if self.sample is not None:
            used += self.sample.m * self.task.num_vars * 8
        if self.gamer.pdb is not None:
            used += self.gamer.pdb.memory_bytes
        self.peak_memory = max(self.peak_memory, used)
        return used

    def out_of_budget(self) -> bool:
        return self.clock.now() >= self.deadline or self.memory_used() >= self.config.construction_memory

    def remaining_time(self) -> float:
        return max(self.deadline - self.clock.now(), 0.0)

    def _resample_total(self) -> float:
        return self.sample.resample_time_spent + self.gamer.resample_time_spent

    def _pdb_budget(self) -> float:
        return min(self.config.pdb_time_budget, self.remaining_time())

    def _new_collection(self, patterns, provenance, params) -> PdbCollection | None:
        collection = build_collection(self.task, patterns, provenance, self.next_seq,
                                      self.config.max_entries, self._pdb_budget(), self.clock, params)
        self.next_seq += 1
        return collection

    def _offer(self, collection: PdbCollection | None) -> bool:
        """Evaluate a candidate and commit it (with resampling) if it passes."""
        if collection is None:
            return False
        values = candidate_values(self.sample, collection)
        self.clock.charge(self.sample.m * len(collection.pdbs))
        if not should_add(self.sample, collection, values):
            return False
        trigger = self.evaluator.commit(self.sample, self.cset, collection, values)
        self.sample = self.evaluator.resample(self.sample, trigger, self.cset)
        return True

    def _log(self, phase, algorithm, params, elapsed, accepted, collection):
        self.audit.record(
            phase=phase, algorithm=algorithm, params=params, elapsed=elapsed, accepted=accepted,
            patterns=[list(p) for p in collection.patterns] if collection is not None else [],
            creation_seq=collection.creation_seq if collection is not None else None,
            init_h=_num(self.cset.heuristic(self.task.initial)),
            collections=len(self.cset),
        )

    def heuristic_is_perfect(self) -> bool:
        """True when some collection already yields the exact goal distance everywhere."""
        if self.sample is not None and self.sample.unsolvable:
            return True
        all_vars = tuple(range(self.task.num_vars))
        full = tuple(op.cost for op in self.task.operators)
        return any(p.pattern == all_vars and not p.partial and p.op_costs == full
                   for c in self.cset for p in c.pdbs)

    # -- phases

    def seed_phase(self) -> CollectionSet:
        t0 = self.clock.now()
        if self.sample is None:
            self.sample = self.evaluator.draw(self.cset)
        largest = None
        everything = pattern_size(self.task, range(self.task.num_vars))
        for order, name in ((DECREASING, "nfd"), (INCREASING, "nfi")):
            phase_start = self.clock.now()
            resampled_before = self._resample_total()
            S = self.config.seed_size_start
            while True:
                spent = self.clock.now() - phase_start - (self._resample_total() - resampled_before)
                if spent >= self.config.seed_phase_budget or self.out_of_budget():
                    break
                if self.heuristic_is_perfect():
                    break
                attempt_start = self.clock.now()
                resample_mark = self._resample_total()
                patterns = next_fit_pack(self.task, order, S, self.rng, self.graph)
                collection = self._new_collection(patterns, name, {"S": S}) if patterns else None
                accepted = self._offer(collection)
                if accepted:
                    self.cset = prune_dominated(self.cset, self.sample)
                    largest = S if largest is None else max(largest, S)
                elapsed = self.clock.now() - attempt_start - (self._resample_total() - resample_mark)
                self._log("seed", name, {"S": S}, elapsed, accepted, collection)
                if everything < S:
                    break  # every larger limit packs all variables into one identical bin
                S *= self.config.seed_size_scale
        self.size_limit_seed = largest if largest is not None else self.config.seed_size_start
        self.phase_times["seed"] = self.clock.now() - t0
        return self.cset

    def adaptive_construct(self) -> CollectionSet:
        t0 = self.clock.now()
        if self.sample is None:
            self.sample = self.evaluator.draw(self.cset)
        cfg = self.config
        choices = size_choices(self.size_limit_seed, cfg.size_set, cfg.size_filter_factor)
        self.s_bandit = BanditState.over(choices)
        limits = GamerLimits(cfg.max_entries, cfg.gamer_candidate_time, cfg.gamer_iteration_cap,
                             cfg.sample_states, cfg.sample_time)
        stalled = 0
        while not self.out_of_budget() and self.algorithms.arms:
            if self.heuristic_is_perfect():
                break
            if cfg.max_stalled_attempts is not None and stalled >= cfg.max_stalled_attempts:
                break
            arm = ucb1_select(self.algorithms)
            algorithm = self.algorithms.arms[arm].label
            attempt_start = self.clock.now()
            resample_mark = self._resample_total()
            if algorithm == "cbp":
                ni, si = ucb1_select(self.n_bandit), ucb1_select(self.s_bandit)
                N, S = self.n_bandit.arms[ni].label, self.s_bandit.arms[si].label
                params = {"N": N, "S": S}
                patterns = cbp_pack(self.task, N, S, self.rng, self.graph)
                collection = self._new_collection(patterns, "cbp", params) if patterns else None
                accepted = self._offer(collection)
                elapsed = self.clock.now() - attempt_start - (self._resample_total() - resample_mark)
                update_bandit(self.n_bandit, ni, elapsed, accepted)
                update_bandit(self.s_bandit, si, elapsed, accepted)
            else:
                step = gamer_style_step(self.task, self.gamer, self.rng, self.clock, limits,
                                        self.out_of_budget, self.graph)
                params = {"status": step.status, "candidates": step.candidates_evaluated}
                collection = None
                if step.status == NEW_PATTERN:
                    collection = PdbCollection((step.pdb,), "gamer", self.next_seq, {})
                    self.next_seq += 1
                accepted = self._offer(collection)
                elapsed = self.clock.now() - attempt_start - (self._resample_total() - resample_mark)
            update_bandit(self.algorithms, arm, elapsed, accepted)
            if algorithm == "gamer" and step.status == TERMINATED:
                self.algorithms.remove("gamer")
            self._log("adaptive", algorithm, params, elapsed, accepted, collection)
            stalled = 0 if accepted else stalled + 1
        self.phase_times["adaptive"] = self.clock.now() - t0
        return self.cset

    def finalize_collections(self) -> CollectionSet:
        t0 = self.clock.now()
        if self.sample is None:
            self.sample = self.evaluator.draw(self.cset)
        resumed = []
        for ci, collection in enumerate(self.cset):
            pdbs = list(collection.pdbs)
            changed = False
            for k, pdb in enumerate(pdbs):
                if not pdb.resumable or self.out_of_budget():
                    continue
                spare = (self.config.construction_memory - self.memory_used()) // ENTRY_BYTES
                before = self.clock.now()
                pdbs[k] = resume_pdb(pdb, self.remaining_time(), self.clock,
                                     max_entries=pdb.num_entries + max(spare, 0))
                changed = True
                self.audit.record(phase="finalize", algorithm="resume", params={},
                                  elapsed=self.clock.now() - before, accepted=not pdbs[k].partial,
                                  patterns=[list(pdb.pattern)], creation_seq=collection.creation_seq,
                                  init_h=None, collections=len(self.cset))
            if changed:
                resumed.append((ci, PdbCollection(tuple(pdbs), collection.provenance,
                                                  collection.creation_seq, collection.params)))
        for ci, collection in resumed:
            self.cset.collections[ci] = collection
        self.sample.refresh(self.cset)
        self.cset = prune_dominated(self.cset, self.sample)
        self.memory_used()
        self.phase_times["finalize"] = self.clock.now() - t0
        return self.cset

    def run(self) -> ConstructionResult:
        self.seed_phase()
        self.adaptive_construct()
        self.finalize_collections()
        log.info("construction finished: %d collections, h(s0)=%s", len(self.cset),
                 self.cset.heuristic(self.task.initial))
        return ConstructionResult(self.cset, self.sample, self.audit, self.size_limit_seed,
                                  self.algorithms, self.n_bandit, self.s_bandit,
                                  dict(self.phase_times), self.peak_memory)


def construct_heuristic(task: SasTask, config: ConstructionConfig | None = None,
                        clock: Clock | None = None) -> ConstructionResult:
    return HeuristicBuilder(task, config, clock).run()
