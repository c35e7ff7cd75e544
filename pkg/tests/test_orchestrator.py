import math
import random

import pytest

from cpcplan.clock import VirtualClock
from cpcplan.orchestrator import (
    BanditArm, BanditState, ConstructionConfig, HeuristicBuilder, construct_heuristic, size_choices,
    ucb1_score, ucb1_select, update_bandit,
)
from cpcplan.pdb import PdbCollection, build_pdb
from cpcplan.sas import parse_sas_file

import oracles
from helpers import FIXTURES, make_task, random_task, toy_task

SMALL = dict(seed_phase_budget=0.05, construction_time=0.2, sample_states=100, seed_size_start=4,
             size_set=(10, 100, 1000), size_filter_factor=10)


def test_ucb1_worked_example():
    bandit = BanditState([BanditArm(0, 1.0, 2.0), BanditArm(1, 0.0, 8.0)], 10.0)
    assert ucb1_score(bandit.arms[0], 10.0) == pytest.approx(0.5 + math.sqrt(math.log(10)), abs=1e-9)
    assert ucb1_score(bandit.arms[0], 10.0) == pytest.approx(2.01743, abs=1e-5)
    assert ucb1_score(bandit.arms[1], 10.0) == pytest.approx(0.75872, abs=1e-5)
    assert ucb1_select(bandit) == 0


def test_ucb1_unpulled_and_ties():
    bandit = BanditState([BanditArm("a", 5.0, 1.0), BanditArm("b"), BanditArm("c")], 1.0)
    assert ucb1_select(bandit) == 1
    same = BanditState([BanditArm(i, 1.0, 2.0) for i in range(3)], 6.0)
    assert ucb1_select(same) == 0
    with pytest.raises(ValueError):
        ucb1_select(BanditState([]))


def test_ucb1_bonus_zero_below_one_second():
    bandit = BanditState([BanditArm(0, 0.0, 0.5), BanditArm(1, 0.0, 0.5)], 1.0)
    assert ucb1_score(bandit.arms[0], 1.0) == 0.0
    assert ucb1_select(bandit) == 0


def test_update_bandit():
    bandit = BanditState.over(["x", "y"])
    update_bandit(bandit, 0, 5.0, True)
    assert bandit.arms[0].mean_reward == pytest.approx(0.2)
    update_bandit(bandit, 1, 0.0, False)
    assert bandit.arms[1].pulled_time == 0.001
    assert bandit.arms[1].total_reward == 0.0
    rng = random.Random(0)
    for _ in range(200):
        update_bandit(bandit, rng.randrange(2), rng.random() * 3, rng.random() < 0.5)
    assert bandit.total_time == pytest.approx(sum(a.pulled_time for a in bandit.arms), abs=1e-9)
    bandit.remove("x")
    assert bandit.total_time == pytest.approx(bandit.arms[0].pulled_time, abs=1e-9)


def test_size_choices_filter():
    assert size_choices(10**8) == [10**9, 10**10, 10**11, 10**12]
    assert size_choices(10**3) == [10**9]
    assert len(size_choices(10**40)) == 27


def test_config_validation():
    with pytest.raises(ValueError):
        ConstructionConfig(construction_time=-1)
    with pytest.raises(ValueError):
        ConstructionConfig(size_set=())


def test_seed_phase_zero_budget():
    cfg = ConstructionConfig(seed_phase_budget=0.0, construction_time=0.0)
    builder = HeuristicBuilder(toy_task(), cfg, VirtualClock())
    assert len(builder.seed_phase()) == 0
    assert builder.size_limit_seed == 10**8


def test_zero_construction_time_gives_empty_set():
    res = construct_heuristic(toy_task(), ConstructionConfig(construction_time=0.0), VirtualClock())
    assert len(res.collections) == 0
    assert res.collections.heuristic(toy_task().initial) == 0


def test_seed_phase_accepts_on_toy():
    cfg = ConstructionConfig(seed=1, seed_phase_budget=1.0, construction_time=5.0, seed_size_start=4,
                             sample_states=50)
    builder = HeuristicBuilder(toy_task(), cfg, VirtualClock())
    builder.seed_phase()
    assert len(builder.cset) >= 1
    assert builder.cset.heuristic(toy_task().initial) > 0
    accepted = [r for r in builder.audit.records if r["accepted"]]
    assert accepted and builder.size_limit_seed == max(r["params"]["S"] for r in accepted)


def test_pipeline_admissible_and_consistent():
    for k in range(8):
        task = random_task(random.Random(300 + k), costs=(1, 4))
        res = construct_heuristic(task, ConstructionConfig(seed=k, **SMALL), VirtualClock())
        h = res.collections.heuristic
        dist = oracles.goal_distances(task)
        for s in oracles.all_states(task):
            assert h(s) <= dist.get(s, math.inf)
            for i, t in task.successors(s):
                assert h(s) <= task.operators[i].cost + h(t)


def test_deterministic_runs():
    task = random_task(random.Random(42))
    logs = []
    for _ in range(2):
        res = construct_heuristic(task, ConstructionConfig(seed=7, **SMALL), VirtualClock())
        logs.append((res.audit.to_jsonl(), [c.patterns for c in res.collections]))
    assert logs[0] == logs[1]


def test_audit_records_every_final_collection_as_accepted():
    for k in range(5):
        task = random_task(random.Random(400 + k), costs=(1, 3))
        res = construct_heuristic(task, ConstructionConfig(seed=k, **SMALL), VirtualClock())
        accepted = {r["creation_seq"] for r in res.audit.records
                    if r["accepted"] and r["phase"] != "finalize"}
        for c in res.collections:
            assert c.creation_seq in accepted


def test_gamer_arm_removed_after_termination():
    task = toy_task()
    cfg = ConstructionConfig(seed=0, seed_phase_budget=0.0, construction_time=0.05, sample_states=20,
                             max_stalled_attempts=20)
    res = construct_heuristic(task, cfg, VirtualClock())
    gamer = [r for r in res.audit.records if r["algorithm"] == "gamer"]
    assert gamer and gamer[-1]["params"]["status"] == "terminated"
    assert res.algorithm_bandit.labels == ["cbp"]
    after = res.audit.records[res.audit.records.index(gamer[-1]) + 1:]
    assert all(r["algorithm"] == "cbp" for r in after)


def test_finalize_completes_partial_pdbs():
    # chain over four 4-valued variables; the entry cap forces partial PDBs
    ops = [(f"inc{v}_{k}", {v: k}, {v: k + 1}, 1 + v) for v in range(4) for k in range(3)]
    task = make_task([4] * 4, ops, [0] * 4, {v: 3 for v in range(4)})
    builder = HeuristicBuilder(task, ConstructionConfig(seed=0, max_entries=300, pdb_time_budget=0.0,
                                                        **SMALL), VirtualClock())
    builder.sample = builder.evaluator.draw(builder.cset)
    partial = build_pdb(task, (0, 1, 2, 3), None, 300, 0.0, builder.clock)
    assert partial.partial
    builder.cset.append(PdbCollection((partial,), "test", 0))
    builder.config.construction_memory = 1 << 30
    builder.deadline = math.inf
    builder.finalize_collections()
    done = builder.cset[0].pdbs[0]
    exact = build_pdb(task, (0, 1, 2, 3))
    assert not done.partial
    for s in oracles.all_states(task):
        assert done.lookup(s) == exact.lookup(s)
        assert done.lookup(s) >= partial.lookup(s)



def test_adaptive_phase_accepts_cbp_and_gamer_without_seeding():
    task = parse_sas_file(FIXTURES / "gripper.sas")
    cfg = ConstructionConfig(seed=0, seed_phase_budget=0.0, construction_time=3.0, size_set=(10, 100),
                             seed_size_start=4, size_filter_factor=10, sample_states=500)
    res = construct_heuristic(task, cfg, VirtualClock())
    accepted = {r["algorithm"] for r in res.audit.records if r["accepted"]}
    assert {"cbp", "gamer"} <= accepted
    assert res.collections.heuristic(task.initial) > 0
