from pathlib import Path

from cpcplan.sas import Operator, SasTask, Variable, parse_sas_file

FIXTURES = Path(__file__).parent / "fixtures"


def toy_task():
    return parse_sas_file(FIXTURES / "toy.sas")


def make_task(domains, ops, init, goal, name="t"):
    """``ops`` is a list of (name, pre dict, eff dict, cost)."""
    variables = tuple(Variable(f"v{i}", d) for i, d in enumerate(domains))
    operators = tuple(Operator.make(n, pre, eff, c) for n, pre, eff, c in ops)
    return SasTask(variables, operators, tuple(init), tuple(sorted(goal.items())), name=name)


def random_task(rng, n_vars=(4, 8), doms=(2, 4), n_ops=(5, 15), costs=(0, 5), name="rand"):
    n = rng.randint(*n_vars)
    domains = [rng.randint(*doms) for _ in range(n)]
    ops = []
    for k in range(rng.randint(*n_ops)):
        eff_vars = rng.sample(range(n), rng.randint(1, min(2, n)))
        pre_vars = rng.sample(range(n), rng.randint(0, min(2, n)))
        pre = {v: rng.randrange(domains[v]) for v in pre_vars}
        eff = {v: rng.randrange(domains[v]) for v in eff_vars}
        ops.append((f"op{k}", pre, eff, rng.randint(*costs)))
    init = [rng.randrange(d) for d in domains]
    goal_vars = rng.sample(range(n), rng.randint(1, min(3, n)))
    goal = {v: rng.randrange(domains[v]) for v in goal_vars}
    return make_task(domains, ops, init, goal, name=name)
