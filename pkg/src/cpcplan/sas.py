"""SAS+ task model, the Fast Downward ``.sas`` reader/writer and the causal graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

State = tuple  # one value per variable, indexed by variable id


class SasError(Exception):
    """Base class for problems with an input task."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SasSyntaxError(SasError):
    pass


class UnsupportedFeatureError(SasError):
    pass


class SasValidationError(SasError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    domain_size: int
    value_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class Operator:
    name: str
    pre: tuple[tuple[int, int], ...]
    eff: tuple[tuple[int, int], ...]
    cost: int = 1

    @classmethod
    def make(cls, name: str, pre: Mapping[int, int], eff: Mapping[int, int], cost: int = 1) -> "Operator":
        return cls(name, tuple(sorted(pre.items())), tuple(sorted(eff.items())), cost)

    @cached_property
    def pre_dict(self) -> dict[int, int]:
        return dict(self.pre)

    @cached_property
    def eff_dict(self) -> dict[int, int]:
        return dict(self.eff)

    @cached_property
    def eff_vars(self) -> frozenset[int]:
        return frozenset(v for v, _ in self.eff)

    def applicable(self, state: Sequence[int]) -> bool:
        for v, val in self.pre:
            if state[v] != val:
                return False
        return True


@dataclass(frozen=True)
class SasTask:
    variables: tuple[Variable, ...]
    operators: tuple[Operator, ...]
    initial: State
    goal: tuple[tuple[int, int], ...]
    name: str = field(default="task", compare=False)

    def __post_init__(self):
        validate_task(self)

    @cached_property
    def domain_sizes(self) -> tuple[int, ...]:
        return tuple(v.domain_size for v in self.variables)

    @cached_property
    def goal_vars(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.goal)

    @cached_property
    def goal_dict(self) -> dict[int, int]:
        return dict(self.goal)

    @cached_property
    def operator_index(self) -> dict[str, int]:
        index: dict[str, int] = {}
        for i, op in enumerate(self.operators):
            index.setdefault(op.name, i)
        return index

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def is_goal(self, state: Sequence[int]) -> bool:
        return all(state[v] == val for v, val in self.goal)

    def applicable_operators(self, state: Sequence[int]) -> list[int]:
        return [i for i, op in enumerate(self.operators) if op.applicable(state)]

    def successors(self, state: State) -> Iterable[tuple[int, State]]:
        for i, op in enumerate(self.operators):
            if op.applicable(state):
                yield i, _apply(state, op)


def _apply(state: State, op: Operator) -> State:
    s = list(state)
    for v, val in op.eff:
        s[v] = val
    return tuple(s)


def apply_operator(task: SasTask, state: State, op: Operator) -> State | None:
    """Successor of ``state`` under ``op``, or ``None`` when ``op`` is inapplicable."""
    if not op.applicable(state):
        return None
    return _apply(state, op)


def validate_task(task: SasTask) -> None:
    n = len(task.variables)
    doms = [v.domain_size for v in task.variables]
    for i, var in enumerate(task.variables):
        if var.domain_size < 1:
            raise SasValidationError(f"variable {i} ({var.name}) has empty domain")

    def check(assignment, what):
        seen = set()
        for v, val in assignment:
            if not 0 <= v < n:
                raise SasValidationError(f"{what}: unknown variable {v}")
            if v in seen:
                raise SasValidationError(f"{what}: variable {v} assigned twice")
            seen.add(v)
            if not 0 <= val < doms[v]:
                raise SasValidationError(
                    f"{what}: value {val} out of range for variable {v} (domain size {doms[v]})")

    if len(task.initial) != n:
        raise SasValidationError(f"initial state assigns {len(task.initial)} of {n} variables")
    check(enumerate(task.initial), "initial state")
    if not task.goal:
        raise SasValidationError("goal is empty")
    check(task.goal, "goal")
    for op in task.operators:
        if not op.eff:
            raise SasValidationError(f"operator '{op.name}' has no effect")
        if op.cost < 0:
            raise SasValidationError(f"operator '{op.name}' has negative cost {op.cost}")
        check(op.pre, f"operator '{op.name}' precondition")
        check(op.eff, f"operator '{op.name}' effect")


# ---------------------------------------------------------------------------
# .sas reading and writing


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    @property
    def lineno(self) -> int:
        return self.pos + 1

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise SasSyntaxError("unexpected end of file", self.lineno)
        line = self.lines[self.pos].strip()
        self.pos += 1
        return line

    def expect(self, word: str) -> None:
        line = self.next()
        if line != word:
            raise SasSyntaxError(f"expected '{word}', found '{line}'", self.pos)

    def ints(self, count: int | None = None) -> list[int]:
        line = self.next()
        try:
            values = [int(x) for x in line.split()]
        except ValueError:
            raise SasSyntaxError(f"expected integers, found '{line}'", self.pos) from None
        if count is not None and len(values) != count:
            raise SasSyntaxError(f"expected {count} integers, found '{line}'", self.pos)
        return values

    def int(self) -> int:
        return self.ints(1)[0]


def parse_sas(text: str, name: str = "task") -> SasTask:
    """Parse the text of a Fast Downward translator output file (version 3)."""
    src = _Lines(text)
    if not any(line.strip() for line in src.lines):
        raise SasSyntaxError("empty task file", 1)

    src.expect("begin_version")
    version = src.int()
    if version != 3:
        raise UnsupportedFeatureError(f"unsupported file version {version}", src.pos)
    src.expect("end_version")

    src.expect("begin_metric")
    metric_line = src.pos + 1
    metric = src.int()
    if metric not in (0, 1):
        raise UnsupportedFeatureError(f"unsupported metric {metric}", metric_line)
    use_costs = metric == 1
    src.expect("end_metric")

    variables = []
    for _ in range(src.int()):
        src.expect("begin_variable")
        var_name = src.next()
        layer_line = src.pos + 1
        if src.int() != -1:
            raise UnsupportedFeatureError(f"derived variable '{var_name}' (axioms are not supported)",
                                          layer_line)
        size = src.int()
        values = tuple(src.next() for _ in range(size))
        src.expect("end_variable")
        variables.append(Variable(var_name, size, values))

    # mutex groups carry no information the planner uses
    for _ in range(src.int()):
        src.expect("begin_mutex_group")
        for _ in range(src.int()):
            src.ints(2)
        src.expect("end_mutex_group")

    src.expect("begin_state")
    initial = tuple(src.int() for _ in variables)
    src.expect("end_state")

    src.expect("begin_goal")
    goal = [tuple(src.ints(2)) for _ in range(src.int())]
    src.expect("end_goal")

    operators = []
    for _ in range(src.int()):
        src.expect("begin_operator")
        op_name = src.next()
        pre: dict[int, int] = {}
        for _ in range(src.int()):
            var, val = src.ints(2)
            pre[var] = val
        eff: dict[int, int] = {}
        for _ in range(src.int()):
            line_no = src.pos + 1
            fields = src.ints()
            if not fields:
                raise SasSyntaxError("empty effect line", line_no)
            if fields[0] != 0:
                raise UnsupportedFeatureError(f"conditional effect in operator '{op_name}'", line_no)
            if len(fields) != 4:
                raise SasSyntaxError("malformed effect line", line_no)
            _, var, old, new = fields
            if var in eff:
                raise SasValidationError(f"operator '{op_name}' sets variable {var} twice", line_no)
            if old != -1:
                if pre.get(var, old) != old:
                    raise SasValidationError(
                        f"operator '{op_name}' has conflicting preconditions on variable {var}", line_no)
                pre[var] = old
            eff[var] = new
        cost = src.int()
        src.expect("end_operator")
        operators.append(Operator.make(op_name, pre, eff, cost if use_costs else 1))

    axioms_line = src.pos + 1
    if src.int() != 0:
        raise UnsupportedFeatureError("axioms are not supported", axioms_line)

    try:
        return SasTask(tuple(variables), tuple(operators), initial, tuple(goal), name=name)
    except SasValidationError as exc:
        raise SasValidationError(str(exc)) from None


def parse_sas_file(path: str | Path) -> SasTask:
    path = Path(path)
    return parse_sas(path.read_text(), name=path.stem)


def format_sas(task: SasTask) -> str:
    """Deterministic version-3 rendering of ``task``; also serves as a debug dump.

    All operator preconditions are written as prevail conditions or effect
    preconditions, so ``parse_sas(format_sas(t)) == t``.
    """
    out = ["begin_version", "3", "end_version", "begin_metric", "1", "end_metric",
           str(len(task.variables))]
    for var in task.variables:
        names = var.value_names or tuple(f"Atom {var.name}={i}" for i in range(var.domain_size))
        out += ["begin_variable", var.name, "-1", str(var.domain_size), *names, "end_variable"]
    out += ["0", "begin_state", *map(str, task.initial), "end_state",
            "begin_goal", str(len(task.goal)), *(f"{v} {val}" for v, val in task.goal), "end_goal",
            str(len(task.operators))]
    for op in task.operators:
        eff_vars = op.eff_vars
        prevail = [(v, val) for v, val in op.pre if v not in eff_vars]
        out += ["begin_operator", op.name, str(len(prevail))]
        out += [f"{v} {val}" for v, val in prevail]
        out.append(str(len(op.eff)))
        for v, val in op.eff:
            out.append(f"0 {v} {op.pre_dict.get(v, -1)} {val}")
        out += [str(op.cost), "end_operator"]
    out.append("0")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# causal graph


@dataclass(frozen=True)
class CausalGraph:
    successors: tuple[frozenset[int], ...]
    related: tuple[frozenset[int], ...]

    @property
    def arcs(self) -> set[tuple[int, int]]:
        return {(u, v) for u, succ in enumerate(self.successors) for v in succ}


def build_causal_graph(task: SasTask) -> CausalGraph:
    """Arc (u, v) iff some operator sets v and mentions u in its precondition or effect."""
    succ: list[set[int]] = [set() for _ in task.variables]
    for op in task.operators:
        sources = {v for v, _ in op.pre} | op.eff_vars
        for v in op.eff_vars:
            for u in sources:
                if u != v:
                    succ[u].add(v)
    related = [set(s) for s in succ]
    for u, s in enumerate(succ):
        for v in s:
            related[v].add(u)
    return CausalGraph(tuple(frozenset(s) for s in succ), tuple(frozenset(r) for r in related))


def causally_related_vars(graph: CausalGraph, variables: Iterable[int]) -> set[int]:
    """Variables outside ``variables`` linked to a member by an arc in either direction."""
    variables = set(variables)
    out: set[int] = set()
    for v in variables:
        out |= graph.related[v]
    return out - variables
