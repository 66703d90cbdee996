"""Object roles, goal hints and canonical abstraction over three truth values.

A role is the frozenset of unary predicate names an object satisfies. The
canonical abstraction summarises every predicate over tuples of roles: 1 when
the predicate holds for every object tuple drawn from the role groups, 0 when
it holds for none, and 0.5 otherwise.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple

from ghnplan.pddl import Atom, ConcreteState

Role = FrozenSet[str]

ZERO, HALF, ONE = 0.0, 0.5, 1.0

GOAL_PREFIX = "goal-"
DONE_PREFIX = "done-"


def role_key(role: Role) -> Tuple[str, ...]:
    """Canonical sort key; roles are ordered lexicographically by sorted members."""
    return tuple(sorted(role))


def role_str(role: Role) -> str:
    return "{" + ",".join(sorted(role)) + "}"


def goal_name(pred: str, index: Optional[int] = None) -> str:
    return f"{GOAL_PREFIX}{pred}" if index is None else f"{GOAL_PREFIX}{pred}-{index}"


def done_name(pred: str, index: Optional[int] = None) -> str:
    return f"{DONE_PREFIX}{pred}" if index is None else f"{DONE_PREFIX}{pred}-{index}"


def hint_predicates(pred: str, arity: int) -> Dict[str, int]:
    """All hint predicate names (with arity) derivable from one domain predicate."""
    out = {goal_name(pred): arity, done_name(pred): arity}
    for i in range(1, arity + 1):
        out[goal_name(pred, i)] = 1
        out[done_name(pred, i)] = 1
    return out


@dataclass(frozen=True)
class RolePartition:
    assignment: Mapping[str, Role]
    groups: Mapping[Role, Tuple[str, ...]]

    @property
    def roles(self) -> Tuple[Role, ...]:
        return tuple(sorted(self.groups, key=role_key))

    def role(self, obj: str) -> Role:
        return self.assignment[obj]


@dataclass(frozen=True)
class HintedState:
    base: ConcreteState
    goal: FrozenSet[Atom]
    hint_atoms: FrozenSet[Atom]
    atoms: FrozenSet[Atom] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "atoms", self.base.atoms | self.hint_atoms)

    def strip(self) -> ConcreteState:
        return self.base


@dataclass(frozen=True)
class AbstractState:
    roles: Tuple[Role, ...]
    values: Mapping[Tuple[str, Tuple[Role, ...]], float]

    def value(self, pred: str, roles: Sequence[Role]) -> float:
        return self.values.get((pred, tuple(roles)), ZERO)

    def dump(self) -> str:
        """Deterministic ``(pred role-tuple value)`` listing, one entry per line."""
        rows = []
        for (pred, roles), val in self.values.items():
            rows.append(((pred, tuple(role_key(r) for r in roles)), pred, roles, val))
        rows.sort(key=lambda row: row[0])
        lines = []
        for _, pred, roles, val in rows:
            args = " ".join(role_str(r) for r in roles)
            text = {ONE: "1", HALF: "1/2"}[val]
            lines.append(f"({pred} {args} {text})")
        return "\n".join(lines) + ("\n" if lines else "")


def _atoms_of(state) -> FrozenSet[Atom]:
    return state.atoms


def compute_roles(state, objects: Iterable[str], unary_vocab: Optional[Iterable[str]] = None) -> RolePartition:
    """Group objects by the set of unary predicates they satisfy in ``state``.

    ``unary_vocab`` restricts which unary predicates count; ``None`` means all
    unary atoms of the state. Objects with no unary atom get the empty role.
    """
    vocab = None if unary_vocab is None else frozenset(unary_vocab)
    members: Dict[str, set] = {o: set() for o in objects}
    for atom in _atoms_of(state):
        if len(atom) == 2 and (vocab is None or atom[0] in vocab):
            obj = atom[1]
            if obj in members:
                members[obj].add(atom[0])
    assignment = {o: frozenset(preds) for o, preds in members.items()}
    groups: Dict[Role, list] = defaultdict(list)
    for obj in sorted(assignment):
        groups[assignment[obj]].append(obj)
    return RolePartition(assignment, {r: tuple(objs) for r, objs in groups.items()})


def add_goal_hints(state: ConcreteState, goal: Iterable[Atom]) -> HintedState:
    """Add goal/done marker atoms for ``goal`` to ``state``.

    For every goal atom p(o1..ok): goal-p(o1..ok) and goal-p-i(oi); done-p(o1..ok)
    when the atom holds; done-p-i(o) when every goal atom of p with o at index i
    holds.
    """
    goal = frozenset(goal)
    atoms = state.atoms
    hints = set()
    index_done: Dict[Tuple[str, int, str], bool] = {}
    for atom in goal:
        pred, args = atom[0], atom[1:]
        holds = atom in atoms
        hints.add((goal_name(pred), *args))
        if holds:
            hints.add((done_name(pred), *args))
        for i, obj in enumerate(args, start=1):
            hints.add((goal_name(pred, i), obj))
            key = (pred, i, obj)
            index_done[key] = index_done.get(key, True) and holds
    for (pred, i, obj), done in index_done.items():
        if done:
            hints.add((done_name(pred, i), obj))
    return HintedState(state, goal, frozenset(hints))


def refresh_hints(hinted: HintedState, new_base: ConcreteState) -> HintedState:
    """Recompute hint atoms for a successor state under the same goal."""
    if new_base == hinted.base:
        return hinted
    return add_goal_hints(new_base, hinted.goal)


def abstract(state, partition: RolePartition, predicate_vocab: Mapping[str, int]) -> AbstractState:
    """Canonical abstraction of ``state`` over the role groups of ``partition``.

    ``predicate_vocab`` maps predicate names to arities; atoms of other
    predicates are ignored. Zero entries are not stored.
    """
    assignment = partition.assignment
    sizes = {r: len(objs) for r, objs in partition.groups.items()}
    counts: Dict[Tuple[str, Tuple[Role, ...]], int] = defaultdict(int)
    for atom in _atoms_of(state):
        pred = atom[0]
        arity = predicate_vocab.get(pred)
        if arity is None or arity != len(atom) - 1:
            continue
        try:
            roles = tuple(assignment[o] for o in atom[1:])
        except KeyError:
            continue
        counts[(pred, roles)] += 1
    values = {}
    for key, count in counts.items():
        full = 1
        for r in key[1]:
            full *= sizes[r]
        values[key] = ONE if count == full else HALF
    return AbstractState(partition.roles, values)
