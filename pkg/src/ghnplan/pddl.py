"""STRIPS + typing PDDL: parsing, grounding and a blackbox simulator.

Atoms are plain tuples ``(predicate, arg1, ..., argk)``. Object types are
compiled into static unary atoms ``(type, obj)`` that appear in every state
and are never touched by an effect.
"""

from __future__ import annotations

import hashlib
import itertools
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from ghnplan.errors import (
    ArityError,
    NegativeGoal,
    NotApplicable,
    ParseError,
    UnknownSymbol,
    UnsupportedFeature,
)

Atom = Tuple[str, ...]

SUPPORTED_REQUIREMENTS = frozenset({":strips", ":typing"})
HINT_PREFIXES = ("goal-", "done-")
ROOT_TYPE = "object"


# ---------------------------------------------------------------------------
# S-expression reader


class Sym(str):
    """A symbol that remembers where it was read."""

    line: int
    column: int

    def __new__(cls, text, line=0, column=0):
        obj = super().__new__(cls, text)
        obj.line = line
        obj.column = column
        return obj


class SList(list):
    """A parenthesised list with the position of its opening bracket."""

    def __init__(self, items=(), line=0, column=0):
        super().__init__(items)
        self.line = line
        self.column = column


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text: str) -> Iterator[Sym]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        for match in _TOKEN.finditer(line):
            yield Sym(match.group(), lineno, match.start() + 1)


def read_sexpr(text: str) -> SList:
    """Read exactly one top-level s-expression."""
    stack: List[SList] = []
    result = None
    last = Sym("", 1, 1)
    for tok in _tokenize(text):
        last = tok
        if result is not None:
            raise ParseError("trailing input after top-level expression", tok.line, tok.column)
        if tok == "(":
            stack.append(SList(line=tok.line, column=tok.column))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", tok.line, tok.column)
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                result = done
        else:
            if not stack:
                raise ParseError(f"unexpected symbol {tok!r} outside expression", tok.line, tok.column)
            stack[-1].append(tok)
    if stack:
        open_ = stack[-1]
        raise ParseError("unexpected end of input, missing ')'", open_.line, open_.column)
    if result is None:
        raise ParseError("empty input", last.line, last.column)
    return result


def _pos(node):
    return getattr(node, "line", None), getattr(node, "column", None)


def _expect_list(node, what):
    if not isinstance(node, list):
        raise ParseError(f"expected {what}, got symbol {node!r}", *_pos(node))
    return node


def _expect_sym(node, what):
    if isinstance(node, list):
        raise ParseError(f"expected {what}, got a list", *_pos(node))
    return node


def _parse_typed_list(items: Sequence, typed: bool = True) -> List[Tuple[str, str]]:
    """``a b - t c`` -> [(a, t), (b, t), (c, object)]."""
    out: List[Tuple[str, str]] = []
    pending: List[Sym] = []
    i = 0
    while i < len(items):
        tok = _expect_sym(items[i], "name")
        if tok == "-":
            if i + 1 >= len(items):
                raise ParseError("type expected after '-'", tok.line, tok.column)
            type_tok = items[i + 1]
            if isinstance(type_tok, list):
                raise UnsupportedFeature("'either' types are not supported", *_pos(type_tok))
            if not pending:
                raise ParseError("'-' without preceding names", tok.line, tok.column)
            out.extend((str(name), str(type_tok)) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(tok)
        i += 1
    out.extend((str(name), ROOT_TYPE) for name in pending)
    return out


# ---------------------------------------------------------------------------
# Domain model


@dataclass(frozen=True)
class Predicate:
    name: str
    param_types: Tuple[str, ...]
    is_type: bool = False

    @property
    def arity(self) -> int:
        return len(self.param_types)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: Tuple[Tuple[str, str], ...]
    precondition: Tuple[Atom, ...]
    add: Tuple[Atom, ...]
    delete: Tuple[Atom, ...]


@dataclass(frozen=True)
class DomainModel:
    name: str
    requirements: Tuple[str, ...]
    types: Tuple[Tuple[str, str], ...]
    constants: Tuple[Tuple[str, str], ...]
    predicates: Tuple[Predicate, ...]
    action_schemas: Tuple[ActionSchema, ...]

    def predicate(self, name: str) -> Optional[Predicate]:
        for pred in self.predicates:
            if pred.name == name:
                return pred
        return None

    @property
    def type_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.types)

    @property
    def unary_predicates(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.predicates if p.arity == 1)

    @property
    def binary_predicates(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.predicates if p.arity == 2)

    def supertypes(self, type_name: str) -> Tuple[str, ...]:
        """``type_name`` followed by its ancestors, excluding the root type."""
        parents = dict(self.types)
        chain = []
        seen = set()
        current = type_name
        while current != ROOT_TYPE and current not in seen:
            chain.append(current)
            seen.add(current)
            current = parents.get(current, ROOT_TYPE)
        return tuple(chain)


def _parse_atom(node, variables: Dict[str, str], constants: Dict[str, str], domain_preds, what):
    node = _expect_list(node, what)
    if not node:
        raise ParseError(f"empty {what}", *_pos(node))
    head = _expect_sym(node[0], "predicate name")
    low = head.lower()
    if low in ("=",):
        raise UnsupportedFeature("equality is not supported", head.line, head.column)
    if low in ("or", "imply", "exists", "forall", "when", "increase", "decrease", "assign"):
        raise UnsupportedFeature(f"'{head}' is not supported", head.line, head.column)
    pred = domain_preds.get(str(head))
    if pred is None:
        raise UnknownSymbol(f"unknown predicate {head!r}", head.line, head.column)
    args = []
    for arg in node[1:]:
        arg = _expect_sym(arg, "argument")
        if arg.startswith("?"):
            if str(arg) not in variables:
                raise UnknownSymbol(f"unbound variable {arg!r}", arg.line, arg.column)
        elif str(arg) not in constants:
            raise UnknownSymbol(f"unknown constant {arg!r}", arg.line, arg.column)
        args.append(str(arg))
    if len(args) != pred.arity:
        raise ParseError(
            f"predicate {head!r} expects {pred.arity} arguments, got {len(args)}", head.line, head.column
        )
    return (str(head), *args)


def _conjuncts(node) -> List:
    """Flatten ``(and a b ...)``; a bare atom is a one-element conjunction."""
    node = _expect_list(node, "formula")
    if not node:
        return []
    head = node[0]
    if isinstance(head, str) and head.lower() == "and":
        out = []
        for sub in node[1:]:
            out.extend(_conjuncts(sub))
        return out
    return [node]


def _is_not(node) -> bool:
    return isinstance(node, list) and len(node) >= 1 and isinstance(node[0], str) and node[0].lower() == "not"


def parse_domain(text: str) -> DomainModel:
    """Parse a STRIPS+typing domain; types become unary predicates."""
    root = read_sexpr(text)
    if len(root) < 2 or not isinstance(root[0], str) or root[0].lower() != "define":
        raise ParseError("expected (define (domain ...) ...)", *_pos(root))
    header = _expect_list(root[1], "(domain NAME)")
    if len(header) != 2 or not isinstance(header[0], str) or header[0].lower() != "domain":
        raise ParseError("expected (domain NAME)", *_pos(header))
    name = str(header[1])

    requirements: List[str] = []
    types: List[Tuple[str, str]] = []
    constants: List[Tuple[str, str]] = []
    raw_preds: List[Tuple[Sym, List[Tuple[str, str]]]] = []
    raw_actions: List[SList] = []

    for section in root[2:]:
        section = _expect_list(section, "domain section")
        if not section:
            raise ParseError("empty section", *_pos(section))
        key = _expect_sym(section[0], "section keyword")
        low = key.lower()
        if low == ":requirements":
            for req in section[1:]:
                req = _expect_sym(req, "requirement")
                if req.lower() not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeature(f"requirement {req} is not supported", req.line, req.column)
                requirements.append(req.lower())
        elif low == ":types":
            types.extend(_parse_typed_list(section[1:]))
        elif low == ":constants":
            constants.extend(_parse_typed_list(section[1:]))
        elif low == ":predicates":
            for decl in section[1:]:
                decl = _expect_list(decl, "predicate declaration")
                if not decl:
                    raise ParseError("empty predicate declaration", *_pos(decl))
                pname = _expect_sym(decl[0], "predicate name")
                raw_preds.append((pname, _parse_typed_list(decl[1:])))
        elif low == ":action":
            raw_actions.append(section)
        elif low in (":functions", ":derived", ":durative-action", ":axiom"):
            raise UnsupportedFeature(f"section {key} is not supported", key.line, key.column)
        else:
            raise ParseError(f"unknown domain section {key}", key.line, key.column)

    declared_types = {t for t, _ in types} | {ROOT_TYPE}
    for t, parent in types:
        if parent not in declared_types:
            raise UnknownSymbol(f"unknown parent type {parent!r}")
    type_list = [(t, p) for t, p in types if t != ROOT_TYPE]

    predicates: List[Predicate] = []
    seen_names = set()
    for pname, params in raw_preds:
        if len(params) not in (1, 2):
            raise ArityError(
                f"predicate {pname!r} has arity {len(params)}; only unary and binary are supported",
                pname.line,
                pname.column,
            )
        if str(pname).startswith(HINT_PREFIXES):
            raise ParseError(f"predicate {pname!r} uses a reserved hint prefix", pname.line, pname.column)
        if str(pname) in seen_names:
            raise ParseError(f"duplicate predicate {pname!r}", pname.line, pname.column)
        if str(pname) in declared_types:
            raise ParseError(f"predicate {pname!r} collides with a type name", pname.line, pname.column)
        for _, ptype in params:
            if ptype not in declared_types:
                raise UnknownSymbol(f"unknown type {ptype!r} in predicate {pname!r}", pname.line, pname.column)
        seen_names.add(str(pname))
        predicates.append(Predicate(str(pname), tuple(t for _, t in params)))
    for t, _ in sorted(type_list):
        if t.startswith(HINT_PREFIXES):
            raise ParseError(f"type {t!r} uses a reserved hint prefix")
        predicates.append(Predicate(t, (t,), is_type=True))
    pred_index = {p.name: p for p in predicates}
    const_map = dict(constants)
    for cname, ctype in constants:
        if ctype not in declared_types:
            raise UnknownSymbol(f"unknown type {ctype!r} for constant {cname!r}")

    schemas = []
    for section in raw_actions:
        schemas.append(_parse_action(section, pred_index, const_map, declared_types))
    names = [s.name for s in schemas]
    if len(set(names)) != len(names):
        raise ParseError("duplicate action names")

    return DomainModel(
        name=name,
        requirements=tuple(requirements),
        types=tuple(type_list),
        constants=tuple(constants),
        predicates=tuple(predicates),
        action_schemas=tuple(schemas),
    )


def _parse_action(section: SList, pred_index, const_map, declared_types) -> ActionSchema:
    if len(section) < 2:
        raise ParseError("action without name", *_pos(section))
    aname = _expect_sym(section[1], "action name")
    fields = {}
    i = 2
    while i < len(section):
        key = _expect_sym(section[i], "action keyword")
        if i + 1 >= len(section):
            raise ParseError(f"missing value for {key}", key.line, key.column)
        fields[key.lower()] = section[i + 1]
        if key.lower() not in (":parameters", ":precondition", ":effect"):
            raise ParseError(f"unknown action field {key}", key.line, key.column)
        i += 2
    params = _parse_typed_list(_expect_list(fields.get(":parameters", SList()), "parameter list"))
    for var, ptype in params:
        if not var.startswith("?"):
            raise ParseError(f"parameter {var!r} of {aname!r} must start with '?'", aname.line, aname.column)
        if ptype not in declared_types:
            raise UnknownSymbol(f"unknown type {ptype!r} in action {aname!r}", aname.line, aname.column)
    variables = dict(params)

    precondition = []
    if ":precondition" in fields:
        for lit in _conjuncts(fields[":precondition"]):
            if _is_not(lit):
                raise UnsupportedFeature("negative preconditions are not supported", *_pos(lit))
            precondition.append(_parse_atom(lit, variables, const_map, pred_index, "precondition atom"))
    add, delete = [], []
    if ":effect" in fields:
        for lit in _conjuncts(fields[":effect"]):
            target = add
            if _is_not(lit):
                if len(lit) != 2:
                    raise ParseError("malformed (not ...)", *_pos(lit))
                lit = lit[1]
                target = delete
            atom = _parse_atom(lit, variables, const_map, pred_index, "effect atom")
            if pred_index[atom[0]].is_type:
                raise UnsupportedFeature(f"type predicate {atom[0]!r} in effect of {aname!r}", *_pos(lit))
            target.append(atom)
    return ActionSchema(
        name=str(aname),
        parameters=tuple(params),
        precondition=tuple(precondition),
        add=tuple(add),
        delete=tuple(delete),
    )


def _typed_list_to_pddl(items: Sequence[Tuple[str, str]]) -> str:
    return " ".join(f"{n} - {t}" for n, t in items)


def _atom_to_pddl(atom: Atom) -> str:
    return "(" + " ".join(atom) + ")"


def domain_to_pddl(domain: DomainModel) -> str:
    """Render a domain back to PDDL text; parse(unparse(d)) == d."""
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append(f"  (:types {_typed_list_to_pddl(domain.types)})")
    if domain.constants:
        lines.append(f"  (:constants {_typed_list_to_pddl(domain.constants)})")
    declared = [p for p in domain.predicates if not p.is_type]
    if declared:
        lines.append("  (:predicates")
        for pred in declared:
            params = [(f"?a{i}", t) for i, t in enumerate(pred.param_types)]
            lines.append(f"    ({pred.name} {_typed_list_to_pddl(params)})")
        lines.append("  )")
    for schema in domain.action_schemas:
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({_typed_list_to_pddl(schema.parameters)})")
        pre = " ".join(_atom_to_pddl(a) for a in schema.precondition)
        lines.append(f"    :precondition (and {pre})")
        eff = [_atom_to_pddl(a) for a in schema.add] + [f"(not {_atom_to_pddl(a)})" for a in schema.delete]
        lines.append(f"    :effect (and {' '.join(eff)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Ground problem and simulator


@dataclass(frozen=True)
class ConcreteState:
    atoms: FrozenSet[Atom]

    def __contains__(self, atom) -> bool:
        return atom in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)

    def digest(self) -> str:
        """Stable, order-independent SHA-256 over the sorted atoms."""
        text = "\n".join(" ".join(a) for a in sorted(self.atoms))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True, order=True)
class GroundAction:
    name: str
    params: Tuple[str, ...]
    precondition: FrozenSet[Atom] = field(compare=False)
    add: FrozenSet[Atom] = field(compare=False)
    delete: FrozenSet[Atom] = field(compare=False)

    def __str__(self) -> str:
        return "(" + " ".join((self.name,) + self.params) + ")"


def applicable(state: ConcreteState, action: GroundAction) -> bool:
    return action.precondition <= state.atoms


def apply(state: ConcreteState, action: GroundAction) -> ConcreteState:
    if not action.precondition <= state.atoms:
        raise NotApplicable(f"{action} is not applicable")
    return ConcreteState((state.atoms - action.delete) | action.add)


def goal_check(state: ConcreteState, goal: FrozenSet[Atom]) -> bool:
    return goal <= state.atoms


@dataclass(frozen=True)
class GroundProblem:
    name: str
    domain: DomainModel
    objects: Tuple[str, ...]
    object_types: Tuple[Tuple[str, str], ...]
    initial_state: ConcreteState
    goal: FrozenSet[Atom]
    ground_actions: Tuple[GroundAction, ...]

    def successors(self, state: ConcreteState) -> Iterator[Tuple[GroundAction, ConcreteState]]:
        atoms = state.atoms
        for action in self.ground_actions:
            if action.precondition <= atoms:
                yield action, ConcreteState((atoms - action.delete) | action.add)

    def is_goal(self, state: ConcreteState) -> bool:
        return self.goal <= state.atoms

    def action(self, name: str, params: Sequence[str]) -> GroundAction:
        key = (name, tuple(params))
        index = self._action_index()
        if key not in index:
            raise UnknownSymbol(f"no ground action ({' '.join((name,) + tuple(params))})")
        return index[key]

    def _action_index(self):
        index = self.__dict__.get("_index")
        if index is None:
            index = {(a.name, a.params): a for a in self.ground_actions}
            object.__setattr__(self, "_index", index)
        return index


def validate_plan(problem: GroundProblem, plan: Sequence[GroundAction]) -> bool:
    state = problem.initial_state
    for action in plan:
        if not applicable(state, action):
            return False
        state = apply(state, action)
    return goal_check(state, problem.goal)


def parse_problem(text: str, domain: DomainModel) -> GroundProblem:
    """Parse a problem against ``domain`` and ground it fully."""
    root = read_sexpr(text)
    if len(root) < 2 or not isinstance(root[0], str) or root[0].lower() != "define":
        raise ParseError("expected (define (problem ...) ...)", *_pos(root))
    header = _expect_list(root[1], "(problem NAME)")
    if len(header) != 2 or not isinstance(header[0], str) or header[0].lower() != "problem":
        raise ParseError("expected (problem NAME)", *_pos(header))
    name = str(header[1])

    objects: List[Tuple[str, str]] = list(domain.constants)
    init_nodes: List = []
    goal_node = None
    declared_types = set(domain.type_names) | {ROOT_TYPE}
    for section in root[2:]:
        section = _expect_list(section, "problem section")
        if not section:
            raise ParseError("empty section", *_pos(section))
        key = _expect_sym(section[0], "section keyword")
        low = key.lower()
        if low == ":domain":
            if len(section) != 2:
                raise ParseError("expected (:domain NAME)", key.line, key.column)
            if str(section[1]) != domain.name:
                raise UnknownSymbol(f"problem is for domain {section[1]!r}, not {domain.name!r}", key.line, key.column)
        elif low == ":objects":
            for oname, otype in _parse_typed_list(section[1:]):
                if otype not in declared_types:
                    raise UnknownSymbol(f"unknown type {otype!r} for object {oname!r}", key.line, key.column)
                objects.append((oname, otype))
        elif low == ":init":
            init_nodes.extend(section[1:])
        elif low == ":goal":
            if len(section) != 2:
                raise ParseError("expected exactly one goal formula", key.line, key.column)
            goal_node = section[1]
        elif low in (":requirements",):
            for req in section[1:]:
                if str(req).lower() not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeature(f"requirement {req} is not supported", *_pos(req))
        else:
            raise UnsupportedFeature(f"problem section {key} is not supported", key.line, key.column)

    names = [o for o, _ in objects]
    if len(set(names)) != len(names):
        raise ParseError("duplicate object names")
    object_map = dict(objects)
    pred_index = {p.name: p for p in domain.predicates}

    def ground_atom(node, what):
        atom = _parse_atom(node, {}, object_map, pred_index, what)
        if pred_index[atom[0]].is_type:
            raise UnsupportedFeature(f"type atom {_atom_to_pddl(atom)} not allowed in {what}", *_pos(node))
        return atom

    init = set()
    for node in init_nodes:
        if _is_not(node):
            raise UnsupportedFeature("negative literals in :init", *_pos(node))
        init.add(ground_atom(node, "init"))
    goal = set()
    if goal_node is not None:
        for lit in _conjuncts(goal_node):
            if _is_not(lit):
                raise NegativeGoal("negated goal atoms are not supported", *_pos(lit))
            goal.add(ground_atom(lit, "goal"))

    type_sets = {o: set(domain.supertypes(t)) for o, t in objects}
    for o, types in type_sets.items():
        for t in types:
            init.add((t, o))

    sorted_objects = tuple(sorted(object_map))
    ground_actions = _ground(domain, sorted_objects, type_sets, frozenset(init))
    return GroundProblem(
        name=name,
        domain=domain,
        objects=sorted_objects,
        object_types=tuple(sorted(object_map.items())),
        initial_state=ConcreteState(frozenset(init)),
        goal=frozenset(goal),
        ground_actions=ground_actions,
    )


def _static_predicates(domain: DomainModel) -> FrozenSet[str]:
    changing = set()
    for schema in domain.action_schemas:
        changing.update(a[0] for a in schema.add)
        changing.update(a[0] for a in schema.delete)
    return frozenset(p.name for p in domain.predicates if p.name not in changing)


def _ground(domain: DomainModel, objects, type_sets, init: FrozenSet[Atom]) -> Tuple[GroundAction, ...]:
    static = _static_predicates(domain)
    out = []
    for schema in domain.action_schemas:
        domains = []
        for _, ptype in schema.parameters:
            if ptype == ROOT_TYPE:
                domains.append(objects)
            else:
                domains.append(tuple(o for o in objects if ptype in type_sets[o]))
        variables = [v for v, _ in schema.parameters]
        for combo in itertools.product(*domains):
            binding = dict(zip(variables, combo))

            def sub(atom):
                return (atom[0], *(binding.get(a, a) for a in atom[1:]))

            pre = frozenset(sub(a) for a in schema.precondition)
            if any(a[0] in static and a not in init for a in pre):
                continue
            add = frozenset(sub(a) for a in schema.add)
            delete = frozenset(sub(a) for a in schema.delete) - add
            out.append(GroundAction(schema.name, tuple(combo), pre, add, delete))
    out.sort(key=lambda a: (a.name, a.params))
    return tuple(out)


# ---------------------------------------------------------------------------
# Plan files


def format_plan(plan: Iterable[GroundAction]) -> str:
    plan = list(plan)
    lines = [str(a) for a in plan]
    lines.append(f"; cost = {len(plan)} (unit cost)")
    return "\n".join(lines) + "\n"


def parse_plan(text: str, problem: GroundProblem) -> List[GroundAction]:
    plan = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if not (line.startswith("(") and line.endswith(")")):
            raise ParseError(f"malformed plan step {line!r}", lineno, 1)
        parts = line[1:-1].split()
        if not parts:
            raise ParseError("empty plan step", lineno, 1)
        plan.append(problem.action(parts[0], parts[1:]))
    return plan


def load_problem(domain_path, problem_path) -> GroundProblem:
    with open(domain_path, encoding="utf-8") as fh:
        domain = parse_domain(fh.read())
    with open(problem_path, encoding="utf-8") as fh:
        return parse_problem(fh.read(), domain)
