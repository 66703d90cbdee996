"""Fixed-dimension network inputs and targets built from abstract states.

The flat feature vector is laid out as::

    v (|R|) | v' (|R|) | m_p for each binary p (|R|*|R|, row-major) | m'_p for each p

where ``v`` counts objects per role, ``m_p[i, j]`` counts true p-atoms over
psi(r_i) x psi(r_j), ``v'`` clips counts at ``bin_levels`` and ``m'`` holds
the three-valued abstraction (0, 0.5, 1).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ghnplan.abstraction import HALF, ONE, AbstractState, Role, RolePartition, role_key
from ghnplan.errors import EmptyTrainingSet, UnknownAction
from ghnplan.pddl import DomainModel, GroundAction


@dataclass(frozen=True)
class Vocabulary:
    roles: Tuple[Role, ...]
    actions: Tuple[str, ...]
    max_params: int
    unary: Tuple[str, ...]
    binary: Tuple[str, ...]
    bin_levels: int = 2
    _role_index: Dict[Role, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_role_index", {r: i for i, r in enumerate(self.roles)})
        object.__setattr__(self, "_action_index", {a: i for i, a in enumerate(self.actions)})
        object.__setattr__(self, "_unary_index", {u: i for i, u in enumerate(self.unary)})
        object.__setattr__(self, "_fold_cache", {})

    @property
    def n_roles(self) -> int:
        return len(self.roles)

    @property
    def flat_size(self) -> int:
        r = len(self.roles)
        return 2 * r + 2 * len(self.binary) * r * r

    def binned_indices(self) -> np.ndarray:
        """Positions of v' and the m' blocks inside the flat vector."""
        r = len(self.roles)
        rel = len(self.binary) * r * r
        return np.concatenate([np.arange(r, 2 * r), np.arange(2 * r + rel, 2 * r + 2 * rel)])

    def action_index(self, name: str) -> int:
        try:
            return self._action_index[name]
        except KeyError:
            raise UnknownAction(f"action {name!r} not in vocabulary") from None

    def unary_index(self, name: str) -> Optional[int]:
        return self._unary_index.get(name)

    def role_indicator(self, role: Role) -> np.ndarray:
        vec = np.zeros(len(self.unary))
        for pred in role:
            idx = self._unary_index.get(pred)
            if idx is not None:
                vec[idx] = 1.0
        return vec

    def fold(self, role: Role) -> Tuple[int, bool]:
        """Index of ``role``, or of the vocabulary role sharing most predicates.

        Returns ``(index, folded)``. Ties go to the lexicographically first role.
        """
        idx = self._role_index.get(role)
        if idx is not None:
            return idx, False
        cached = self._fold_cache.get(role)
        if cached is None:
            best, best_overlap = 0, -1
            for i, candidate in enumerate(self.roles):
                overlap = len(role & candidate)
                if overlap > best_overlap:
                    best, best_overlap = i, overlap
            self._fold_cache[role] = cached = best
        return cached, True

    def to_json(self) -> dict:
        return {
            "roles": [sorted(r) for r in self.roles],
            "actions": list(self.actions),
            "max_params": self.max_params,
            "unary": list(self.unary),
            "binary": list(self.binary),
            "bin_levels": self.bin_levels,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        return cls(
            roles=tuple(frozenset(r) for r in data["roles"]),
            actions=tuple(data["actions"]),
            max_params=int(data["max_params"]),
            unary=tuple(data["unary"]),
            binary=tuple(data["binary"]),
            bin_levels=int(data["bin_levels"]),
        )


def build_vocabulary(
    samples: Iterable[Tuple[object, AbstractState, GroundAction]],
    domain: Optional[DomainModel] = None,
    bin_levels: int = 2,
) -> Vocabulary:
    """Collect roles, actions and predicates seen in ``samples``.

    Each sample is ``(hinted_state, abstract_state, action)``. When ``domain``
    is given its action schemas and predicates are included as well, so the
    vocabulary does not depend on which schemas happened to occur.
    """
    roles = set()
    actions: Dict[str, int] = {}
    preds: Dict[str, int] = {}
    count = 0
    for hinted, abstract_state, action in samples:
        count += 1
        roles.update(abstract_state.roles)
        for atom in hinted.atoms:
            preds[atom[0]] = len(atom) - 1
        if action is not None:
            actions[action.name] = max(actions.get(action.name, 0), len(action.params))
    if count == 0:
        raise EmptyTrainingSet("cannot build a vocabulary from an empty training set")
    if domain is not None:
        for schema in domain.action_schemas:
            actions[schema.name] = max(actions.get(schema.name, 0), len(schema.parameters))
        for pred in domain.predicates:
            preds[pred.name] = pred.arity
    return Vocabulary(
        roles=tuple(sorted(roles, key=role_key)),
        actions=tuple(sorted(actions)),
        max_params=max(actions.values(), default=0),
        unary=tuple(sorted(p for p, k in preds.items() if k == 1)),
        binary=tuple(sorted(p for p, k in preds.items() if k == 2)),
        bin_levels=bin_levels,
    )


@dataclass
class FeatureVector:
    role_counts: np.ndarray
    relations: np.ndarray
    binned_role_counts: np.ndarray
    binned_relations: np.ndarray
    fold_events: int = 0

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.role_counts, self.binned_role_counts, self.relations.ravel(), self.binned_relations.ravel()]
        ).astype(np.float64)


@dataclass
class Target:
    action_index: int
    param_roles: np.ndarray
    plan_length: int


def encode(state, abstract_state: Optional[AbstractState], partition: RolePartition, vocab: Vocabulary) -> FeatureVector:
    """Absolute and binned inputs for one (hinted) state.

    Roles outside the vocabulary are folded into the nearest vocabulary role;
    the binned relations are then the three-valued abstraction over the folded
    groups. When nothing folds they are read straight from ``abstract_state``.
    """
    n = vocab.n_roles
    v = np.zeros(n)
    obj_index: Dict[str, int] = {}
    folds = 0
    for role, objs in partition.groups.items():
        idx, folded = vocab.fold(role)
        if folded:
            folds += len(objs)
        v[idx] += len(objs)
        for o in objs:
            obj_index[o] = idx
    binary_index = {p: i for i, p in enumerate(vocab.binary)}
    m = np.zeros((len(vocab.binary), n, n))
    for atom in state.atoms:
        if len(atom) == 3:
            p = binary_index.get(atom[0])
            if p is not None:
                i, j = obj_index.get(atom[1]), obj_index.get(atom[2])
                if i is not None and j is not None:
                    m[p, i, j] += 1
    v_b = np.minimum(v, vocab.bin_levels)
    if abstract_state is not None and folds == 0:
        m_b = np.zeros_like(m)
        role_idx = vocab._role_index
        for (pred, roles), val in abstract_state.values.items():
            p = binary_index.get(pred)
            if p is not None and len(roles) == 2:
                m_b[p, role_idx[roles[0]], role_idx[roles[1]]] = val
    else:
        full = np.outer(v, v)[None, :, :]
        m_b = np.where(m == 0, 0.0, np.where(m >= full, ONE, HALF))
    return FeatureVector(v, m, v_b, m_b, folds)


def encode_target(action: GroundAction, partition: RolePartition, steps_to_go: int, vocab: Vocabulary) -> Target:
    idx = vocab.action_index(action.name)
    if len(action.params) > vocab.max_params:
        raise UnknownAction(f"{action} has more parameters than the vocabulary allows")
    roles = np.zeros((vocab.max_params, len(vocab.unary)))
    for slot, obj in enumerate(action.params):
        roles[slot] = vocab.role_indicator(partition.role(obj))
    return Target(idx, roles, int(steps_to_go))


# ---------------------------------------------------------------------------
# CSV interchange: flat features followed by the target columns


def dataset_header(vocab: Vocabulary) -> List[str]:
    cols = [f"x{i}" for i in range(vocab.flat_size)]
    cols.append("action")
    for slot in range(vocab.max_params):
        cols.extend(f"p{slot}_{u}" for u in vocab.unary)
    cols.append("plan_length")
    return cols


def rows_to_csv(rows: Sequence[Tuple[np.ndarray, Target]], vocab: Vocabulary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset_header(vocab))
    for flat, target in rows:
        values = [repr(float(x)) for x in flat]
        values.append(str(target.action_index))
        values.extend(str(int(x)) for x in target.param_roles.ravel())
        values.append(str(target.plan_length))
        writer.writerow(values)
    return buf.getvalue()


def csv_to_rows(text: str, vocab: Vocabulary) -> List[Tuple[np.ndarray, Target]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != dataset_header(vocab):
        raise ValueError("dataset header does not match vocabulary")
    n = vocab.flat_size
    k = vocab.max_params * len(vocab.unary)
    rows = []
    for values in reader:
        flat = np.array([float(x) for x in values[:n]])
        action = int(values[n])
        roles = np.array([float(x) for x in values[n + 1 : n + 1 + k]]).reshape(vocab.max_params, len(vocab.unary))
        rows.append((flat, Target(action, roles, int(values[n + 1 + k]))))
    return rows


def vocabulary_json(vocab: Vocabulary) -> str:
    return json.dumps(vocab.to_json(), sort_keys=True)
