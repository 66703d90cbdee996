"""Hybrid heuristic: artificial path cost from action confidence plus predicted length."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ghnplan.abstraction import Role, RolePartition
from ghnplan.encoding import Vocabulary
from ghnplan.neuralnet import NetworkOutput
from ghnplan.pddl import GroundAction

ROLE_STATES = ("parent", "child")


@dataclass(frozen=True)
class HeuristicConfig:
    """``epsilon`` thresholds role predictions; ``role_state`` picks whose roles V_p checks.

    ``"parent"`` reads parameter roles in the state the action is applied to
    (the state the role head was trained on); ``"child"`` reads them in the
    successor.
    """

    epsilon: float = 0.5
    role_state: str = "parent"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.role_state not in ROLE_STATES:
            raise ValueError(f"role_state must be one of {ROLE_STATES}")


@dataclass(frozen=True)
class HybridScore:
    g_prime: float
    h: float

    @property
    def f(self) -> float:
        return self.g_prime + self.h


def confidence_filter(x: float, epsilon: float) -> int:
    return 1 if x >= epsilon else 0


def param_score(output: NetworkOutput, slot: int, role: Role, vocab: Vocabulary, config: HeuristicConfig) -> float:
    """Fraction of unary predicates whose membership in ``role`` the slot head got right."""
    n_unary = len(vocab.unary)
    if n_unary == 0:
        return 1.0
    pred = output.param_role_probs[slot]
    member = vocab.role_indicator(role)
    eps = config.epsilon
    hits = np.sum(member * (pred >= eps)) + np.sum((1.0 - member) * ((1.0 - pred) >= eps))
    return float(hits) / n_unary


def action_score(
    output: NetworkOutput,
    action: GroundAction,
    partition: RolePartition,
    vocab: Vocabulary,
    config: HeuristicConfig,
) -> float:
    """Penalty in [0, 1]: one minus action probability times mean parameter score."""
    prob = float(output.action_probs[vocab.action_index(action.name)])
    n = len(action.params)
    if n == 0:
        return 1.0 - prob
    total = sum(param_score(output, i, partition.role(o), vocab, config) for i, o in enumerate(action.params))
    return 1.0 - prob * total / n


def score_node(
    parent_score: Optional[HybridScore],
    incoming_action: Optional[GroundAction],
    parent_output: Optional[NetworkOutput],
    node_output: NetworkOutput,
    partition: Optional[RolePartition],
    vocab: Vocabulary,
    config: HeuristicConfig,
) -> HybridScore:
    """Score a search node from its parent's score and the network outputs.

    The action penalty uses the policy prediction made at the parent state;
    ``partition`` supplies the parameter roles (see ``HeuristicConfig.role_state``).
    """
    h = max(float(node_output.plan_length), 0.0)
    if incoming_action is None:
        return HybridScore(0.0, h)
    penalty = action_score(parent_output, incoming_action, partition, vocab, config)
    return HybridScore(parent_score.g_prime + penalty, h)
