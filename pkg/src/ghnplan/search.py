"""A* and greedy best-first search over the simulator with pluggable scorers.

Queue entries are ordered by ``(key, h, -g_real, insertion order)``. A* keys
on ``score.f``; baseline scorers report the real path cost as ``g_prime`` so
this is plain A*, while the GHN scorer substitutes the artificial cost. State
reopening is decided on the real path cost only.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from ghnplan.abstraction import abstract, add_goal_hints, compute_roles
from ghnplan.encoding import encode
from ghnplan.errors import DimensionMismatch
from ghnplan.heuristic import HeuristicConfig, HybridScore, score_node
from ghnplan.neuralnet import NetworkModel, forward
from ghnplan.pddl import ConcreteState, GroundAction, GroundProblem, validate_plan

SOLVED = "solved"
UNSOLVABLE = "unsolvable"
BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass(frozen=True)
class Budget:
    max_nodes: Optional[int] = 1_000_000
    max_seconds: Optional[float] = 600.0


@dataclass(eq=False)
class SearchNode:
    state: ConcreteState
    parent: Optional["SearchNode"]
    action: Optional[GroundAction]
    g_real: int
    score: HybridScore
    ctx: object = None

    def plan(self) -> List[GroundAction]:
        steps = []
        node = self
        while node.parent is not None:
            steps.append(node.action)
            node = node.parent
        steps.reverse()
        return steps


@dataclass
class SearchResult:
    status: str
    plan: Optional[List[GroundAction]]
    nodes_expanded: int
    nodes_generated: int
    wall_time: float
    peak_open_size: int
    reopened: int = 0
    cache_hits: int = 0
    fold_events: int = 0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED

    @property
    def plan_length(self) -> Optional[int]:
        return None if self.plan is None else len(self.plan)

    def to_record(self) -> dict:
        return {
            "status": self.status,
            "plan_length": self.plan_length,
            "nodes_expanded": self.nodes_expanded,
            "nodes_generated": self.nodes_generated,
            "wall_time": self.wall_time,
            "cache_hits": self.cache_hits,
            "fold_events": self.fold_events,
        }


# Called with (problem, result) for every finished search; tests hook in here.
result_hooks: List[Callable[[GroundProblem, SearchResult], None]] = []


# ---------------------------------------------------------------------------
# scorers


class BlindScorer:
    name = "blind"

    def evaluate(self, problem, state, parent, action):
        g = 0 if parent is None else parent.g_real + 1
        return HybridScore(float(g), 0.0), None

    def stats(self) -> Dict[str, int]:
        return {}


class GoalCountScorer(BlindScorer):
    name = "goal-count"

    def evaluate(self, problem, state, parent, action):
        g = 0 if parent is None else parent.g_real + 1
        return HybridScore(float(g), float(len(problem.goal - state.atoms))), None


def baseline_scorers() -> Dict[str, BlindScorer]:
    return {"blind": BlindScorer(), "goal-count": GoalCountScorer()}


@dataclass
class _Eval:
    hinted: object
    partition: object
    output: object


class GHNScorer:
    """Scores nodes with a trained model; outputs are cached per concrete state."""

    name = "ghn"

    def __init__(self, model: NetworkModel, config: Optional[HeuristicConfig] = None):
        self.model = model
        self.config = config or HeuristicConfig()
        vocab = model.vocab
        self._preds = {p: 1 for p in vocab.unary}
        self._preds.update({p: 2 for p in vocab.binary})
        self._cache: Dict[ConcreteState, _Eval] = {}
        self.cache_hits = 0
        self.evaluations = 0
        self.fold_events = 0

    def probe(self, problem: GroundProblem) -> None:
        vocab = self.model.vocab
        for schema in problem.domain.action_schemas:
            if schema.name not in vocab.actions:
                raise DimensionMismatch(f"action {schema.name!r} is not in the model vocabulary")
            if len(schema.parameters) > vocab.max_params:
                raise DimensionMismatch(f"action {schema.name!r} has more parameters than the model supports")
        known = set(vocab.unary) | set(vocab.binary)
        missing = [p.name for p in problem.domain.predicates if p.name not in known]
        if missing:
            raise DimensionMismatch(f"predicates {missing} are not in the model vocabulary")
        self._state_eval(problem, problem.initial_state)

    def reset(self) -> None:
        self._cache.clear()
        self.cache_hits = self.evaluations = self.fold_events = 0

    def _state_eval(self, problem: GroundProblem, state: ConcreteState) -> _Eval:
        cached = self._cache.get(state)
        if cached is not None:
            self.cache_hits += 1
            return cached
        vocab = self.model.vocab
        hinted = add_goal_hints(state, problem.goal)
        partition = compute_roles(hinted, problem.objects, vocab.unary)
        abs_state = abstract(hinted, partition, self._preds)
        features = encode(hinted, abs_state, partition, vocab)
        self.fold_events += features.fold_events
        out = forward(self.model, features)
        self.evaluations += 1
        result = _Eval(hinted, partition, out)
        self._cache[state] = result
        return result

    def evaluate(self, problem, state, parent, action):
        ev = self._state_eval(problem, state)
        if parent is None:
            return score_node(None, None, None, ev.output, None, self.model.vocab, self.config), ev
        pev = parent.ctx
        partition = pev.partition if self.config.role_state == "parent" else ev.partition
        score = score_node(parent.score, action, pev.output, ev.output, partition, self.model.vocab, self.config)
        return score, ev

    def stats(self) -> Dict[str, int]:
        return {"cache_hits": self.cache_hits, "fold_events": self.fold_events}


# ---------------------------------------------------------------------------
# search drivers


def _finish(problem, status, node, expanded, generated, start, peak, reopened, scorer) -> SearchResult:
    plan = node.plan() if node is not None else None
    stats = scorer.stats()
    result = SearchResult(
        status=status,
        plan=plan,
        nodes_expanded=expanded,
        nodes_generated=generated,
        wall_time=time.perf_counter() - start,
        peak_open_size=peak,
        reopened=reopened,
        cache_hits=stats.get("cache_hits", 0),
        fold_events=stats.get("fold_events", 0),
    )
    if result.solved and not validate_plan(problem, plan):
        raise AssertionError(f"search returned an invalid plan for {problem.name}")
    for hook in result_hooks:
        hook(problem, result)
    return result


def _search(problem: GroundProblem, scorer, budget: Budget, greedy: bool, greedy_use_f: bool) -> SearchResult:
    start = time.perf_counter()
    budget = budget or Budget()
    counter = itertools.count()
    score, ctx = scorer.evaluate(problem, problem.initial_state, None, None)
    root = SearchNode(problem.initial_state, None, None, 0, score, ctx)

    def key(node):
        k = node.score.f if (not greedy or greedy_use_f) else node.score.h
        return (k, node.score.h, -node.g_real, next(counter))

    open_list = [(key(root), root)]
    best_g = {root.state: 0}
    closed = set()
    expanded = generated = reopened = 0
    peak = 1
    deadline = None if budget.max_seconds is None else start + budget.max_seconds
    while open_list:
        _, node = heapq.heappop(open_list)
        if node.g_real > best_g[node.state]:
            continue
        if budget.max_nodes is not None and expanded >= budget.max_nodes:
            return _finish(problem, BUDGET_EXHAUSTED, None, expanded, generated, start, peak, reopened, scorer)
        if deadline is not None and time.perf_counter() > deadline:
            return _finish(problem, BUDGET_EXHAUSTED, None, expanded, generated, start, peak, reopened, scorer)
        expanded += 1
        if problem.is_goal(node.state):
            return _finish(problem, SOLVED, node, expanded, generated, start, peak, reopened, scorer)
        closed.add(node.state)
        g = node.g_real + 1
        for action, succ in problem.successors(node.state):
            known = best_g.get(succ)
            if known is not None:
                if greedy or known <= g:
                    continue
                if succ in closed:
                    closed.discard(succ)
                    reopened += 1
            best_g[succ] = g
            score, ctx = scorer.evaluate(problem, succ, node, action)
            child = SearchNode(succ, node, action, g, score, ctx)
            generated += 1
            heapq.heappush(open_list, (key(child), child))
        peak = max(peak, len(open_list))
    return _finish(problem, UNSOLVABLE, None, expanded, generated, start, peak, reopened, scorer)


def astar(problem: GroundProblem, scorer=None, budget: Optional[Budget] = None) -> SearchResult:
    """A* with a closed list; a state is reopened when reached by a shorter real path."""
    return _search(problem, scorer or BlindScorer(), budget, greedy=False, greedy_use_f=False)


def gbfs(problem: GroundProblem, scorer=None, budget: Optional[Budget] = None, use_f: bool = False) -> SearchResult:
    """Greedy best-first on ``h`` (or ``g_prime + h`` with ``use_f``); no reopening."""
    return _search(problem, scorer or BlindScorer(), budget, greedy=True, greedy_use_f=use_f)


def make_scorer(name: str, model: Optional[NetworkModel] = None, config: Optional[HeuristicConfig] = None):
    if name == "ghn":
        if model is None:
            raise ValueError("the ghn scorer needs a model")
        return GHNScorer(model, config)
    scorers = baseline_scorers()
    if name not in scorers:
        raise ValueError(f"unknown scorer {name!r}")
    return scorers[name]


def run_search(problem: GroundProblem, algo: str, scorer, budget: Optional[Budget] = None) -> SearchResult:
    if isinstance(scorer, GHNScorer):
        scorer.reset()
        scorer.probe(problem)
    if algo == "astar":
        return astar(problem, scorer, budget)
    if algo == "gbfs":
        return gbfs(problem, scorer, budget)
    raise ValueError(f"unknown search algorithm {algo!r}")
