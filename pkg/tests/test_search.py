import random

import pytest

from helpers import bfs_distance, distance_to_goal_table
from ghnplan.datagen import BinSpec, build_dataset, generate_problems, solve_corpus
from ghnplan.errors import DimensionMismatch
from ghnplan.generators import blocksworld_problem, gripper_problem, load_domain, visitall_problem
from ghnplan.heuristic import HybridScore
from ghnplan.neuralnet import TrainConfig, init, train
from ghnplan.pddl import parse_problem
from ghnplan.search import (
    BUDGET_EXHAUSTED,
    SOLVED,
    UNSOLVABLE,
    BlindScorer,
    Budget,
    GHNScorer,
    GoalCountScorer,
    astar,
    baseline_scorers,
    gbfs,
    make_scorer,
    run_search,
)


class TableScorer(BlindScorer):
    """h read from a lookup table; real path cost as g."""

    name = "table"

    def __init__(self, table, default=0.0):
        self.table = table
        self.default = default

    def evaluate(self, problem, state, parent, action):
        g = 0 if parent is None else parent.g_real + 1
        return HybridScore(float(g), float(self.table.get(state.atoms, self.default))), None


def test_blind_astar_on_two_ball_is_optimal(two_ball):
    result = astar(two_ball)
    assert result.status == SOLVED
    assert result.plan_length == bfs_distance(two_ball) == 3
    assert [a.name for a in result.plan] == ["pick", "move", "drop"]


def test_goal_at_init_counts_one_expansion(gripper_domain):
    text = """(define (problem p) (:domain gripper)
      (:objects ra - room b - ball) (:init (at b ra)) (:goal (and (at b ra))))"""
    result = astar(parse_problem(text, gripper_domain))
    assert result.status == SOLVED and result.plan == [] and result.nodes_expanded == 1


def test_unsolvable_exhausts_the_space(unsolvable_problem):
    assert bfs_distance(unsolvable_problem) is None
    for search in (astar, gbfs):
        result = search(unsolvable_problem)
        assert result.status == UNSOLVABLE and result.plan is None
        assert result.nodes_expanded == 6


def test_gbfs_blind_still_solves(two_ball):
    result = gbfs(two_ball)
    assert result.status == SOLVED


def test_gbfs_with_perfect_heuristic_follows_one_trace():
    prob = parse_problem(gripper_problem(3, 4), load_domain("gripper"))
    table = distance_to_goal_table(prob)
    length = table[prob.initial_state.atoms]
    result = gbfs(prob, TableScorer(table))
    assert result.plan_length == length
    assert result.nodes_expanded == length + 1


def test_node_budget(two_ball):
    result = astar(two_ball, budget=Budget(max_nodes=2))
    assert result.status == BUDGET_EXHAUSTED
    assert result.nodes_expanded == 2 and result.nodes_generated > 0
    assert astar(two_ball, budget=Budget(max_nodes=0)).nodes_expanded == 0


def test_time_budget():
    prob = parse_problem(gripper_problem(4, 0), load_domain("gripper"))
    assert astar(prob, budget=Budget(max_nodes=None, max_seconds=0.0)).status == BUDGET_EXHAUSTED


def _small_instances(seed, n):
    rng = random.Random(seed)
    out = []
    for k in range(n):
        kind = k % 3
        if kind == 0:
            text, dom = gripper_problem(rng.randint(1, 3), k), "gripper"
        elif kind == 1:
            text, dom = blocksworld_problem(rng.randint(2, 4), k), "blocksworld"
        else:
            text, dom = visitall_problem(rng.randint(1, 3), k), "visitall"
        out.append(parse_problem(text, load_domain(dom)))
    return out


def test_blind_astar_matches_bfs_on_small_instances():
    for prob in _small_instances(1, 12):
        assert astar(prob).plan_length == bfs_distance(prob)


def test_reopening_keeps_admissible_search_optimal():
    rng = random.Random(7)
    reopened = 0
    for prob in _small_instances(2, 12):
        exact = distance_to_goal_table(prob)
        # admissible but inconsistent: a random value in [0, h*] per state
        table = {s: rng.randint(0, exact[s]) for s in sorted(exact, key=sorted)}
        result = astar(prob, TableScorer(table))
        assert result.plan_length == exact[prob.initial_state.atoms]
        reopened += result.reopened
    assert reopened > 0


def test_goal_count_scorer(two_ball, s0):
    scorers = baseline_scorers()
    score, _ = scorers["goal-count"].evaluate(two_ball, s0, None, None)
    assert score.h == 1
    result = astar(two_ball, GoalCountScorer())
    goal_state = s0
    for a in result.plan:
        goal_state = next(t for b, t in two_ball.successors(goal_state) if b == a)
    assert scorers["goal-count"].evaluate(two_ball, goal_state, None, None)[0].h == 0
    assert scorers["blind"].evaluate(two_ball, s0, None, None)[0].h == 0


def test_search_is_deterministic():
    prob = parse_problem(blocksworld_problem(4, 3), load_domain("blocksworld"))
    a, b = astar(prob, GoalCountScorer()), astar(prob, GoalCountScorer())
    assert (a.plan, a.nodes_expanded, a.nodes_generated) == (b.plan, b.nodes_expanded, b.nodes_generated)


def test_make_scorer_errors():
    with pytest.raises(ValueError):
        make_scorer("ghn")
    with pytest.raises(ValueError):
        make_scorer("nope")


@pytest.fixture(scope="module")
def gripper_model():
    bins = BinSpec.parse("2;3")
    insts = generate_problems("gripper", bins, "B0", 8, 1) + generate_problems("gripper", bins, "B1", 8, 1)
    trajs, failed = solve_corpus(insts)
    assert not failed
    data = build_dataset(trajs, domain=load_domain("gripper"))
    cfg = TrainConfig(epochs=60, seed=0)
    model, _ = train(init(data.vocab, cfg), data.rows, cfg)
    return model, data


def test_ghn_astar_and_gbfs_solve(two_ball, gripper_model):
    model, _ = gripper_model
    for algo in ("astar", "gbfs"):
        result = run_search(two_ball, algo, GHNScorer(model))
        assert result.status == SOLVED
    result = gbfs(two_ball, GHNScorer(model), use_f=True)
    assert result.status == SOLVED


def test_ghn_root_score_tracks_training_prediction(gripper_model):
    model, data = gripper_model
    from ghnplan.neuralnet import forward

    pid, step = data.provenance[0]
    assert step == 0
    inst = generate_problems("gripper", BinSpec.parse("2;3"), "B0", 8, 1)[0]
    assert inst.problem_id == pid
    scorer = GHNScorer(model)
    score, _ = scorer.evaluate(inst.problem, inst.problem.initial_state, None, None)
    assert score.g_prime == 0.0
    assert score.f == score.h == pytest.approx(forward(model, data.rows[0][0]).plan_length)


def test_ghn_cache_counts_repeated_states(two_ball, gripper_model):
    model, _ = gripper_model
    scorer = GHNScorer(model)
    scorer.evaluate(two_ball, two_ball.initial_state, None, None)
    assert (scorer.evaluations, scorer.cache_hits) == (1, 0)
    scorer.evaluate(two_ball, two_ball.initial_state, None, None)
    assert (scorer.evaluations, scorer.cache_hits) == (1, 1)
    result = run_search(two_ball, "astar", scorer)
    assert result.cache_hits >= 1


def test_ghn_probe_rejects_other_domain(gripper_model):
    model, _ = gripper_model
    prob = parse_problem(visitall_problem(2, 0), load_domain("visitall"))
    with pytest.raises(DimensionMismatch):
        run_search(prob, "astar", GHNScorer(model))


def test_result_record_fields(two_ball):
    rec = astar(two_ball).to_record()
    assert set(rec) == {"status", "plan_length", "nodes_expanded", "nodes_generated", "wall_time", "cache_hits", "fold_events"}
