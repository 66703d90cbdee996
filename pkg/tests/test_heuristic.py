import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghnplan.abstraction import add_goal_hints, compute_roles
from ghnplan.datagen import Trajectory, build_dataset
from ghnplan.encoding import Vocabulary
from ghnplan.errors import UnknownAction
from ghnplan.heuristic import (
    HeuristicConfig,
    HybridScore,
    action_score,
    confidence_filter,
    param_score,
    score_node,
)
from ghnplan.neuralnet import NetworkOutput, TrainConfig, forward, init, train
from ghnplan.pddl import GroundAction, apply
from ghnplan.search import astar

VOCAB = Vocabulary((frozenset({"a", "b"}),), ("go", "stay", "wait"), 2, ("a", "b", "c", "d"), ())
ROLE_AB = frozenset({"a", "b"})


def _output(action_probs, slots, length=1.0):
    return NetworkOutput(np.array(action_probs, dtype=float), np.array(slots, dtype=float), length)


class _Partition:
    def __init__(self, roles):
        self.roles = roles

    def role(self, obj):
        return self.roles[obj]


def test_filter():
    assert confidence_filter(0.7, 0.5) == 1
    assert confidence_filter(0.5, 0.5) == 1
    assert confidence_filter(0.49, 0.5) == 0


def test_param_score_examples():
    cfg = HeuristicConfig()
    out = _output([1, 0, 0], [[0.9, 0.4, 0.1, 0.6], [1, 1, 0, 0]])
    assert param_score(out, 0, ROLE_AB, VOCAB, cfg) == 0.5
    assert param_score(out, 1, ROLE_AB, VOCAB, cfg) == 1.0
    worst = _output([1, 0, 0], [[0, 0, 1, 1], [0, 0, 0, 0]])
    assert param_score(worst, 0, ROLE_AB, VOCAB, cfg) == 0.0


def test_action_score_examples():
    cfg = HeuristicConfig()
    go = GroundAction("go", ("x", "y"), frozenset(), frozenset(), frozenset())
    part = _Partition({"x": ROLE_AB, "y": ROLE_AB})
    perfect = _output([1, 0, 0], [[1, 1, 0, 0], [1, 1, 0, 0]])
    assert action_score(perfect, go, part, VOCAB, cfg) == 0.0
    never = _output([0, 1, 0], [[1, 1, 0, 0], [1, 1, 0, 0]])
    assert action_score(never, go, part, VOCAB, cfg) == 1.0
    # V_p = 1.0 and 0.5 with NN_A[go] = 0.5
    mixed = _output([0.5, 0.5, 0], [[1, 1, 0, 0], [0.9, 0.4, 0.1, 0.6]])
    assert action_score(mixed, go, part, VOCAB, cfg) == pytest.approx(0.625, abs=1e-15)
    wait = GroundAction("wait", (), frozenset(), frozenset(), frozenset())
    assert action_score(_output([0.2, 0.2, 0.6], [[0] * 4] * 2), wait, part, VOCAB, cfg) == pytest.approx(0.4)
    with pytest.raises(UnknownAction):
        action_score(perfect, GroundAction("fly", (), frozenset(), frozenset(), frozenset()), part, VOCAB, cfg)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
    st.lists(st.floats(0, 1), min_size=8, max_size=8),
)
def test_epsilon_zero_degenerates(probs, slots):
    probs = np.array(probs) + 1e-9
    probs = probs / probs.sum()
    out = _output(probs, np.reshape(slots, (2, 4)))
    go = GroundAction("go", ("x", "y"), frozenset(), frozenset(), frozenset())
    part = _Partition({"x": ROLE_AB, "y": frozenset({"c"})})
    cfg = HeuristicConfig(epsilon=0.0)
    assert param_score(out, 1, frozenset({"c"}), VOCAB, cfg) == 1.0
    assert action_score(out, go, part, VOCAB, cfg) == pytest.approx(1 - probs[0], abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_action_score_is_monotone_and_bounded(p1, p2, slots):
    lo, hi = sorted((p1, p2))
    go = GroundAction("go", ("x", "y"), frozenset(), frozenset(), frozenset())
    part = _Partition({"x": ROLE_AB, "y": ROLE_AB})
    roles = np.reshape(slots, (2, 4))
    cfg = HeuristicConfig()
    v_lo = action_score(_output([lo, 1 - lo, 0], roles), go, part, VOCAB, cfg)
    v_hi = action_score(_output([hi, 1 - hi, 0], roles), go, part, VOCAB, cfg)
    assert 0.0 <= v_hi <= v_lo <= 1.0


def test_score_node_root_and_chain():
    out = _output([1, 0, 0], [[1, 1, 0, 0]] * 2, length=4.0)
    root = score_node(None, None, None, out, None, VOCAB, HeuristicConfig())
    assert root == HybridScore(0.0, 4.0) and root.f == 4.0
    # chain of V_a = 0.2 then 0.3 on a parameterless action
    wait = GroundAction("wait", (), frozenset(), frozenset(), frozenset())
    first = score_node(root, wait, _output([0, 0.2, 0.8], [[0] * 4] * 2), out, _Partition({}), VOCAB, HeuristicConfig())
    second = score_node(first, wait, _output([0, 0.3, 0.7], [[0] * 4] * 2), out, _Partition({}), VOCAB, HeuristicConfig())
    assert second.g_prime == pytest.approx(0.5)
    assert second.f == second.g_prime + second.h


def test_config_validation():
    with pytest.raises(ValueError):
        HeuristicConfig(epsilon=1.5)
    with pytest.raises(ValueError):
        HeuristicConfig(role_state="sibling")


def _trace(two_ball):
    result = astar(two_ball)
    return Trajectory.replay("two_ball", two_ball, result.plan)


def test_perfect_network_along_an_optimal_trace(two_ball):
    traj = _trace(two_ball)
    vocab = build_dataset([traj], domain=two_ball.domain).vocab
    cfg = HeuristicConfig()
    outputs, partitions = [], []
    for i, state in enumerate(traj.states):
        hinted = add_goal_hints(state, two_ball.goal)
        part = compute_roles(hinted, two_ball.objects, vocab.unary)
        probs = np.zeros(len(vocab.actions))
        slots = np.zeros((vocab.max_params, len(vocab.unary)))
        if i < len(traj.plan):
            act = traj.plan[i]
            probs[vocab.action_index(act.name)] = 1.0
            for k, o in enumerate(act.params):
                slots[k] = vocab.role_indicator(part.role(o))
        outputs.append(NetworkOutput(probs, slots, float(len(traj.plan) - i)))
        partitions.append(part)
    score = score_node(None, None, None, outputs[0], None, vocab, cfg)
    assert score.f == len(traj.plan)
    for i, act in enumerate(traj.plan):
        assert apply(traj.states[i], act) == traj.states[i + 1]
        score = score_node(score, act, outputs[i], outputs[i + 1], partitions[i], vocab, cfg)
        assert score.g_prime == 0.0
        assert score.f == len(traj.plan) - i - 1


def test_overfit_network_along_its_trace(two_ball):
    traj = _trace(two_ball)
    data = build_dataset([traj], domain=two_ball.domain)
    cfg = TrainConfig(epochs=300, seed=0, learning_rate=0.003)
    model, _ = train(init(data.vocab, cfg), data.rows * 8, cfg)
    hcfg = HeuristicConfig()
    prev_out = prev_part = score = None
    for i, state in enumerate(traj.states):
        hinted = add_goal_hints(state, two_ball.goal)
        part = compute_roles(hinted, two_ball.objects, data.vocab.unary)
        feats = data.rows[i][0] if i < len(data.rows) else None
        out = forward(model, feats) if feats is not None else prev_out
        if i == 0:
            score = score_node(None, None, None, out, None, data.vocab, hcfg)
        elif feats is not None:
            score = score_node(score, traj.plan[i - 1], prev_out, out, prev_part, data.vocab, hcfg)
            assert abs(score.h - (len(traj.plan) - i)) < 0.5
        prev_out, prev_part = out, part
    assert score.g_prime < 0.1 * len(traj.plan)
