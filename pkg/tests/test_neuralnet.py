import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from nn_fixtures import random_model, random_sample, synthetic_vocab
from ghnplan.encoding import Target
from ghnplan.errors import CorruptModel, DimensionMismatch, EmptyDataset, VersionMismatch
from ghnplan.neuralnet import (
    LOG_EPS,
    NetworkOutput,
    TrainConfig,
    evaluate,
    forward,
    grad_check,
    gradients,
    init,
    load,
    load_file,
    loss,
    save,
    train,
)


def _params_equal(a, b, prefix=""):
    return all(np.array_equal(a.params[k], b.params[k]) for k in a.params if k.startswith(prefix))


def test_init_is_deterministic():
    a, b = random_model(5), random_model(5)
    assert _params_equal(a, b)
    assert not _params_equal(a, random_model(6))
    assert all(not np.any(v) for k, v in a.params.items() if k.endswith(".b"))


def test_zero_input_gives_uniform_actions():
    model = random_model(1)
    out = forward(model, np.zeros(model.vocab.flat_size))
    assert np.allclose(out.action_probs, 0.25, atol=0, rtol=0)
    assert np.allclose(out.param_role_probs, 0.5)
    assert out.plan_length == 0.0


def test_parameter_count_follows_layer_arithmetic():
    for kwargs in ({}, {"n_roles": 5, "n_actions": 2, "max_params": 3}):
        model = random_model(0, **kwargs)
        vocab = model.vocab
        binned, flat = len(vocab.binned_indices()), vocab.flat_size
        trunk = lambda d: d * 32 + 32 + 3 * (32 * 32 + 32)  # noqa: E731
        units = vocab.max_params * len(vocab.unary)
        expected = trunk(binned) + 33 * len(vocab.actions) + 33 * units + trunk(flat) + 33
        assert model.parameter_count() == expected


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 10_000))
def test_output_invariants_on_random_inputs(seed):
    model = _shared_model()
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 6, size=model.vocab.flat_size) * rng.integers(0, 2, size=model.vocab.flat_size)
    out = forward(model, x)
    assert abs(out.action_probs.sum() - 1.0) <= 1e-6
    assert np.all((out.param_role_probs >= 0) & (out.param_role_probs <= 1))
    assert out.plan_length >= 0


_SHARED = {}


def _shared_model():
    if "m" not in _SHARED:
        _SHARED["m"] = random_model(2)
    return _SHARED["m"]


def test_golden_forward_output():
    model = load_file(os.path.join(DATA, "golden_model.json"))
    with open(os.path.join(DATA, "golden_forward.json"), encoding="utf-8") as fh:
        golden = json.load(fh)
    out = forward(model, np.array(golden["features"]))
    np.testing.assert_allclose(out.action_probs, golden["action_probs"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(out.param_role_probs, golden["param_role_probs"], rtol=0, atol=1e-12)
    assert abs(out.plan_length - golden["plan_length"]) <= 1e-12
    # golden weights are exactly the seeded initialization
    assert _params_equal(model, random_model(11))


def test_forward_dimension_mismatch():
    model = random_model(0)
    with pytest.raises(DimensionMismatch):
        forward(model, np.zeros(model.vocab.flat_size + 1))


def test_loss_is_zero_for_exact_outputs():
    roles = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    out = NetworkOutput(np.array([0.0, 1.0, 0.0, 0.0]), roles.copy(), 3.0)
    cce, bce, mae = loss(out, Target(1, roles, 3))
    assert cce == 0.0 and mae == 0.0
    assert 0 <= bce < 1e-11


def test_loss_uniform_actions_is_ln4():
    out = NetworkOutput(np.full(4, 0.25), np.full((2, 3), 0.5), 2.0)
    cce, bce, mae = loss(out, Target(2, np.zeros((2, 3)), 5))
    assert math.isclose(cce, math.log(4), rel_tol=1e-15)
    assert math.isclose(bce, math.log(2), rel_tol=1e-15)
    assert mae == 3.0


def test_loss_matches_scalar_recomputation():
    rng = np.random.default_rng(9)
    for _ in range(20):
        p = rng.dirichlet(np.ones(4))
        q = rng.uniform(0, 1, size=(2, 3))
        y = rng.integers(0, 2, size=(2, 3)).astype(float)
        length = float(rng.uniform(0, 10))
        a, steps = int(rng.integers(4)), int(rng.integers(1, 10))
        cce, bce, mae = loss(NetworkOutput(p, q, length), Target(a, y, steps))
        terms = []
        for qi, yi in zip(q.ravel(), y.ravel()):
            qi = min(max(qi, LOG_EPS), 1 - LOG_EPS)
            terms.append(-(yi * math.log(qi) + (1 - yi) * math.log(1 - qi)))
        assert math.isclose(cce, -math.log(p[a]), rel_tol=1e-12)
        assert math.isclose(bce, sum(terms) / len(terms), rel_tol=1e-12)
        assert math.isclose(mae, abs(length - steps), rel_tol=1e-12)


def test_grad_check_passes():
    rng = np.random.default_rng(0)
    for seed in range(5):
        model = random_model(seed)
        assert grad_check(model, random_sample(model.vocab, rng), probes=5, seed=seed) < 1e-4


def test_grad_check_catches_corrupted_gradient():
    model = random_model(3)
    sample = random_sample(model.vocab, np.random.default_rng(1))

    def corrupted(*args):
        grads = gradients(*args)
        grads["policy.action.W"] = grads["policy.action.W"] * 1.5
        return grads

    assert grad_check(model, sample, probes=5, gradient_fn=corrupted) > 1e-2


def test_grad_check_dead_relu_is_zero():
    model = random_model(4)
    for name in model.params:
        if ".h" in name and name.endswith(".b") or name == "length.out.b":
            model.params[name][:] = -1.0
    zero = np.zeros(model.vocab.flat_size)
    target = Target(0, np.zeros((2, 3)), 1)
    assert grad_check(model, (zero, target), probes=3) < 1e-4
    grads = gradients(model, zero[None, :], np.array([0]), np.zeros((1, 6)), np.array([1.0]))
    assert all(not np.any(grads[k]) for k in grads if k.startswith("length."))
    assert all(not np.any(grads[k]) for k in grads if k.endswith(".W"))


def test_invalid_probes():
    model = random_model(0)
    with pytest.raises(ValueError):
        grad_check(model, random_sample(model.vocab, np.random.default_rng(0)), probes=0)


def _toy_dataset(n=10, seed=0):
    vocab = synthetic_vocab()
    rng = np.random.default_rng(seed)
    return vocab, [random_sample(vocab, rng) for _ in range(n)]


def test_training_reduces_loss():
    vocab, data = _toy_dataset()
    cfg = TrainConfig(epochs=100, seed=1)
    _, report = train(init(vocab, cfg), data, cfg)
    first, last = report.history[0], report.history[-1]
    assert sum(v for k, v in last.items() if k != "epoch") < sum(v for k, v in first.items() if k != "epoch")


def test_single_sample_policy_converges():
    vocab, data = _toy_dataset(1, seed=4)
    cfg = TrainConfig(epochs=100, seed=0)
    model, report = train(init(vocab, cfg), data * 8, cfg)
    assert report.history[-1]["cce"] < 0.01
    assert evaluate(model, data)["accuracy"] == 1.0


def test_zero_learning_rate_keeps_weights():
    vocab, data = _toy_dataset()
    cfg = TrainConfig(learning_rate=0.0, epochs=3)
    model = init(vocab, cfg)
    trained, _ = train(model, data, cfg)
    assert _params_equal(model, trained)


def test_zero_epochs_warns_and_keeps_weights(caplog):
    vocab, data = _toy_dataset()
    cfg = TrainConfig(epochs=0)
    model = init(vocab, cfg)
    trained, report = train(model, data, cfg)
    assert _params_equal(model, trained) and report.history == []
    assert "epochs=0" in caplog.text


def test_training_is_deterministic():
    vocab, data = _toy_dataset()
    cfg = TrainConfig(epochs=5, seed=3)
    a, _ = train(init(vocab, cfg), data, cfg)
    b, _ = train(init(vocab, cfg), data, cfg)
    assert save(a) == save(b)


def test_empty_dataset():
    vocab, _ = _toy_dataset()
    with pytest.raises(EmptyDataset):
        train(init(vocab, TrainConfig()), [], TrainConfig())


def test_two_networks_are_independent():
    vocab, data = _toy_dataset()
    cfg = TrainConfig(epochs=5, seed=2)
    base = init(vocab, cfg)
    trained, _ = train(base, data, cfg)
    other_lengths = [(x, Target(t.action_index, t.param_roles, 0)) for x, t in data]
    other_actions = [(x, Target((t.action_index + 1) % 4, 1 - t.param_roles, t.plan_length)) for x, t in data]
    by_length, _ = train(base, other_lengths, cfg)
    by_action, _ = train(base, other_actions, cfg)
    assert _params_equal(trained, by_length, "policy.") and not _params_equal(trained, by_length, "length.")
    assert _params_equal(trained, by_action, "length.") and not _params_equal(trained, by_action, "policy.")


def test_validation_split_is_reported():
    vocab, data = _toy_dataset(20)
    cfg = TrainConfig(epochs=2, validation_fraction=0.25)
    _, report = train(init(vocab, cfg), data, cfg)
    assert len(report.validation) == 2


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_save_load_round_trip():
    model = random_model(8)
    back = load(save(model))
    assert save(back) == save(model)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(0, 4, size=model.vocab.flat_size)
        a, b = forward(model, x), forward(back, x)
        assert np.array_equal(a.action_probs, b.action_probs) and a.plan_length == b.plan_length


def test_truncated_or_foreign_model_file():
    data = save(random_model(0))
    with pytest.raises(CorruptModel):
        load(data[: len(data) // 2])
    with pytest.raises(CorruptModel):
        load(b'{"format": "something-else"}')
    doc = json.loads(data)
    doc["version"] = 99
    with pytest.raises(VersionMismatch):
        load(json.dumps(doc).encode())
    doc["version"] = 1
    doc["layers"] = doc["layers"][1:]
    with pytest.raises(CorruptModel):
        load(json.dumps(doc).encode())


def test_model_with_other_vocab_rejects_features():
    small = random_model(0)
    big = random_model(0, n_roles=4)
    with pytest.raises(DimensionMismatch):
        forward(load(save(small)), np.zeros(big.vocab.flat_size))
