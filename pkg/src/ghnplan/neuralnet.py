"""Two dense networks in float64 with hand-written backprop and RMSProp.

The policy network reads the binned inputs and has a softmax head over
actions plus one sigmoid head per action-parameter slot (each over the unary
predicates). The length network reads the full feature vector and ends in a
single ReLU unit. Both trunks are stacks of Dense-32 blocks (two ReLU layers
of width 32 each).
"""

from __future__ import annotations

import base64
import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ghnplan.encoding import FeatureVector, Target, Vocabulary
from ghnplan.errors import CorruptModel, DimensionMismatch, EmptyDataset, VersionMismatch

log = logging.getLogger(__name__)

FORMAT_NAME = "ghnplan-model"
FORMAT_VERSION = 1
LOG_EPS = 1e-12
BLOCK_WIDTH = 32


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    rmsprop_epsilon: float = 1e-3
    rho: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    validation_fraction: float = 0.0
    blocks: int = 2

    def __post_init__(self):
        if self.learning_rate < 0 or self.rmsprop_epsilon <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError(f"invalid training configuration: {self}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.blocks < 1:
            raise ValueError("at least one Dense-32 block is required")


@dataclass
class NetworkOutput:
    action_probs: np.ndarray
    param_role_probs: np.ndarray
    plan_length: float


@dataclass
class TrainingReport:
    epochs: int
    history: List[Dict[str, float]] = field(default_factory=list)
    validation: List[Dict[str, float]] = field(default_factory=list)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out)) if fan_in + fan_out else 0.0
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class NetworkModel:
    """Weights plus the vocabulary that fixes their shapes."""

    def __init__(self, vocab: Vocabulary, config: TrainConfig, params: Dict[str, np.ndarray], metadata=None):
        self.vocab = vocab
        self.config = config
        self.params = params
        self.metadata = metadata if metadata is not None else {}
        self._binned = vocab.binned_indices()

    # layer bookkeeping ---------------------------------------------------
    @property
    def n_hidden(self) -> int:
        return 2 * self.config.blocks

    @property
    def n_units(self) -> int:
        return self.vocab.max_params * len(self.vocab.unary)

    def trunk_names(self, net: str) -> List[Tuple[str, str]]:
        return [(f"{net}.h{i}.W", f"{net}.h{i}.b") for i in range(self.n_hidden)]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "NetworkModel":
        return NetworkModel(
            self.vocab, self.config, {k: v.copy() for k, v in self.params.items()}, copy.deepcopy(self.metadata)
        )

    # forward -------------------------------------------------------------
    def _inputs(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if X.ndim != 2 or X.shape[1] != self.vocab.flat_size:
            raise DimensionMismatch(
                f"features have {X.shape[-1]} columns, model expects {self.vocab.flat_size}"
            )
        return X[:, self._binned], X

    def _trunk(self, net: str, h: np.ndarray, cache: Optional[list]) -> np.ndarray:
        for w_name, b_name in self.trunk_names(net):
            z = h @ self.params[w_name] + self.params[b_name]
            if cache is not None:
                cache.append((h, z))
            h = np.maximum(z, 0.0)
        return h

    def forward_batch(self, X: np.ndarray, cache: Optional[dict] = None):
        """Return (action_probs, role_probs, lengths) for a batch of flat inputs."""
        Xp, Xl = self._inputs(X)
        pc = [] if cache is not None else None
        lc = [] if cache is not None else None
        hp = self._trunk("policy", Xp, pc)
        logits = hp @ self.params["policy.action.W"] + self.params["policy.action.b"]
        logits = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        zr = hp @ self.params["policy.roles.W"] + self.params["policy.roles.b"]
        roles = 1.0 / (1.0 + np.exp(-zr))
        hl = self._trunk("length", Xl, lc)
        zl = hl @ self.params["length.out.W"] + self.params["length.out.b"]
        length = np.maximum(zl, 0.0)[:, 0]
        if cache is not None:
            cache.update(policy=pc, length=lc, hp=hp, hl=hl, zl=zl[:, 0])
        return probs, roles, length


def init(vocab: Vocabulary, config: TrainConfig) -> NetworkModel:
    """Glorot-uniform weights and zero biases, seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    params: Dict[str, np.ndarray] = {}
    n_hidden = 2 * config.blocks
    for net, fan_in in (("policy", len(vocab.binned_indices())), ("length", vocab.flat_size)):
        width = fan_in
        for i in range(n_hidden):
            params[f"{net}.h{i}.W"] = _glorot(rng, width, BLOCK_WIDTH)
            params[f"{net}.h{i}.b"] = np.zeros(BLOCK_WIDTH)
            width = BLOCK_WIDTH
        if net == "policy":
            n_units = vocab.max_params * len(vocab.unary)
            params["policy.action.W"] = _glorot(rng, width, len(vocab.actions))
            params["policy.action.b"] = np.zeros(len(vocab.actions))
            params["policy.roles.W"] = _glorot(rng, width, n_units)
            params["policy.roles.b"] = np.zeros(n_units)
        else:
            params["length.out.W"] = _glorot(rng, width, 1)
            params["length.out.b"] = np.zeros(1)
    return NetworkModel(vocab, config, params, {"seed": config.seed, "epochs": 0, "history": []})


def _as_flat(features) -> np.ndarray:
    if isinstance(features, FeatureVector):
        return features.flat
    return np.asarray(features, dtype=np.float64)


def forward(model: NetworkModel, features) -> NetworkOutput:
    X = _as_flat(features)[None, :]
    probs, roles, length = model.forward_batch(X)
    return NetworkOutput(
        probs[0], roles[0].reshape(model.vocab.max_params, len(model.vocab.unary)), float(length[0])
    )


# losses ------------------------------------------------------------------


def loss(output: NetworkOutput, target: Target) -> Tuple[float, float, float]:
    """(categorical CE on actions, mean binary CE over role units, absolute length error)."""
    cce = -np.log(max(output.action_probs[target.action_index], LOG_EPS))
    p = np.clip(output.param_role_probs.ravel(), LOG_EPS, 1 - LOG_EPS)
    y = target.param_roles.ravel()
    bce = float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p)))) if y.size else 0.0
    mae = abs(output.plan_length - target.plan_length)
    return float(cce), bce, float(mae)


def _stack_targets(targets: Sequence[Target], model: NetworkModel):
    a = np.array([t.action_index for t in targets], dtype=np.int64)
    r = np.array([t.param_roles.ravel() for t in targets], dtype=np.float64).reshape(len(targets), model.n_units)
    y = np.array([t.plan_length for t in targets], dtype=np.float64)
    return a, r, y


def batch_losses(model: NetworkModel, X, a, r, y) -> Tuple[float, float, float]:
    probs, roles, length = model.forward_batch(X)
    cce = -np.log(np.maximum(probs[np.arange(len(a)), a], LOG_EPS))
    if model.n_units:
        p = np.clip(roles, LOG_EPS, 1 - LOG_EPS)
        bce = np.mean(-(r * np.log(p) + (1 - r) * np.log(1 - p)), axis=1)
    else:
        bce = np.zeros(len(a))
    mae = np.abs(length - y)
    return float(cce.mean()), float(bce.mean()), float(mae.mean())


def _backprop_trunk(model, net, cache, delta, grads):
    for (w_name, b_name), (h_in, z) in zip(reversed(model.trunk_names(net)), reversed(cache)):
        delta = delta * (z > 0)
        grads[w_name] = h_in.T @ delta
        grads[b_name] = delta.sum(axis=0)
        delta = delta @ model.params[w_name].T


def gradients(model: NetworkModel, X, a, r, y) -> Dict[str, np.ndarray]:
    """Gradient of mean(CCE + BCE + MAE) over the batch for every parameter."""
    n = X.shape[0]
    cache: dict = {}
    probs, roles, length = model.forward_batch(X, cache)
    grads: Dict[str, np.ndarray] = {}

    d_logits = probs.copy()
    d_logits[np.arange(n), a] -= 1.0
    d_logits /= n
    hp = cache["hp"]
    grads["policy.action.W"] = hp.T @ d_logits
    grads["policy.action.b"] = d_logits.sum(axis=0)
    delta = d_logits @ model.params["policy.action.W"].T
    if model.n_units:
        d_zr = (roles - r) / (model.n_units * n)
        grads["policy.roles.W"] = hp.T @ d_zr
        grads["policy.roles.b"] = d_zr.sum(axis=0)
        delta = delta + d_zr @ model.params["policy.roles.W"].T
    else:
        grads["policy.roles.W"] = np.zeros_like(model.params["policy.roles.W"])
        grads["policy.roles.b"] = np.zeros_like(model.params["policy.roles.b"])
    _backprop_trunk(model, "policy", cache["policy"], delta, grads)

    d_len = np.sign(length - y) * (cache["zl"] > 0) / n
    d_len = d_len[:, None]
    hl = cache["hl"]
    grads["length.out.W"] = hl.T @ d_len
    grads["length.out.b"] = d_len.sum(axis=0)
    _backprop_trunk(model, "length", cache["length"], d_len @ model.params["length.out.W"].T, grads)
    return grads


# training ----------------------------------------------------------------


def _dataset_arrays(model, dataset):
    X = np.array([_as_flat(f) for f, _ in dataset], dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.vocab.flat_size:
        raise DimensionMismatch("dataset features do not match the model vocabulary")
    a, r, y = _stack_targets([t for _, t in dataset], model)
    return X, a, r, y


def train(model: NetworkModel, dataset, config: Optional[TrainConfig] = None):
    """RMSProp on shuffled mini-batches; returns a new model and a report.

    The accumulator decays with ``rho`` and each step is
    ``w -= lr * g / sqrt(acc + eps)``.
    """
    config = config or model.config
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    model = model.copy()
    model.config = config
    X, a, r, y = _dataset_arrays(model, dataset)
    rng = np.random.default_rng(config.seed)
    n = len(X)
    order = rng.permutation(n)
    n_val = int(n * config.validation_fraction)
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        raise EmptyDataset("validation split leaves no training rows")
    if config.epochs == 0:
        log.warning("epochs=0: returning the initial weights unchanged")
    acc = {k: np.zeros_like(v) for k, v in model.params.items()}
    report = TrainingReport(epochs=config.epochs)
    lr, eps, rho = config.learning_rate, config.rmsprop_epsilon, config.rho
    for epoch in range(config.epochs):
        perm = train_idx[rng.permutation(len(train_idx))]
        for start in range(0, len(perm), config.batch_size):
            batch = perm[start : start + config.batch_size]
            grads = gradients(model, X[batch], a[batch], r[batch], y[batch])
            for name, g in grads.items():
                acc[name] = rho * acc[name] + (1.0 - rho) * g * g
                model.params[name] = model.params[name] - lr * g / np.sqrt(acc[name] + eps)
        cce, bce, mae = batch_losses(model, X[train_idx], a[train_idx], r[train_idx], y[train_idx])
        report.history.append({"epoch": epoch + 1, "cce": cce, "bce": bce, "mae": mae})
        if n_val:
            vc, vb, vm = batch_losses(model, X[val_idx], a[val_idx], r[val_idx], y[val_idx])
            report.validation.append({"epoch": epoch + 1, "cce": vc, "bce": vb, "mae": vm})
    model.metadata = {
        "seed": config.seed,
        "epochs": int(model.metadata.get("epochs", 0)) + config.epochs,
        "history": report.history,
    }
    return model, report


def evaluate(model: NetworkModel, dataset) -> Dict[str, float]:
    """Losses, action top-1 accuracy and plan-length MAE over a dataset."""
    X, a, r, y = _dataset_arrays(model, dataset)
    probs, _, length = model.forward_batch(X)
    cce, bce, mae = batch_losses(model, X, a, r, y)
    return {
        "cce": cce,
        "bce": bce,
        "mae": mae,
        "accuracy": float(np.mean(np.argmax(probs, axis=1) == a)),
        "length_mae": float(np.mean(np.abs(length - y))),
    }


# gradient check ----------------------------------------------------------


def grad_check(
    model: NetworkModel,
    sample,
    probes: int = 5,
    step: float = 1e-5,
    seed: int = 0,
    gradient_fn: Optional[Callable] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``probes`` random entries are checked in every parameter array. The
    relative error of a pair is ``|a - n| / max(|a|, |n|, 1e-6)`` and is 0
    when both vanish.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    features, target = sample
    X = _as_flat(features)[None, :]
    a, r, y = _stack_targets([target], model)
    grads = (gradient_fn or gradients)(model, X, a, r, y)
    rng = np.random.default_rng(seed)
    worst = 0.0
    work = model.copy()
    for name in sorted(work.params):
        arr = work.params[name]
        flat = arr.reshape(-1)
        if flat.size == 0:
            continue
        for idx in rng.integers(0, flat.size, size=probes):
            old = flat[idx]
            flat[idx] = old + step
            plus = sum(batch_losses(work, X, a, r, y))
            flat[idx] = old - step
            minus = sum(batch_losses(work, X, a, r, y))
            flat[idx] = old
            numeric = (plus - minus) / (2 * step)
            analytic = grads[name].reshape(-1)[idx]
            if analytic == 0.0 and numeric == 0.0:
                continue
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


# persistence -------------------------------------------------------------


def save(model: NetworkModel) -> bytes:
    """JSON container; weight arrays are base64 of little-endian float64."""
    layers = []
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        layers.append(
            {"name": name, "shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}
        )
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "byte_order": "little",
        "dtype": "float64",
        "vocab": model.vocab.to_json(),
        "config": asdict(model.config),
        "metadata": model.metadata,
        "layers": layers,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load(data: bytes) -> NetworkModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptModel("not a ghnplan model file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {doc.get('version')}, expected {FORMAT_VERSION}")
    try:
        vocab = Vocabulary.from_json(doc["vocab"])
        config = TrainConfig(**doc["config"])
        params = {}
        for layer in doc["layers"]:
            raw = base64.b64decode(layer["data"], validate=True)
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            params[layer["name"]] = arr.reshape(layer["shape"])
        metadata = doc.get("metadata", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"malformed model file: {exc}") from None
    expected = init(vocab, config)
    for name, arr in expected.params.items():
        if name not in params or params[name].shape != arr.shape:
            raise CorruptModel(f"layer {name} missing or misshapen")
    if set(params) != set(expected.params):
        raise CorruptModel("unexpected layers in model file")
    return NetworkModel(vocab, config, params, metadata)


def save_file(model: NetworkModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save(model))


def load_file(path) -> NetworkModel:
    with open(path, "rb") as fh:
        return load(fh.read())
