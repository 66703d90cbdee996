"""Training data: bins of generated problems, solved trajectories, datasets, leapfrogging."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ghnplan import neuralnet
from ghnplan.abstraction import abstract, add_goal_hints, compute_roles
from ghnplan.encoding import (
    Target,
    Vocabulary,
    build_vocabulary,
    encode,
    encode_target,
    rows_to_csv,
)
from ghnplan.errors import BootstrapFailure, EmptyTrainingSet, ReplayError
from ghnplan.generators import DOMAIN_IDS, ProblemInstance, load_domain, make_instance
from ghnplan.heuristic import HeuristicConfig
from ghnplan.neuralnet import NetworkModel, TrainConfig
from ghnplan.pddl import ConcreteState, DomainModel, GroundAction, GroundProblem, apply, applicable
from ghnplan.search import BlindScorer, Budget, GHNScorer, run_search

log = logging.getLogger(__name__)

DATAGEN_BUDGET = Budget(max_nodes=1_000_000, max_seconds=60.0)


# ---------------------------------------------------------------------------
# bins


@dataclass(frozen=True)
class BinSpec:
    """Problem-size parameters per bin: B_0, B_1, ... and an optional B_+."""

    bins: Tuple[Tuple[int, ...], ...]
    plus: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.bins or any(not b for b in self.bins):
            raise ValueError("a bin spec needs at least one nonempty bin")
        for lower, upper in zip(self.bins, self.bins[1:]):
            if max(lower) > min(upper):
                raise ValueError("bin sizes must be nondecreasing")
        if self.plus and min(self.plus) <= max(max(b) for b in self.bins):
            raise ValueError("B_+ sizes must exceed every training bin")

    @property
    def labels(self) -> List[str]:
        out = [f"B{i}" for i in range(len(self.bins))]
        if self.plus:
            out.append("B+")
        return out

    def sizes(self, label: str) -> Tuple[int, ...]:
        if label == "B+":
            if not self.plus:
                raise KeyError("bin spec has no B+")
            return self.plus
        if not re.fullmatch(r"B\d+", label) or int(label[1:]) >= len(self.bins):
            raise KeyError(f"unknown bin {label!r}")
        return self.bins[int(label[1:])]

    @classmethod
    def parse(cls, text: str) -> "BinSpec":
        """``"2;3,4;5-6;+8"``: bins split on ';', values on ',', ranges with '-'; '+' marks B_+."""
        bins, plus = [], ()
        parts = [p.strip() for p in text.split(";") if p.strip()]
        if not parts:
            raise ValueError("empty bin spec")
        for i, part in enumerate(parts):
            is_plus = part.startswith("+")
            if is_plus and i != len(parts) - 1:
                raise ValueError("B_+ must be the last bin")
            values = _parse_values(part[1:] if is_plus else part)
            if is_plus:
                plus = values
            else:
                bins.append(values)
        return cls(tuple(bins), plus)

    def __str__(self) -> str:
        parts = [",".join(map(str, b)) for b in self.bins]
        if self.plus:
            parts.append("+" + ",".join(map(str, self.plus)))
        return ";".join(parts)


def _parse_values(text: str) -> Tuple[int, ...]:
    values = []
    for item in text.split(","):
        item = item.strip()
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", item)
        if not m:
            raise ValueError(f"malformed bin entry {item!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        if hi < lo:
            raise ValueError(f"empty range {item!r}")
        values.extend(range(lo, hi + 1))
    return tuple(sorted(set(values)))


def generate_problems(domain_id: str, bins: BinSpec, bin_label: str, count: int, seed: int) -> List[ProblemInstance]:
    """``count`` problems cycling through the sizes of one bin, deterministic per seed."""
    if domain_id not in DOMAIN_IDS:
        raise ValueError(f"unknown domain {domain_id!r}")
    if count < 1:
        raise ValueError("count must be >= 1")
    sizes = bins.sizes(bin_label)
    out = []
    for k in range(count):
        size = sizes[k % len(sizes)]
        pid = f"{domain_id}-{bin_label.replace('+', 'plus')}-s{seed}-{k:03d}".lower()
        out.append(make_instance(domain_id, size, f"{seed}:{bin_label}:{k}", pid, bin_label))
    return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    problem_id: str
    problem: GroundProblem
    plan: List[GroundAction]
    states: List[ConcreteState]

    @property
    def goal(self):
        return self.problem.goal

    @property
    def objects(self):
        return self.problem.objects

    @classmethod
    def replay(cls, problem_id: str, problem: GroundProblem, plan: Sequence[GroundAction]) -> "Trajectory":
        states = [problem.initial_state]
        for i, action in enumerate(plan):
            if not applicable(states[-1], action):
                raise ReplayError(f"{problem_id}: step {i} {action} is not applicable")
            states.append(apply(states[-1], action))
        if not problem.is_goal(states[-1]):
            raise ReplayError(f"{problem_id}: plan does not reach the goal")
        return cls(problem_id, problem, list(plan), states)

    def to_json(self, problem_file: Optional[str] = None) -> dict:
        return {
            "problem_id": self.problem_id,
            "problem_file": problem_file,
            "plan": [str(a) for a in self.plan],
            "goal": sorted(list(a) for a in self.goal),
            "objects": list(self.objects),
        }

    @classmethod
    def from_json(cls, doc: dict, problem: GroundProblem) -> "Trajectory":
        if sorted(list(a) for a in problem.goal) != doc["goal"] or list(problem.objects) != doc["objects"]:
            raise ReplayError(f"{doc.get('problem_id')}: stored goal/objects disagree with the problem")
        plan = []
        for step in doc["plan"]:
            parts = step.strip("()").split()
            try:
                plan.append(problem.action(parts[0], parts[1:]))
            except Exception as exc:
                raise ReplayError(f"{doc.get('problem_id')}: {exc}") from None
        return cls.replay(doc["problem_id"], problem, plan)


def solve_corpus(
    instances: Sequence[ProblemInstance],
    scorer=None,
    algo: str = "astar",
    budget: Optional[Budget] = None,
) -> Tuple[List[Trajectory], List[str]]:
    """Solve every instance; returns trajectories and the ids that were not solved."""
    scorer = scorer or BlindScorer()
    budget = budget or DATAGEN_BUDGET
    trajectories, failed = [], []
    for inst in instances:
        result = run_search(inst.problem, algo, scorer, budget)
        if result.solved:
            trajectories.append(Trajectory.replay(inst.problem_id, inst.problem, result.plan))
        else:
            log.info("%s not solved (%s)", inst.problem_id, result.status)
            failed.append(inst.problem_id)
    return trajectories, failed


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    rows: List[Tuple[np.ndarray, Target]]
    provenance: List[Tuple[str, int]]
    vocab: Vocabulary

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, self.vocab)


def _pred_arities(vocab: Vocabulary) -> Dict[str, int]:
    out = {p: 1 for p in vocab.unary}
    out.update({p: 2 for p in vocab.binary})
    return out


def build_dataset(
    trajectories: Sequence[Trajectory],
    vocab: Optional[Vocabulary] = None,
    domain: Optional[DomainModel] = None,
    bin_levels: int = 2,
) -> Dataset:
    """One row per (state, action) pair; the terminal state of a trajectory gets no row.

    Without ``vocab`` a fresh vocabulary is built from the trajectories (plus
    ``domain`` when given); with it, the vocabulary is kept frozen and novel
    roles fold.
    """
    if not trajectories:
        raise EmptyTrainingSet("no trajectories to build a dataset from")
    steps = []
    for traj in trajectories:
        n = len(traj.plan)
        for i, action in enumerate(traj.plan):
            hinted = add_goal_hints(traj.states[i], traj.goal)
            steps.append((traj, i, n - i, hinted, action))
    if not steps:
        raise EmptyTrainingSet("trajectories contain no actions")
    if vocab is None:
        samples = []
        for traj, _, _, hinted, action in steps:
            partition = compute_roles(hinted, traj.objects)
            samples.append((hinted, abstract(hinted, partition, {}), action))
        vocab = build_vocabulary(samples, domain=domain, bin_levels=bin_levels)
    preds = _pred_arities(vocab)
    rows, provenance = [], []
    for traj, i, togo, hinted, action in steps:
        partition = compute_roles(hinted, traj.objects, vocab.unary)
        features = encode(hinted, abstract(hinted, partition, preds), partition, vocab)
        rows.append((features.flat, encode_target(action, partition, togo, vocab)))
        provenance.append((traj.problem_id, i))
    return Dataset(rows, provenance, vocab)


# ---------------------------------------------------------------------------
# training pipelines


def model_digest(model: NetworkModel) -> str:
    return hashlib.sha256(neuralnet.save(model)).hexdigest()


def train_on(dataset: Dataset, config: TrainConfig) -> Tuple[NetworkModel, neuralnet.TrainingReport]:
    model = neuralnet.init(dataset.vocab, config)
    return neuralnet.train(model, dataset.rows, config)


@dataclass
class LeapfrogResult:
    models: List[NetworkModel]
    datasets: List[Dataset]
    manifest: dict
    instances: Dict[str, List[ProblemInstance]] = field(default_factory=dict)


def _persist(out_dir, tag, model, dataset, trajectories, instances):
    os.makedirs(out_dir, exist_ok=True)
    model_path = os.path.join(out_dir, f"{tag}.model.json")
    neuralnet.save_file(model, model_path)
    with open(os.path.join(out_dir, f"{tag}.dataset.csv"), "w", encoding="utf-8") as fh:
        fh.write(dataset.to_csv())
    prob_dir = os.path.join(out_dir, "problems")
    traj_dir = os.path.join(out_dir, "trajectories", tag)
    os.makedirs(prob_dir, exist_ok=True)
    os.makedirs(traj_dir, exist_ok=True)
    for inst in instances:
        with open(os.path.join(prob_dir, f"{inst.problem_id}.pddl"), "w", encoding="utf-8") as fh:
            fh.write(inst.text)
    for traj in trajectories:
        ref = os.path.join("problems", f"{traj.problem_id}.pddl")
        with open(os.path.join(traj_dir, f"{traj.problem_id}.json"), "w", encoding="utf-8") as fh:
            json.dump(traj.to_json(ref), fh, sort_keys=True, indent=1)
    return model_path


def leapfrog(
    domain_id: str,
    bins: BinSpec,
    per_bin_count: int,
    train_config: TrainConfig,
    budget: Optional[Budget] = None,
    heuristic_config: Optional[HeuristicConfig] = None,
    algo: str = "astar",
    seed: int = 0,
    out_dir: Optional[str] = None,
) -> LeapfrogResult:
    """Bootstrap leap_0..leap_k: blind search on B_0, then each model solves B_0..B_i for the next.

    Each leap_i is trained from scratch; the vocabulary is fixed by T_0.
    """
    domain = load_domain(domain_id)
    budget = budget or DATAGEN_BUDGET
    labels = [f"B{i}" for i in range(len(bins.bins))]
    instances = {b: generate_problems(domain_id, bins, b, per_bin_count, seed) for b in labels}
    models, datasets, iterations = [], [], []
    vocab = None
    for i, label in enumerate(labels):
        pool = [inst for b in labels[: i + 1] for inst in instances[b]]
        if i == 0:
            scorer, solver = BlindScorer(), "blind"
        else:
            scorer, solver = GHNScorer(models[-1], heuristic_config), f"ghn:leap_{i - 1}"
        trajectories, failed = solve_corpus(pool, scorer, algo, budget)
        per_bin = {b: sum(1 for t in trajectories if t.problem_id in {x.problem_id for x in instances[b]}) for b in labels[: i + 1]}
        if i == 0 and not trajectories:
            raise BootstrapFailure("no B0 problem could be solved by blind search")
        for b, solved in per_bin.items():
            if solved == 0:
                log.warning("leap_%d: no %s problem solved; bin contributes no rows", i, b)
        dataset = build_dataset(trajectories, vocab=vocab, domain=domain, bin_levels=2)
        vocab = dataset.vocab
        model, report = train_on(dataset, train_config)
        models.append(model)
        datasets.append(dataset)
        entry = {
            "tag": f"leap_{i}",
            "solver": solver,
            "problems": len(pool),
            "solved": len(trajectories),
            "solved_per_bin": per_bin,
            "failed": failed,
            "rows": len(dataset),
            "model_sha256": model_digest(model),
            "final_loss": report.history[-1] if report.history else None,
        }
        if out_dir is not None:
            path = _persist(out_dir, f"leap_{i}", model, dataset, trajectories, pool)
            entry["model_file"] = os.path.basename(path)
        iterations.append(entry)
    manifest = {
        "domain": domain_id,
        "bins": str(bins),
        "per_bin_count": per_bin_count,
        "seed": seed,
        "algo": algo,
        "budget": asdict(budget),
        "train_config": asdict(train_config),
        "iterations": iterations,
    }
    if out_dir is not None:
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
    return LeapfrogResult(models, datasets, manifest, instances)


def train_vanilla(
    domain_id: str,
    bins: BinSpec,
    per_bin_count: int,
    train_config: TrainConfig,
    budget: Optional[Budget] = None,
    seed: int = 0,
    out_dir: Optional[str] = None,
) -> LeapfrogResult:
    """Blind-search solutions of every training bin, one model trained on all of them."""
    domain = load_domain(domain_id)
    labels = [f"B{i}" for i in range(len(bins.bins))]
    instances = {b: generate_problems(domain_id, bins, b, per_bin_count, seed) for b in labels}
    pool = [inst for b in labels for inst in instances[b]]
    trajectories, failed = solve_corpus(pool, BlindScorer(), "astar", budget or DATAGEN_BUDGET)
    dataset = build_dataset(trajectories, domain=domain)
    model, report = train_on(dataset, train_config)
    entry = {
        "tag": "no-leap",
        "solver": "blind",
        "problems": len(pool),
        "solved": len(trajectories),
        "failed": failed,
        "rows": len(dataset),
        "model_sha256": model_digest(model),
        "final_loss": report.history[-1] if report.history else None,
    }
    if out_dir is not None:
        entry["model_file"] = os.path.basename(_persist(out_dir, "no-leap", model, dataset, trajectories, pool))
    manifest = {
        "domain": domain_id,
        "bins": str(bins),
        "per_bin_count": per_bin_count,
        "seed": seed,
        "budget": asdict(budget or DATAGEN_BUDGET),
        "train_config": asdict(train_config),
        "iterations": [entry],
    }
    if out_dir is not None:
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
    return LeapfrogResult([model], [dataset], manifest, instances)
