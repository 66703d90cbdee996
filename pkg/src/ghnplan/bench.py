"""Benchmark suites, per-run records and their CSV summary."""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

from ghnplan.heuristic import HeuristicConfig
from ghnplan.neuralnet import load_file
from ghnplan.pddl import load_problem
from ghnplan.search import Budget, make_scorer, run_search

CSV_SCHEMA = "# ghnplan-bench v1"


@dataclass
class BenchRecord:
    domain_id: str
    bin: str
    problem_id: str
    scorer_id: str
    status: str
    plan_length: Optional[int]
    nodes_expanded: Optional[int]
    nodes_generated: Optional[int]
    wall_time_s: Optional[float]
    seed: int


FIELDS = [f.name for f in fields(BenchRecord)]
_INT_FIELDS = {"plan_length", "nodes_expanded", "nodes_generated", "seed"}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIELDS)
    for rec in records:
        writer.writerow([_fmt(getattr(rec, name)) for name in FIELDS])
    return buf.getvalue()


def read_records(text: str) -> List[BenchRecord]:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_SCHEMA:
        raise ValueError("not a ghnplan bench CSV (missing schema line)")
    reader = csv.reader(lines[1:])
    header = next(reader)
    if header != FIELDS:
        raise ValueError(f"unexpected bench CSV header {header}")
    out = []
    for row in reader:
        values = {}
        for name, raw in zip(FIELDS, row):
            if raw == "" and name not in ("domain_id", "bin", "problem_id", "scorer_id", "status"):
                values[name] = None
            elif name in _INT_FIELDS:
                values[name] = int(raw)
            elif name == "wall_time_s":
                values[name] = float(raw)
            else:
                values[name] = raw
        out.append(BenchRecord(**values))
    return out


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteEntry:
    problem_id: str
    domain_id: str
    bin: str
    domain_file: str
    problem_file: str


def load_suite(path: str) -> Tuple[List[SuiteEntry], int]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for item in doc["problems"]:
        entries.append(
            SuiteEntry(
                problem_id=item["problem_id"],
                domain_id=item.get("domain_id", doc.get("domain", "")),
                bin=item.get("bin", ""),
                domain_file=os.path.join(base, item.get("domain_file", doc.get("domain_file", ""))),
                problem_file=os.path.join(base, item["problem_file"]),
            )
        )
    return entries, int(doc.get("seed", 0))


@dataclass(frozen=True)
class ScorerSpec:
    """``blind``, ``goal-count``, or ``<id>=<model path>`` for a GHN."""

    scorer_id: str
    kind: str
    model_path: Optional[str] = None

    @classmethod
    def parse(cls, text: str, default_model: Optional[str] = None) -> "ScorerSpec":
        if "=" in text:
            sid, path = text.split("=", 1)
            if not sid or not path:
                raise ValueError(f"malformed scorer spec {text!r}")
            return cls(sid, "ghn", path)
        if text == "ghn":
            if default_model is None:
                raise ValueError("scorer 'ghn' needs --model")
            return cls("ghn", "ghn", default_model)
        if text not in ("blind", "goal-count"):
            raise ValueError(f"unknown scorer {text!r}")
        return cls(text, text)


_MODELS: Dict[str, object] = {}


def _scorer_for(spec: ScorerSpec, heuristic: HeuristicConfig):
    if spec.kind != "ghn":
        return make_scorer(spec.kind)
    model = _MODELS.get(spec.model_path)
    if model is None:
        model = _MODELS[spec.model_path] = load_file(spec.model_path)
    return make_scorer("ghn", model, heuristic)


def run_one(entry: SuiteEntry, spec: ScorerSpec, algo: str, budget: Budget, heuristic: HeuristicConfig,
            seed: int, record_time: bool = True) -> BenchRecord:
    try:
        problem = load_problem(entry.domain_file, entry.problem_file)
        result = run_search(problem, algo, _scorer_for(spec, heuristic), budget)
    except Exception:
        return BenchRecord(entry.domain_id, entry.bin, entry.problem_id, spec.scorer_id, "error",
                           None, None, None, None, seed)
    return BenchRecord(
        entry.domain_id,
        entry.bin,
        entry.problem_id,
        spec.scorer_id,
        result.status,
        result.plan_length,
        result.nodes_expanded,
        result.nodes_generated,
        result.wall_time if record_time else None,
        seed,
    )


def _run_task(args):
    return run_one(*args)


def run_bench(entries: Sequence[SuiteEntry], specs: Sequence[ScorerSpec], algo: str, budget: Budget,
              heuristic: HeuristicConfig, seed: int, jobs: int = 1, record_time: bool = True) -> List[BenchRecord]:
    """One record per (problem, scorer), in suite order then scorer order."""
    tasks = [(e, s, algo, budget, heuristic, seed, record_time) for e in entries for s in specs]
    if jobs <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


# ---------------------------------------------------------------------------
# summary


def summarize(records: Sequence[BenchRecord]) -> List[dict]:
    """Per (bin, scorer): problems, solved, mean/median nodes and plan length over solved runs."""
    groups: Dict[Tuple[str, str], List[BenchRecord]] = {}
    for rec in records:
        groups.setdefault((rec.bin, rec.scorer_id), []).append(rec)
    rows = []
    for (bin_, scorer), recs in sorted(groups.items()):
        solved = [r for r in recs if r.status == "solved"]
        nodes = [r.nodes_expanded for r in solved]
        lengths = [r.plan_length for r in solved]
        times = [r.wall_time_s for r in solved if r.wall_time_s is not None]
        rows.append(
            {
                "bin": bin_,
                "scorer": scorer,
                "problems": len(recs),
                "solved": len(solved),
                "mean_nodes_expanded": statistics.fmean(nodes) if nodes else None,
                "median_nodes_expanded": statistics.median(nodes) if nodes else None,
                "mean_plan_length": statistics.fmean(lengths) if lengths else None,
                "median_plan_length": statistics.median(lengths) if lengths else None,
                "mean_wall_time_s": statistics.fmean(times) if times else None,
            }
        )
    return rows


def format_summary(rows: Sequence[dict]) -> str:
    cols = ["bin", "scorer", "problems", "solved", "mean_nodes_expanded", "median_nodes_expanded",
            "mean_plan_length", "median_plan_length", "mean_wall_time_s"]

    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.2f}"
        return str(v)

    table = [cols] + [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table) + "\n"
