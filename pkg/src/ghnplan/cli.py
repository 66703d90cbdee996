"""Command-line entry point.

Exit codes: 0 solved / success, 1 unsolvable (or invalid plan for ``verify``),
2 budget exhausted, 64 usage error, 65 malformed input data, 66 missing
input file, 70 internal failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from ghnplan import bench, neuralnet
from ghnplan.datagen import BinSpec, generate_problems, leapfrog, solve_corpus, train_vanilla
from ghnplan.errors import GHNError, ParseError
from ghnplan.generators import DOMAIN_IDS, domain_text
from ghnplan.heuristic import HeuristicConfig
from ghnplan.neuralnet import TrainConfig
from ghnplan.pddl import format_plan, load_problem, parse_plan, validate_plan
from ghnplan.search import SOLVED, UNSOLVABLE, Budget, make_scorer, run_search

EXIT_OK = 0
EXIT_UNSOLVABLE = 1
EXIT_BUDGET = 2
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_NOINPUT = 66
EXIT_SOFTWARE = 70

MODEL_DIR_ENV = "GHNPLAN_MODEL_DIR"

log = logging.getLogger("ghnplan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _resolve_model(path: Optional[str]) -> Optional[str]:
    if path is None or os.path.exists(path) or os.path.isabs(path):
        return path
    model_dir = os.environ.get(MODEL_DIR_ENV)
    if model_dir and os.path.exists(os.path.join(model_dir, path)):
        return os.path.join(model_dir, path)
    return path


def _default_out(path: Optional[str], fallback: str) -> str:
    if path:
        return path
    return os.path.join(os.environ.get(MODEL_DIR_ENV, "."), fallback)


def _bins(text: str) -> BinSpec:
    try:
        return BinSpec.parse(text)
    except ValueError as exc:
        raise UsageError(f"bad --bins: {exc}") from None


def _budget(args) -> Budget:
    return Budget(max_nodes=args.max_nodes, max_seconds=args.max_seconds)


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=args.lr,
            rmsprop_epsilon=args.rmsprop_epsilon,
            epochs=args.epochs,
            batch_size=args.batch,
            seed=args.seed,
            blocks=args.blocks,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    if args.scorer == "ghn" and not args.model:
        raise UsageError("--scorer ghn requires --model")
    problem = load_problem(args.domain, args.problem)
    model = neuralnet.load_file(_resolve_model(args.model)) if args.scorer == "ghn" else None
    try:
        heuristic = HeuristicConfig(epsilon=args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scorer = make_scorer(args.scorer, model, heuristic)
    result = run_search(problem, args.algo, scorer, _budget(args))
    record = result.to_record()
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
    print(json.dumps(record, sort_keys=True))
    if result.status == SOLVED:
        if not validate_plan(problem, result.plan):
            log.error("internal error: plan failed validation")
            return EXIT_SOFTWARE
        text = format_plan(result.plan)
        if args.plan_out:
            with open(args.plan_out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    return EXIT_UNSOLVABLE if result.status == UNSOLVABLE else EXIT_BUDGET


def cmd_verify(args) -> int:
    problem = load_problem(args.domain, args.problem)
    with open(args.plan, encoding="utf-8") as fh:
        plan = parse_plan(fh.read(), problem)
    ok = validate_plan(problem, plan)
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_UNSOLVABLE


def cmd_generate(args) -> int:
    bins = _bins(args.bins)
    os.makedirs(os.path.join(args.out, "problems"), exist_ok=True)
    with open(os.path.join(args.out, "domain.pddl"), "w", encoding="utf-8") as fh:
        fh.write(domain_text(args.domain_id))
    entries = []
    for label in bins.labels:
        for inst in generate_problems(args.domain_id, bins, label, args.count, args.seed):
            rel = os.path.join("problems", f"{inst.problem_id}.pddl")
            with open(os.path.join(args.out, rel), "w", encoding="utf-8") as fh:
                fh.write(inst.text)
            entries.append({"problem_id": inst.problem_id, "bin": label, "size": inst.size, "problem_file": rel})
    suite = {
        "domain": args.domain_id,
        "domain_file": "domain.pddl",
        "bins": str(bins),
        "seed": args.seed,
        "problems": entries,
    }
    with open(os.path.join(args.out, "suite.json"), "w", encoding="utf-8") as fh:
        json.dump(suite, fh, indent=2, sort_keys=True)
    print(f"wrote {len(entries)} problems to {args.out}")
    return EXIT_OK


def cmd_solve_corpus(args) -> int:
    from ghnplan.generators import ProblemInstance

    entries, _ = bench.load_suite(args.suite)
    if args.scorer == "ghn" and not args.model:
        raise UsageError("--scorer ghn requires --model")
    model = neuralnet.load_file(_resolve_model(args.model)) if args.scorer == "ghn" else None
    scorer = make_scorer(args.scorer, model, HeuristicConfig(epsilon=args.epsilon))
    instances = []
    for e in entries:
        problem = load_problem(e.domain_file, e.problem_file)
        instances.append(ProblemInstance(e.problem_id, e.domain_id, e.bin, 0, "", problem))
    trajectories, failed = solve_corpus(instances, scorer, args.algo, _budget(args))
    os.makedirs(args.out, exist_ok=True)
    files = {e.problem_id: e.problem_file for e in entries}
    for traj in trajectories:
        with open(os.path.join(args.out, f"{traj.problem_id}.json"), "w", encoding="utf-8") as fh:
            json.dump(traj.to_json(files[traj.problem_id]), fh, sort_keys=True, indent=1)
    print(f"solved {len(trajectories)}/{len(entries)}; skipped: {', '.join(failed) or 'none'}")
    return EXIT_OK


def _report_pipeline(result, out_dir) -> None:
    for it in result.manifest["iterations"]:
        print(f"{it['tag']}: solved {it['solved']}/{it['problems']} rows={it['rows']} sha256={it['model_sha256']}")
    print(f"manifest: {os.path.join(out_dir, 'manifest.json')}")


def cmd_train(args) -> int:
    bins = _bins(args.bins)
    config = _train_config(args)
    out_dir = _default_out(args.out, "model")
    result = train_vanilla(args.domain_id, bins, args.count, config, _budget(args), args.seed, out_dir)
    _report_pipeline(result, out_dir)
    return EXIT_OK


def cmd_leapfrog(args) -> int:
    bins = _bins(args.bins)
    config = _train_config(args)
    out_dir = _default_out(args.out, "leapfrog")
    heuristic = HeuristicConfig(epsilon=args.epsilon)
    result = leapfrog(args.domain_id, bins, args.count, config, _budget(args), heuristic, args.algo,
                      args.seed, out_dir)
    _report_pipeline(result, out_dir)
    return EXIT_OK


def cmd_bench(args) -> int:
    entries, seed = bench.load_suite(args.suite)
    if args.seed is not None:
        seed = args.seed
    try:
        specs = [bench.ScorerSpec.parse(s.strip(), _resolve_model(args.model)) for s in args.scorers.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    specs = [bench.ScorerSpec(s.scorer_id, s.kind, _resolve_model(s.model_path)) for s in specs]
    heuristic = HeuristicConfig(epsilon=args.epsilon)
    records = bench.run_bench(entries, specs, args.algo, _budget(args), heuristic, seed, args.jobs,
                              record_time=not args.no_timing)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(bench.write_records(records))
    sys.stdout.write(bench.format_summary(bench.summarize(records)))
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.csv, encoding="utf-8") as fh:
        text = fh.read()
    try:
        records = bench.read_records(text)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    rows = bench.summarize(records)
    if args.json:
        print(json.dumps(rows, indent=2, sort_keys=True))
    else:
        sys.stdout.write(bench.format_summary(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _search_flags(p, default_nodes=1_000_000, default_seconds=600.0):
    p.add_argument("--algo", choices=("astar", "gbfs"), default="astar")
    p.add_argument("--epsilon", type=float, default=0.5, help="role-prediction threshold for the GHN scorer")
    p.add_argument("--max-nodes", type=int, default=default_nodes)
    p.add_argument("--max-seconds", type=float, default=default_seconds)


def _train_flags(p):
    p.add_argument("--domain-id", choices=DOMAIN_IDS, required=True)
    p.add_argument("--bins", required=True, help="e.g. '2;4;6' (';' between bins, '+N' for B_+)")
    p.add_argument("--count", type=int, default=20, help="problems per bin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--rmsprop-epsilon", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--blocks", type=int, default=2, help="Dense-32 blocks per network")
    p.add_argument("--out", help=f"output directory (default: ${MODEL_DIR_ENV}/...)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ghnplan", description="Learned generalized heuristics for classical planning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one problem")
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("--scorer", choices=("blind", "goal-count", "ghn"), default="blind")
    p.add_argument("--model")
    p.add_argument("--plan-out")
    p.add_argument("--json-out")
    _search_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a plan file against a problem")
    p.add_argument("domain")
    p.add_argument("problem")
    p.add_argument("plan")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="write a problem suite")
    p.add_argument("--domain-id", choices=DOMAIN_IDS, required=True)
    p.add_argument("--bins", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve-corpus", help="solve a suite and store trajectories")
    p.add_argument("--suite", required=True)
    p.add_argument("--scorer", choices=("blind", "goal-count", "ghn"), default="blind")
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    _search_flags(p, default_seconds=60.0)
    p.set_defaults(func=cmd_solve_corpus)

    p = sub.add_parser("train", help="vanilla training from blind-search plans")
    _train_flags(p)
    p.add_argument("--max-nodes", type=int, default=1_000_000)
    p.add_argument("--max-seconds", type=float, default=60.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("leapfrog", help="bootstrap leap_0..leap_k over the bins")
    _train_flags(p)
    _search_flags(p, default_seconds=60.0)
    p.set_defaults(func=cmd_leapfrog)

    p = sub.add_parser("bench", help="run scorers over a suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--scorers", required=True, help="comma list: blind, goal-count, ghn, or id=model.json")
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="leave wall_time_s blank for byte-stable CSVs")
    _search_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="summarize a bench CSV")
    p.add_argument("csv")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ghnplan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"ghnplan: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except (ParseError, GHNError, ValueError) as exc:
        print(f"ghnplan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    except Exception as exc:  # pragma: no cover - last-resort mapping
        print(f"ghnplan: internal error: {exc!r}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
