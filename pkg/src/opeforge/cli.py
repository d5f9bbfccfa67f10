"""Command-line entry point: ``opeforge <subcommand>``.

Exit codes: 0 success, 2 invalid input, 3 run failure, 4 infrastructure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import _kernels
from .batch import BatchPlan, read_rows, rows_to_csv, run_batch, summarize, summary_csv
from .cache import ArtifactCache
from .errors import CorruptionError, FailureKind, SpecError
from .experiment import generate_dataset, run_experiment
from .llm import LLMConfigError
from .loop import DEFAULT_ITERATIONS, EXTREME_THRESHOLD, run_optimization
from .patch import ModeKind, ModificationMode, RunDiagnostics, classify_failure, find_corruption
from .proposers import PROPOSER_KINDS, make_proposer
from .spec import enforce_guardrails, parse_spec

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUN_FAILURE = 3
EXIT_INFRA = 4

_EXIT_FOR_KIND = {
    FailureKind.SYNTAX_CODE_ERROR: EXIT_INVALID,
    FailureKind.FILE_CORRUPTION: EXIT_INVALID,
    FailureKind.RUNTIME_INCOMPAT: EXIT_RUN_FAILURE,
    FailureKind.INFRASTRUCTURE: EXIT_INFRA,
}


def _fail(exc: BaseException, stage: str) -> int:
    failure = classify_failure(RunDiagnostics.from_exception(exc, stage))
    print(failure.log_line(), file=sys.stderr)
    return _EXIT_FOR_KIND[failure.kind]


def _load(path: str, strict: bool = False):
    text = Path(path).read_text(encoding="utf-8")
    found = find_corruption(text)
    if found:
        raise CorruptionError(f"file corruption: {found}")
    spec = parse_spec(text)
    for f in enforce_guardrails(spec, strict):
        logging.getLogger("opeforge").warning("guardrail %s: %s=%r", f.rule, f.key, f.value)
    return spec


def _cache(args) -> ArtifactCache | None:
    return ArtifactCache(args.cache) if getattr(args, "cache", None) else None


def cmd_generate_data(args) -> int:
    try:
        spec = _load(args.spec)
        data, truth = generate_dataset(spec, _cache(args))
    except OSError as exc:
        print(f"FAIL syntax_code_error {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        return _fail(exc, "parse")
    Path(args.out).write_text(data.to_csv(), encoding="utf-8", newline="\n")
    print(f"rows={len(data)} ground_truth={truth!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    stage = "parse"
    try:
        spec = _load(args.spec, args.strict_guardrails)
        stage = "evaluate"
        report = run_experiment(spec, _cache(args))
    except OSError as exc:
        print(f"FAIL syntax_code_error {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        return _fail(exc, stage)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    return EXIT_OK


def _proposer_from_args(args):
    schedule = None
    if args.proposer == "grid":
        if not args.grid:
            raise SpecError("--proposer grid needs --grid SCHEDULE.json")
        schedule = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    return make_proposer(args.proposer, seed=args.seed, scale=args.scale, schedule=schedule)


def cmd_optimize(args) -> int:
    try:
        if args.fuzz is not None and args.mode != ModeKind.AGENT_APPLIES.value:
            raise ValueError("--fuzz only applies to --mode agent_applies")
        mode = ModificationMode.named(args.mode, args.fuzz)
        proposer = _proposer_from_args(args)
        result = run_optimization(
            args.spec,
            n=args.iterations,
            mode=mode,
            proposer=proposer,
            workdir=args.workdir,
            cache=_cache(args),
            strict_guardrails=args.strict_guardrails,
            extreme_threshold=args.extreme_threshold,
            objective=args.objective,
        )
    except (OSError, ValueError, LLMConfigError) as exc:
        print(f"FAIL syntax_code_error {exc}", file=sys.stderr)
        return EXIT_INVALID
    if result.baseline is None:
        print(result.baseline_failure.log_line(), file=sys.stderr)
        return _EXIT_FOR_KIND[result.baseline_failure.kind]
    ok = sum(r.succeeded for r in result.iterations)
    print(
        f"iterations={len(result.iterations)} succeeded={ok} best_index={result.best_index} "
        f"pct={result.percentage_change!r} class={result.outcome_class}"
    )
    return EXIT_OK


def cmd_batch(args) -> int:
    try:
        plan = BatchPlan.load(args.plan)
    except (OSError, ValueError) as exc:
        print(f"FAIL syntax_code_error {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.jobs is not None:
        plan.jobs = args.jobs
    rows = run_batch(plan)
    runs_path = plan.workroot / "runs.csv"
    runs_path.write_text(rows_to_csv(rows), encoding="utf-8", newline="\n")
    summary = summary_csv(summarize(rows))
    (plan.workroot / "summary.csv").write_text(summary, encoding="utf-8", newline="\n")
    sys.stdout.write(summary)
    print(f"runs={len(rows)} written to {runs_path}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        rows = read_rows(Path(args.runs).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"FAIL syntax_code_error {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = summary_csv(summarize(rows))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opeforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--backend", action="store_true", help="print the kernel backend and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("generate-data", help="write the logged dataset CSV for a spec")
    p.add_argument("spec")
    p.add_argument("out")
    p.add_argument("--cache")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("evaluate", help="evaluate a spec and print its estimator report")
    p.add_argument("spec")
    p.add_argument("--out")
    p.add_argument("--cache")
    p.add_argument("--strict-guardrails", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="run the iterative optimization loop")
    p.add_argument("spec")
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--mode", choices=[m.value for m in ModeKind], default="whole_code")
    p.add_argument("--fuzz", type=int, default=None, help="agent_applies only (default 2)")
    p.add_argument("--proposer", choices=PROPOSER_KINDS, default="null")
    p.add_argument("--grid", help="JSON list of {key: value} overrides for --proposer grid")
    p.add_argument("--scale", type=float, default=2.0, help="random_perturb factor range [1/s, s]")
    p.add_argument("--workdir", required=True)
    p.add_argument("--objective", help="e.g. relative_ee(dr) or relative_policy_value(ipw),maximize")
    p.add_argument("--extreme-threshold", type=float, default=EXTREME_THRESHOLD)
    p.add_argument("--strict-guardrails", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("batch", help="run a plan of scenarios x modes x proposers")
    p.add_argument("plan")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("report", help="summarize a per-run results CSV")
    p.add_argument("runs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.backend:
        print(_kernels.backend_name())
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
