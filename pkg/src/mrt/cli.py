"""Command-line interface: profile, ask, run, eval, ensemble, report-errors."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluate
from .config import RunConfig, load_config
from .errors import (
    LlmUnavailableError,
    MalformedCsvError,
    MrtError,
    ReplayExhaustedError,
    UnknownQuestionIdError,
)
from .gateway import LlmGateway, ScriptedBackend
from .pipeline import PipelineDriver, QuestionSpec, read_manifest
from .profiler import ProfileCache
from .table import load_table
from .trace import ERROR_CATEGORIES, TraceSink, annotate_error, tally_errors

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_GATEWAY = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mrt", description="Answer natural-language questions over tables.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_profile = sub.add_parser("profile", help="profile a table and print per-column stats")
    p_profile.add_argument("--table", required=True)
    p_profile.add_argument("--config")

    p_ask = sub.add_parser("ask", help="answer one question about one table")
    p_ask.add_argument("--table", required=True)
    p_ask.add_argument("--question", required=True)
    p_ask.add_argument("--config")
    p_ask.add_argument("--no-formatter", action="store_true")

    p_run = sub.add_parser("run", help="answer every question in a manifest")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--config")
    p_run.add_argument("--mode", choices=["sequential", "stage-batched"])
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--no-formatter", action="store_true")
    p_run.add_argument("--out-dir")

    p_eval = sub.add_parser("eval", help="score predictions against gold answers")
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--ordered-lists", action="store_true")
    p_eval.add_argument("--out-dir")
    p_eval.add_argument("--config")

    p_ens = sub.add_parser("ensemble", help="majority-vote fusion of prediction runs")
    p_ens.add_argument("runs", nargs="+")
    p_ens.add_argument("--priority", help="comma-separated ranks, one per run (1 = highest)")
    p_ens.add_argument("--out", default="ensemble.jsonl")

    p_err = sub.add_parser("report-errors", help="tally annotated error categories")
    p_err.add_argument("--traces", required=True)
    p_err.add_argument(
        "--annotate",
        action="append",
        default=[],
        metavar="QID=CATEGORY",
        help=f"set a trace's error category first; categories: {', '.join(ERROR_CATEGORIES)}",
    )
    p_err.add_argument("--out-dir")

    return parser


def _load_config(args) -> RunConfig:
    config = load_config(getattr(args, "config", None))
    if getattr(args, "no_formatter", False):
        config.formatter_enabled = False
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "workers", None):
        config.workers = args.workers
    if getattr(args, "out_dir", None):
        config.output_dir = args.out_dir
    if getattr(args, "ordered_lists", False):
        config.eval_ordered_lists = True
    return config


def _gateway(config: RunConfig) -> LlmGateway:
    scripted = None
    needs_scripted = any(b.backend == "scripted" for b in config.gateway.stages.values())
    if needs_scripted:
        if not config.replay_file:
            raise _UsageError(
                "a stage is bound to the scripted backend but no replay_file is configured"
            )
        scripted = ScriptedBackend.from_file(config.replay_file)
    return LlmGateway(config=config.gateway, scripted=scripted)


def _listing_shaped(profile) -> list[dict]:
    out = []
    for cp in profile.column_profiles:
        out.append(
            {
                "name": cp.name,
                "type": cp.type_label,
                "missing_values": cp.missing_values,
                "unique": cp.unique,
                "flag_binary": cp.flag_binary,
                "mean": cp.mean,
                "std": cp.std,
                "freq_values": [v for v, _ in cp.freq_values] if cp.freq_values else None,
                "description": {"name": cp.name, "description": cp.description},
            }
        )
    return out


def _cmd_profile(args) -> int:
    config = _load_config(args)
    table = load_table(args.table)
    cache = ProfileCache(config.cache_dir)
    if cache.contains(table.fingerprint):
        print("(cached)", file=sys.stderr)
    gateway = _gateway(config)
    from .profiler import profile_table

    profile = profile_table(
        table, cache, gateway,
        top_k=config.top_k, max_rows=config.max_rows,
        max_cell_chars=config.max_cell_chars, template_dir=config.template_dir,
    )
    print(json.dumps(_listing_shaped(profile), indent=1, ensure_ascii=False))
    return EXIT_OK


def _format_value(value) -> str:
    if isinstance(value, str):
        return value
    return repr(value)


def _cmd_ask(args) -> int:
    config = _load_config(args)
    gateway = _gateway(config)
    spec = QuestionSpec(
        question_id="ask", table_path=Path(args.table), question=args.question
    )
    if not spec.table_path.is_file():
        raise FileNotFoundError(f"no such table file: {spec.table_path}")
    sink = TraceSink(config.output_dir)
    with PipelineDriver(config, gateway, trace_sink=sink) as driver:
        prediction, trace = driver.answer_question(spec)
    if trace.error is not None:
        print(f"ERROR: {trace.error}")
    else:
        print(_format_value(prediction["value"]))
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load_config(args)
    questions = read_manifest(args.manifest)
    gateway = _gateway(config)
    out_dir = Path(config.output_dir)
    sink = TraceSink(out_dir)
    with PipelineDriver(config, gateway, trace_sink=sink) as driver:
        predictions = driver.run_manifest(questions)
    predictions_path = out_dir / "predictions.jsonl"
    predictions_path.parent.mkdir(parents=True, exist_ok=True)
    with open(predictions_path, "w", encoding="utf-8") as fh:
        for record in predictions:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    failed = sum(1 for r in predictions if r["value"] is None)
    print(
        f"{len(predictions)} questions -> {predictions_path} "
        f"({failed} failed); traces in {sink.path}"
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _load_config(args)
    gold = evaluate.load_predictions(args.gold)
    run = evaluate.load_run_file(args.predictions, priority_rank=1)
    report = evaluate.score_run(run, gold, ordered_lists=config.eval_ordered_lists)
    text = evaluate.render_report_text(report)
    print(text)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval_report.txt").write_text(text + "\n", encoding="utf-8")
        (out_dir / "eval_report.json").write_text(
            json.dumps(evaluate.report_to_json(report), indent=1) + "\n", encoding="utf-8"
        )
        from .figures import save_accuracy_figure

        figure = save_accuracy_figure(report, out_dir / "accuracy_by_type.png")
        print(f"report written to {out_dir} (figure: {figure.name})")
    return EXIT_OK


def _cmd_ensemble(args) -> int:
    if args.priority:
        try:
            ranks = [int(r) for r in args.priority.split(",")]
        except ValueError as exc:
            raise _UsageError(f"bad --priority value: {exc}")
        if len(ranks) != len(args.runs):
            raise _UsageError("--priority needs one rank per run file")
    else:
        ranks = list(range(1, len(args.runs) + 1))
    runs = [
        evaluate.load_run_file(path, priority_rank=rank)
        for path, rank in zip(args.runs, ranks)
    ]
    fused = evaluate.ensemble_runs(runs)
    out = evaluate.write_predictions(args.out, fused)
    print(f"{len(fused)} fused predictions -> {out}")
    return EXIT_OK


def _cmd_report_errors(args) -> int:
    for item in args.annotate:
        if "=" not in item:
            raise _UsageError(f"--annotate expects QID=CATEGORY, got {item!r}")
        qid, _, category = item.partition("=")
        try:
            annotate_error(args.traces, qid.strip(), category.strip())
        except ValueError as exc:
            raise _UsageError(str(exc))
    counts, total = tally_errors(args.traces)
    print(f"{total} traces, {sum(counts.values())} annotated")
    width = max(len(c) for c in ERROR_CATEGORIES)
    for category in ERROR_CATEGORIES:
        n = counts.get(category, 0)
        share = 100.0 * n / total if total else 0.0
        print(f"{category:<{width + 2}}{n:>5}  {share:6.2f}%")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        from .figures import save_error_breakdown_figure

        ordered = {c: counts.get(c, 0) for c in ERROR_CATEGORIES}
        figure = save_error_breakdown_figure(ordered, total, out_dir / "error_categories.png")
        (out_dir / "error_categories.json").write_text(
            json.dumps({"total": total, "counts": ordered}, indent=1) + "\n",
            encoding="utf-8",
        )
        print(f"report written to {out_dir} (figure: {figure.name})")
    return EXIT_OK


_HANDLERS = {
    "profile": _cmd_profile,
    "ask": _cmd_ask,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "ensemble": _cmd_ensemble,
    "report-errors": _cmd_report_errors,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except _UsageError:
        return EXIT_USAGE
    except UnknownQuestionIdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LlmUnavailableError, ReplayExhaustedError) as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except (FileNotFoundError, IsADirectoryError, PermissionError, MalformedCsvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MrtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
