"""Command-line entry point.

Exit status: 0 on success, 1 when the input fails parsing or validation,
2 for usage, configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import experiment
from .parser import ParseFailure, parse
from .validator import SchemaVariant
from .wordlists import WordListFormatError, load_word_list_file, validate_word_list

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = experiment.ExperimentConfig.from_file(args.config)
        overrides = {
            name: value
            for name, value in (
                ("seed", args.seed),
                ("trials", args.trials),
                ("output_path", args.out),
                ("format", args.format),
                ("workers", args.workers),
            )
            if value is not None
        }
        if overrides:
            config = experiment.ExperimentConfig.from_dict({**vars(config), **overrides})
        report = experiment.run_experiment(config, write=False)
    except (experiment.ConfigError, experiment.WordListError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE

    text = experiment.render_report(report, config.format)
    if config.output_path:
        try:
            Path(config.output_path).write_text(text, encoding="utf-8")
        except OSError as exc:
            _err(f"cannot write report: {exc}")
            return EXIT_USAGE
        rates = report.rates
        print(
            f"trials={config.trials} produced={report.aggregate.produced}/{report.aggregate.requested} "
            f"parse_success={rates['parse_success_rate']:.4f} "
            f"end_to_end={rates['end_to_end_success_rate']:.4f} -> {config.output_path}"
        )
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_parse(args: argparse.Namespace) -> int:
    try:
        schema = SchemaVariant.from_name(args.schema)
        raw = Path(args.file).read_bytes().decode("utf-8", errors="replace")
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        outcome = parse(raw, schema)
    except ParseFailure as exc:
        _err("no parsing layer succeeded")
        for layer in exc.layers:
            print(f"  {layer.layer}: {layer.reason}", file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps(
        {"strategy": outcome.strategy.value, "puzzle": outcome.payload.to_dict()},
        ensure_ascii=False, indent=2,
    ))
    return EXIT_OK


def cmd_validate_wordlist(args: argparse.Namespace) -> int:
    try:
        wordlist = load_word_list_file(args.file)
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except WordListFormatError as exc:
        _err(str(exc))
        return EXIT_FAILURE
    violations = validate_word_list(wordlist, args.min_per_length)
    for violation in violations:
        print(violation)
    if violations:
        return EXIT_FAILURE
    print(f"ok: {len(wordlist.words)} words")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slm-resilience", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded simulation experiment")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--format", choices=experiment.REPORT_FORMATS)
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    p = sub.add_parser("parse", help="run the parse pipeline over a raw model output file")
    p.add_argument("--schema", required=True, choices=[v.value for v in SchemaVariant])
    p.add_argument("file")
    p.set_defaults(func=cmd_parse)

    wl = sub.add_parser("validate-wordlist", help="check a word list file")
    wl.add_argument("file")
    wl.add_argument("--min-per-length", type=int, default=experiment.DEFAULT_MIN_PER_LENGTH)
    wl.set_defaults(func=cmd_validate_wordlist)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
