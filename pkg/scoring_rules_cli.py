#!/usr/bin/env python3
"""
Command-line front-end for the scoring-rule toolkit:
1. derive   - complete a rule-spec T with its false score F and print x, T, F as CSV
2. check    - run the propriety check on a rule-spec and print the report
3. score    - score a forecast CSV (columns q,outcome) with a rule
4. compare  - uniqueness gap when the T components agree, otherwise the
              difference-rule verdicts
5. export   - write a catalog rule as a rule-spec document

Exit codes: 0 success or pass, 1 mathematical failure (propriety violation,
verdict mismatch), 2 input or usage error.
"""

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import pandas as pd

from extended_reals import (
    NEG_INF,
    HypothesisViolated,
    ParseError,
    PreconditionFailed,
    ScoringRuleError,
    ext_close,
    format_ext_real,
    is_neg_inf,
)
from propriety_checks import (
    DEFAULT_TOLERANCE,
    GridSpec,
    difference_propriety,
    propriety_check,
    uniqueness_gap,
)
from rule_catalog import (
    CatalogName,
    catalog_rule,
    document_from_rule,
    function_from_spec,
    load_rule,
    parse_rule_spec,
    serialize_rule_spec,
    write_rule_spec,
)
from rule_representation import derive_false_score
from score_functions import DEFAULT_GRID_N, eval_score, sample

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT_ERROR = 2


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def cmd_derive(args):
    """Derive F from the T block of a rule-spec and print the curves on the grid."""
    doc = parse_rule_spec(Path(args.input).read_text())
    T = function_from_spec(doc.T, "T")
    C = args.C if args.C is not None else (doc.C if doc.C is not None else 0.0)
    c = args.c if args.c is not None else (doc.c if doc.c is not None else 0.0)
    rule = derive_false_score(T, C, c)
    if args.out:
        write_rule_spec(document_from_rule(rule, doc.name), args.out)
        logger.info("wrote derived rule to %s", args.out)
    writer = _writer()
    writer.writerow(["x", "T", "F"])
    for x in GridSpec(args.grid_n).points:
        x = float(x)
        writer.writerow([format_ext_real(x), format_ext_real(eval_score(rule.T, x)),
                         format_ext_real(eval_score(rule.F, x))])
    return EXIT_OK


def cmd_check(args):
    doc, rule = load_rule(args.input)
    report = propriety_check(rule, GridSpec(args.grid_n), args.tol)
    print(f"rule: {doc.name}")
    for line in report.describe():
        print(line)
    return EXIT_OK if report.passed else EXIT_FAILED


def _read_forecasts(path):
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise ParseError(f"malformed forecast CSV: {error}", None, "forecasts") from None
    missing = [column for column in ("q", "outcome") if column not in frame.columns]
    if missing:
        raise ParseError(f"forecast CSV is missing column(s) {', '.join(missing)}", 1, missing[0])
    if frame.empty:
        raise ParseError("forecast CSV has no rows", None, "forecasts")
    q = pd.to_numeric(frame["q"], errors="coerce")
    outcome = pd.to_numeric(frame["outcome"], errors="coerce")
    for index in frame.index:
        line = index + 2
        if pd.isna(q[index]) or not 0.0 <= q[index] <= 1.0:
            raise ParseError(f"q must be a number in [0,1], got '{frame['q'][index]}'", line, "q")
        if outcome[index] not in (0, 1):
            raise ParseError(f"outcome must be 0 or 1, got '{frame['outcome'][index]}'", line, "outcome")
    return q.to_numpy(dtype=float), outcome.to_numpy(dtype=int)


def cmd_score(args):
    """Realised score per forecast: T(q) when the event happened, F(q) otherwise."""
    _, rule = load_rule(args.input)
    q, outcome = _read_forecasts(args.forecasts)
    scores = [eval_score(rule.T if hit else rule.F, float(value)) for value, hit in zip(q, outcome)]
    writer = _writer()
    writer.writerow(["q", "outcome", "score"])
    for value, hit, score in zip(q, outcome, scores):
        writer.writerow([format_ext_real(float(value)), int(hit), format_ext_real(score)])
    if any(is_neg_inf(score) for score in scores):
        mean = NEG_INF
    else:
        mean = math.fsum(scores) / len(scores)
    writer.writerow(["mean", "", format_ext_real(mean)])
    return EXIT_OK


def _truth_scores_agree(first, second, grid):
    points = grid.points
    return all(ext_close(x, y) for x, y in zip(sample(first.T, points), sample(second.T, points)))


def cmd_compare(args):
    """Uniqueness gap for two completions of one T, difference-rule verdicts otherwise."""
    doc_a, rule_a = load_rule(args.a)
    doc_b, rule_b = load_rule(args.b)
    grid = GridSpec(args.grid_n)
    print(f"rules: {doc_a.name} vs {doc_b.name}")
    if _truth_scores_agree(rule_a, rule_b, grid):
        print("T components agree: uniqueness gap")
        try:
            result = uniqueness_gap(rule_a.T, rule_a.F, rule_b.F, grid, args.tol)
        except PreconditionFailed as error:
            print(f"Error: {error}", file=sys.stderr)
            return EXIT_FAILED
        print(f"constant on [0,1): {'yes' if result.is_constant else 'no'}")
        print(f"gap: {format_ext_real(result.gap)}")
        print(f"c_at_1: {format_ext_real(result.c_at_1)}")
        return EXIT_OK if result.is_constant else EXIT_FAILED

    print("T components differ: difference rule")
    verdict = difference_propriety(rule_a, rule_b, grid, args.tol)
    print(f"monotone difference: {'yes' if verdict.corollary_verdict else 'no'}")
    for line in verdict.grid_verdict.describe():
        print(line)
    if not verdict.agree:
        print("verdicts disagree")
        return EXIT_FAILED
    print("difference proper" if verdict.corollary_verdict else "difference not proper")
    return EXIT_OK


def cmd_export(args):
    rule = catalog_rule(args.name)
    doc = document_from_rule(rule, args.name)
    if args.out:
        write_rule_spec(doc, args.out)
        print(f"Wrote {args.name} rule to {args.out}")
    else:
        sys.stdout.write(serialize_rule_spec(doc))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scoring_rules_cli.py",
        description="Derive, check and apply proper scoring rules for binary events")
    parser.add_argument("--verbose", action="store_true", help="log derivation steps to stderr")
    subcommands = parser.add_subparsers(dest="command", required=True)

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--grid-n", type=int, default=DEFAULT_GRID_N,
                      help=f"uniform grid points, at least 3 (default {DEFAULT_GRID_N})")
    grid.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE,
                      help=f"propriety tolerance (default {DEFAULT_TOLERANCE:g})")

    derive = subcommands.add_parser("derive", parents=[grid], help="derive F from the T block")
    derive.add_argument("input", help="rule-spec document")
    derive.add_argument("--C", type=float, default=None, help="free additive constant (default: document C or 0)")
    derive.add_argument("--c", type=float, default=None, help="drop at 1, c >= 0 (default: document c or 0)")
    derive.add_argument("--out", help="write the completed rule-spec here")
    derive.set_defaults(handler=cmd_derive)

    check = subcommands.add_parser("check", parents=[grid], help="check propriety on the grid")
    check.add_argument("input", help="rule-spec document")
    check.set_defaults(handler=cmd_check)

    score = subcommands.add_parser("score", help="score forecasts (CSV with q,outcome)")
    score.add_argument("input", help="rule-spec document")
    score.add_argument("forecasts", help="CSV file with header q,outcome")
    score.set_defaults(handler=cmd_score)

    compare = subcommands.add_parser("compare", parents=[grid], help="compare two rules")
    compare.add_argument("a", help="first rule-spec document")
    compare.add_argument("b", help="second rule-spec document")
    compare.set_defaults(handler=cmd_compare)

    export = subcommands.add_parser("export", help="write a catalog rule as a rule-spec document")
    export.add_argument("name", choices=[name.value for name in CatalogName])
    export.add_argument("--out", help="output path (default: standard output)")
    export.set_defaults(handler=cmd_export)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except HypothesisViolated as error:
        print(f"Error: outside the difference-rule hypothesis: {error}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (ScoringRuleError, ValueError, OSError) as error:
        print(f"Error: {error}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
