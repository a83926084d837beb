#!/usr/bin/env python3
"""
Canonical scoring rules and the rule-spec text format:
1. catalog_rule: the logarithmic, Brier and spherical rules as (T, F) pairs
2. A registry of named Opaque evaluators that rule-spec documents can refer to
3. parse_rule_spec / serialize_rule_spec: the line-oriented document format
   (grammar in rule_spec_format.txt), exact to 17 significant digits
4. rule_from_document / document_from_rule: conversion to and from ScoringRule,
   deriving F on load when the document has no F block
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from extended_reals import (
    NEG_INF,
    NotMonotone,
    ParseError,
    SchemaError,
    format_ext_real,
    parse_ext_real,
)
from rule_representation import Provenance, ScoringRule, derive_false_score
from score_functions import (
    FORM_CLASSES,
    Direction,
    LogForm,
    Opaque,
    Quadratic,
    ScoreFn,
    Segment,
)

logger = logging.getLogger(__name__)

SPHERICAL_SHIFT = -1.0

# Number of parameters each segment form takes in a document
FORM_ARITY = {"constant": 1, "affine": 2, "log": 3, "quadratic": 3, "logquad": 5, "opaque": 1}


class CatalogName(Enum):
    LOG = "log"
    BRIER = "brier"
    SPHERICAL = "spherical"


@dataclass(frozen=True)
class OpaqueEntry:
    """A registered black-box evaluator, finite and continuous on [0,1]."""
    evaluator: Callable[[float], float]
    direction: Direction


def _spherical_norm(x):
    return math.hypot(x, 1.0 - x)


def spherical_truth(x):
    return x / _spherical_norm(x) + SPHERICAL_SHIFT


def spherical_false(x):
    return (1.0 - x) / _spherical_norm(x) + SPHERICAL_SHIFT


OPAQUE_REGISTRY = {
    "spherical_truth": OpaqueEntry(spherical_truth, Direction.NON_DECREASING),
    "spherical_false": OpaqueEntry(spherical_false, Direction.NON_INCREASING),
}


def registered_opaque(name, lo, hi):
    """Build the Opaque form for a registered evaluator on the segment [lo, hi]."""
    try:
        entry = OPAQUE_REGISTRY[name]
    except KeyError:
        raise SchemaError(f"unknown opaque evaluator '{name}'; registered: "
                          f"{', '.join(sorted(OPAQUE_REGISTRY))}") from None
    return Opaque(entry.evaluator, entry.direction, entry.evaluator(lo), entry.evaluator(hi), name)


def _whole_interval(form):
    return [Segment(0.0, 1.0, False, False, form)]


def catalog_rule(name):
    """
    Return one of the standard proper scoring rules.

    Args:
        name (CatalogName or str): 'log', 'brier' or 'spherical'

    Returns:
        ScoringRule: LOG = (ln x, ln(1-x)); BRIER = (-(1-x)^2, -x^2);
        SPHERICAL = (x/|v| - 1, (1-x)/|v| - 1) with |v| = sqrt(x^2 + (1-x)^2)
    """
    name = CatalogName(name)
    if name is CatalogName.LOG:
        T = ScoreFn(_whole_interval(LogForm(1.0, 0.0, 0.0)), NEG_INF, 0.0, Direction.NON_DECREASING)
        F = ScoreFn(_whole_interval(LogForm(0.0, 1.0, 0.0)), 0.0, NEG_INF, Direction.NON_INCREASING)
        notes = "logarithmic score (ln x, ln(1-x))"
    elif name is CatalogName.BRIER:
        T = ScoreFn(_whole_interval(Quadratic(-1.0, 2.0, -1.0)), -1.0, 0.0, Direction.NON_DECREASING)
        F = ScoreFn(_whole_interval(Quadratic(-1.0, 0.0, 0.0)), 0.0, -1.0, Direction.NON_INCREASING)
        notes = "quadratic score (-(1-x)^2, -x^2)"
    else:
        T = ScoreFn(_whole_interval(registered_opaque("spherical_truth", 0.0, 1.0)),
                    spherical_truth(0.0), spherical_truth(1.0), Direction.NON_DECREASING)
        F = ScoreFn(_whole_interval(registered_opaque("spherical_false", 0.0, 1.0)),
                    spherical_false(0.0), spherical_false(1.0), Direction.NON_INCREASING)
        notes = f"spherical score shifted by {format_ext_real(SPHERICAL_SHIFT)} into [-1, 0]"
    return ScoringRule(T, F, provenance=Provenance.CATALOG, notes=notes)


@dataclass(frozen=True)
class SegmentSpec:
    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool
    form: str
    params: tuple


@dataclass(frozen=True)
class FunctionSpec:
    segments: tuple
    value_at_0: float
    value_at_1: float
    direction: Direction


@dataclass(frozen=True)
class RuleSpecDocument:
    name: str
    T: FunctionSpec
    F: Optional[FunctionSpec] = None
    C: Optional[float] = None
    c: Optional[float] = None
    notes: str = ""


def _number(text, line, field):
    try:
        return parse_ext_real(text)
    except ValueError as error:
        raise ParseError(f"'{text}' is not a number ({error})", line, field) from None


def _finite(text, line, field):
    value = _number(text, line, field)
    if not math.isfinite(value):
        raise ParseError(f"'{text}' must be finite", line, field)
    return value


def _flag(text, line, field):
    if text not in ("0", "1"):
        raise ParseError(f"closure flag must be 0 or 1, got '{text}'", line, field)
    return text == "1"


def _parse_segment(fields, line):
    if len(fields) < 6:
        raise ParseError("expected 'segment lo hi lo_closed hi_closed form params...'", line, "segment")
    lo, hi = _finite(fields[1], line, "lo"), _finite(fields[2], line, "hi")
    lo_closed, hi_closed = _flag(fields[3], line, "lo_closed"), _flag(fields[4], line, "hi_closed")
    form = fields[5]
    if form not in FORM_ARITY:
        raise ParseError(f"unknown form '{form}'", line, "form")
    raw = fields[6:]
    if len(raw) != FORM_ARITY[form]:
        raise ParseError(f"form '{form}' takes {FORM_ARITY[form]} parameters, got {len(raw)}",
                         line, "params")
    if form == "opaque":
        params = (raw[0],)
    else:
        params = tuple(_finite(text, line, "params") for text in raw)
    return SegmentSpec(lo, hi, lo_closed, hi_closed, form, params)


class _BlockBuilder:
    def __init__(self, role, line):
        self.role = role
        self.line = line
        self.segments = []
        self.value_at_0 = None
        self.value_at_1 = None
        self.direction = Direction.NON_DECREASING if role == "T" else Direction.NON_INCREASING
        self.seen = set()

    def claim(self, keyword, line):
        if keyword in self.seen:
            raise ParseError(f"'{keyword}' given twice in the {self.role} block", line, keyword)
        self.seen.add(keyword)

    def finish(self):
        if not self.segments:
            raise ParseError(f"{self.role} block has no segments", self.line, "segment")
        for field, value in (("at0", self.value_at_0), ("at1", self.value_at_1)):
            if value is None:
                raise ParseError(f"{self.role} block is missing '{field}'", self.line, field)
        return FunctionSpec(tuple(self.segments), self.value_at_0, self.value_at_1, self.direction)


def parse_rule_spec(text):
    """
    Parse a rule-spec document.

    Args:
        text (str): Document text

    Returns:
        RuleSpecDocument: Parsed fields; F is None when the document has no F block

    Raises:
        ParseError: Malformed line, with its 1-based line number and field
        ValueError: If c < 0
    """
    name, notes, C, c = None, [], None, None
    blocks, current, constants = {}, None, set()
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        keyword = fields[0]
        if name is None and keyword != "rule":
            raise ParseError("document must start with 'rule <name>'", number, "rule")
        if keyword == "rule":
            if name is not None or len(fields) != 2:
                raise ParseError("expected a single 'rule <name>' header", number, "rule")
            name = fields[1]
        elif keyword == "notes":
            note = line[len("notes"):].strip()
            if not note:
                raise ParseError("notes line needs text", number, "notes")
            notes.append(note)
        elif keyword in ("T", "F"):
            if len(fields) != 1 or keyword in blocks or (current and current.role == keyword):
                raise ParseError(f"duplicate or malformed '{keyword}' block marker", number, keyword)
            if current is not None:
                blocks[current.role] = current.finish()
            current = _BlockBuilder(keyword, number)
        elif keyword in ("C", "c"):
            if len(fields) != 2:
                raise ParseError(f"expected '{keyword} <real>'", number, keyword)
            if keyword in constants:
                raise ParseError(f"'{keyword}' given twice", number, keyword)
            constants.add(keyword)
            value = _finite(fields[1], number, keyword)
            if keyword == "C":
                C = value
            else:
                c = value
        elif keyword in ("direction", "segment", "at0", "at1"):
            if current is None:
                raise ParseError(f"'{keyword}' outside a T or F block", number, keyword)
            if keyword == "segment":
                current.segments.append(_parse_segment(fields, number))
            elif len(fields) != 2:
                raise ParseError(f"expected '{keyword} <value>'", number, keyword)
            elif keyword == "direction":
                current.claim(keyword, number)
                try:
                    current.direction = Direction(fields[1])
                except ValueError:
                    raise ParseError(f"unknown direction '{fields[1]}'", number, "direction") from None
            elif keyword == "at0":
                current.claim(keyword, number)
                current.value_at_0 = _number(fields[1], number, "at0")
            else:
                current.claim(keyword, number)
                current.value_at_1 = _number(fields[1], number, "at1")
        else:
            raise ParseError(f"unknown keyword '{keyword}'", number, keyword)
    if name is None:
        raise ParseError("empty document", None, "rule")
    if current is not None:
        blocks[current.role] = current.finish()
    if "T" not in blocks:
        raise ParseError("document has no T block", None, "T")
    if c is not None and c < 0:
        raise ValueError(f"the drop at 1 must satisfy c >= 0, got c={format_ext_real(c)}")
    return RuleSpecDocument(name, blocks["T"], blocks.get("F"), C, c, "\n".join(notes))


def _serialize_function(role, spec):
    lines = [role, f"direction {spec.direction.value}"]
    for segment in spec.segments:
        if segment.form == "opaque":
            params = list(segment.params)
        else:
            params = [format_ext_real(value) for value in segment.params]
        lines.append(" ".join(
            ["segment", format_ext_real(segment.lo), format_ext_real(segment.hi),
             str(int(segment.lo_closed)), str(int(segment.hi_closed)), segment.form] + params))
    lines.append(f"at0 {format_ext_real(spec.value_at_0)}")
    lines.append(f"at1 {format_ext_real(spec.value_at_1)}")
    return lines


def serialize_rule_spec(doc):
    """Write a document in the rule-spec format; parse_rule_spec inverts it field for field."""
    lines = [f"rule {doc.name}"]
    if doc.notes:
        for note in doc.notes.split("\n"):
            if not note or note != note.strip():
                raise SchemaError(f"note {note!r} cannot be written as a notes line")
            lines.append(f"notes {note}")
    lines.extend(_serialize_function("T", doc.T))
    if doc.F is not None:
        lines.extend(_serialize_function("F", doc.F))
    if doc.C is not None:
        lines.append(f"C {format_ext_real(doc.C)}")
    if doc.c is not None:
        lines.append(f"c {format_ext_real(doc.c)}")
    return "\n".join(lines) + "\n"


def _build_form(segment):
    if segment.form == "opaque":
        return registered_opaque(segment.params[0], segment.lo, segment.hi)
    return FORM_CLASSES[segment.form](*segment.params)


def function_from_spec(spec, role="T"):
    """
    Build a ScoreFn from a parsed function block.

    Raises:
        SchemaError: If the function does not have the block's declared direction
    """
    segments = [Segment(s.lo, s.hi, s.lo_closed, s.hi_closed, _build_form(s)) for s in spec.segments]
    try:
        return ScoreFn(segments, spec.value_at_0, spec.value_at_1, spec.direction)
    except NotMonotone as error:
        raise SchemaError(f"{role} is declared {spec.direction.value}: {error}") from None


def rule_from_document(doc):
    """
    Build the ScoringRule a document describes.

    A document without an F block is completed on load with
    derive_false_score(T, C, c), C and c defaulting to 0.
    """
    T = function_from_spec(doc.T, "T")
    C = 0.0 if doc.C is None else doc.C
    c = 0.0 if doc.c is None else doc.c
    if doc.F is None:
        if T.direction is not Direction.NON_DECREASING:
            raise SchemaError("F can only be derived from a T declared nondecreasing")
        logger.info("rule %s has no F block; deriving F with C=%s c=%s", doc.name, C, c)
        rule = derive_false_score(T, C, c)
        return ScoringRule(rule.T, rule.F, C, c, rule.provenance, doc.notes)
    F = function_from_spec(doc.F, "F")
    return ScoringRule(T, F, C, c, Provenance.USER_SUPPLIED, doc.notes)


def _segment_spec(segment):
    form = segment.form
    if isinstance(form, Opaque):
        if form.name not in OPAQUE_REGISTRY or form.evaluator is not OPAQUE_REGISTRY[form.name].evaluator:
            return None
        params = (form.name,)
    else:
        params = tuple(float(value) for value in form.params())
    return SegmentSpec(segment.lo, segment.hi, segment.lo_closed, segment.hi_closed, form.kind, params)


def function_spec(f):
    """FunctionSpec for a ScoreFn, or None if it holds an unregistered Opaque segment."""
    segments = [_segment_spec(segment) for segment in f.segments]
    if any(segment is None for segment in segments):
        return None
    return FunctionSpec(tuple(segments), f.value_at_0, f.value_at_1, f.direction)


def document_from_rule(rule, name):
    """
    Describe a rule as a rule-spec document.

    A derived F that cannot be written (unregistered Opaque segments) is
    left out; its C and c are kept so loading derives it again.

    Raises:
        SchemaError: If T itself cannot be written
    """
    T = function_spec(rule.T)
    if T is None:
        raise SchemaError(f"T of rule '{name}' has an unregistered opaque segment")
    F = function_spec(rule.F)
    if F is None:
        if rule.provenance is not Provenance.DERIVED_FROM_T:
            raise SchemaError(f"F of rule '{name}' has an unregistered opaque segment")
        logger.info("F of rule %s is opaque; writing T with C and c only", name)
    return RuleSpecDocument(name, T, F, rule.C, rule.c, rule.notes)


def load_rule(path):
    """Read and build a rule from a rule-spec file. Returns (document, rule)."""
    with open(path, "r") as handle:
        doc = parse_rule_spec(handle.read())
    return doc, rule_from_document(doc)


def write_rule_spec(doc, path):
    with open(path, "w") as handle:
        handle.write(serialize_rule_spec(doc))
