#!/usr/bin/env python3
"""
Numerical verification of scoring rules on probe grids:
1. expected_score: p T(q) + (1-p) F(q) with the 0 * -inf = 0 convention
2. propriety_check: the defining inequality over every grid pair (p, q)
3. uniqueness_gap: two completions of the same T differ by a constant on [0,1)
4. difference_propriety: the difference of two proper rules is proper exactly when
   T1 - T2 is non-decreasing or F1 - F2 is non-increasing
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from extended_reals import (
    NEG_INF,
    HypothesisViolated,
    PreconditionFailed,
    ext_add,
    ext_scale,
    is_neg_inf,
)
from rule_representation import ScoringRule
from score_functions import (
    DEFAULT_ACCUMULATION_DEPTH,
    DEFAULT_GRID_N,
    Direction,
    continuous_at_one,
    continuous_at_zero,
    eval_score,
    grid_points,
    is_difference_monotone,
    sample,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-9
CONSTANT_TOLERANCE = 1e-9

CERTIFIED = "certified-closed-form"
GRID_SUPPORTED = "grid-supported"


@dataclass(frozen=True)
class GridSpec:
    """Probe grid: n uniform points, 1/2 and dyadic points accumulating at 0 and 1."""
    n: int = DEFAULT_GRID_N
    include_endpoints: bool = True
    accumulation_depth: int = DEFAULT_ACCUMULATION_DEPTH

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"grid needs at least 3 points, got n={self.n}")

    @cached_property
    def points(self):
        return grid_points(self.n, self.accumulation_depth, self.include_endpoints)


class Witness(NamedTuple):
    p: float
    q: float
    lhs: float
    rhs: float


@dataclass(frozen=True)
class ProprietyReport:
    passed: bool
    worst_violation: float
    witness: Optional[Witness]
    checked_pairs: int
    evidence: str = GRID_SUPPORTED

    def describe(self):
        """Human-readable summary lines, as printed by the command-line front-end."""
        lines = [
            f"propriety: {'passed' if self.passed else 'FAILED'}",
            f"checked pairs: {self.checked_pairs}",
            f"worst violation: {self.worst_violation:.17g}",
            f"evidence: {self.evidence}",
        ]
        if self.witness is not None:
            p, q, lhs, rhs = self.witness
            lines.append(f"witness: p={p:.17g} q={q:.17g} "
                         f"expected(p,p)={lhs:.17g} expected(p,q)={rhs:.17g}")
        return lines


class UniquenessGap(NamedTuple):
    is_constant: bool
    gap: float
    c_at_1: float


class DifferenceVerdict(NamedTuple):
    corollary_verdict: bool
    grid_verdict: ProprietyReport

    @property
    def agree(self):
        return self.corollary_verdict == self.grid_verdict.passed


def expected_score(rule, p, q):
    """
    Expected score of reporting q when the event has probability p.

    Args:
        rule (ScoringRule): Rule providing T and F
        p (float): True probability in [0,1]
        q (float): Reported probability in [0,1]

    Returns:
        float: p T(q) + (1-p) F(q), NEG_INF allowed, with 0 * NEG_INF = 0
    """
    return ext_add(ext_scale(p, eval_score(rule.T, q)), ext_scale(1.0 - p, eval_score(rule.F, q)))


def _weighted(weights, values):
    """weights[:, None] * values[None, :] with 0 * -inf = 0."""
    with np.errstate(invalid="ignore"):
        product = weights[:, None] * values[None, :]
    return np.where(weights[:, None] == 0.0, 0.0, product)


def _propriety_scan(points, T_vals, F_vals, tol, evidence=GRID_SUPPORTED):
    """
    Check every pair (p, q) of the given points against the propriety inequality.

    NEG_INF comparisons are exact: a -inf right-hand side never violates and a
    -inf left-hand side against a finite right-hand side is an infinite violation.
    """
    points = np.asarray(points, dtype=float)
    rhs = _weighted(points, T_vals) + _weighted(1.0 - points, F_vals)
    lhs = np.diag(rhs).copy()
    finite_lhs = np.isfinite(lhs)
    scale = np.where(finite_lhs, 1.0 + np.abs(np.where(finite_lhs, lhs, 0.0)), 1.0)
    with np.errstate(invalid="ignore"):
        gap = (rhs - lhs[:, None]) / scale[:, None]
    violation = np.where(np.isneginf(rhs), 0.0, np.where(finite_lhs[:, None], gap, np.inf))
    violation = np.maximum(violation, 0.0)
    # row-major argmax is the lexicographically smallest (p, q) among the worst pairs
    index = int(np.argmax(violation))
    worst = float(violation.flat[index])
    passed = worst <= tol
    witness = None
    if not passed:
        i, j = np.unravel_index(index, violation.shape)
        witness = Witness(float(points[i]), float(points[j]), float(lhs[i]), float(rhs[i, j]))
    logger.info("propriety scan over %d pairs: worst violation %.3g", violation.size, worst)
    return ProprietyReport(passed, worst, witness, int(violation.size), evidence)


def propriety_check(rule, grid, tol=DEFAULT_TOLERANCE):
    """
    Check p T(p) + (1-p) F(p) >= p T(q) + (1-p) F(q) - tol * scale(p) on all grid pairs.

    scale(p) = 1 + |expected score at (p, p)| when that is finite, else 1.
    Failures are reported, never raised.

    Args:
        rule (ScoringRule): Rule to check
        grid (GridSpec): Probe grid
        tol (float): Relative-plus-absolute tolerance, >= 0

    Returns:
        ProprietyReport: Verdict, worst violation and witness pair
    """
    if tol < 0:
        raise ValueError(f"tolerance must be non-negative, got {tol}")
    points = grid.points
    evidence = GRID_SUPPORTED if rule.has_opaque else CERTIFIED
    return _propriety_scan(points, sample(rule.T, points), sample(rule.F, points), tol, evidence)


def uniqueness_gap(T, F, K, grid, tol=DEFAULT_TOLERANCE):
    """
    Measure how two completions F and K of the same T differ.

    Returns:
        UniquenessGap: is_constant when F - K varies by at most CONSTANT_TOLERANCE
        on the grid points below 1, gap = mean of F - K there, and
        c_at_1 = K(1) - F(1) + gap (minus the extra drop of K at 1 relative to
        F; NEG_INF when either value at 1 is NEG_INF)

    Raises:
        PreconditionFailed: If (T, F) or (T, K) fails propriety_check on the grid
    """
    for name, companion in (("F", F), ("K", K)):
        report = propriety_check(ScoringRule(T, companion), grid, tol)
        if not report.passed:
            raise PreconditionFailed(f"(T, {name}) is not proper on the grid: witness {report.witness}")
    below = np.asarray([p for p in grid.points if p < 1.0], dtype=float)
    first, second = sample(F, below), sample(K, below)
    both_neg_inf = np.isneginf(first) & np.isneginf(second)
    first, second = first[~both_neg_inf], second[~both_neg_inf]
    if not (np.all(np.isfinite(first)) and np.all(np.isfinite(second))):
        return UniquenessGap(False, NEG_INF, NEG_INF)
    difference = first - second
    gap = float(np.mean(difference))
    is_constant = bool(np.max(difference) - np.min(difference) <= CONSTANT_TOLERANCE)
    if is_neg_inf(F.value_at_1) or is_neg_inf(K.value_at_1):
        c_at_1 = NEG_INF
    else:
        c_at_1 = K.value_at_1 - F.value_at_1 + gap
    return UniquenessGap(is_constant, gap, c_at_1)


def _check_endpoint_continuity(rule, label):
    for component, name in ((rule.T, "T"), (rule.F, "F")):
        if not continuous_at_zero(component):
            raise HypothesisViolated(f"{label}: {name} is discontinuous at 0")
        if not continuous_at_one(component):
            raise HypothesisViolated(f"{label}: {name} is discontinuous at 1")


def difference_propriety(r1, r2, grid, tol=DEFAULT_TOLERANCE):
    """
    Decide whether (T1 - T2, F1 - F2) is proper, two ways.

    The monotonicity verdict is exact for closed forms; the grid verdict scans
    the grid points where all four components are finite. For rules continuous
    at 0 and 1 the two must agree.

    Raises:
        HypothesisViolated: If either rule is discontinuous at 0 or 1
    """
    _check_endpoint_continuity(r1, "first rule")
    _check_endpoint_continuity(r2, "second rule")
    corollary_verdict = (is_difference_monotone(r1.T, r2.T, Direction.NON_DECREASING)
                         or is_difference_monotone(r1.F, r2.F, Direction.NON_INCREASING))
    points = grid.points
    values = [sample(component, points) for component in (r1.T, r2.T, r1.F, r2.F)]
    finite = np.all([np.isfinite(v) for v in values], axis=0)
    T1, T2, F1, F2 = (v[finite] for v in values)
    evidence = GRID_SUPPORTED if (r1.has_opaque or r2.has_opaque) else CERTIFIED
    grid_verdict = _propriety_scan(points[finite], T1 - T2, F1 - F2, tol, evidence)
    if corollary_verdict != grid_verdict.passed:
        logger.warning("difference verdicts disagree: monotone=%s grid=%s",
                       corollary_verdict, grid_verdict.passed)
    return DifferenceVerdict(corollary_verdict, grid_verdict)
