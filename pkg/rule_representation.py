#!/usr/bin/env python3
"""
Construction of proper scoring rules from one monotone component:
1. derive_false_score: the false score F completing a non-decreasing truth score T
   F(x) = C - x T(x)/(1-x) + integral from 1/2 to x of T(u)/(1-u)^2 du,
   with F(1) = -c + lim F (T continuous at 1) or -inf (T jumps at 1)
2. derive_truth_score: the mirror construction of T from a non-increasing F
3. The indicator building blocks, level sets and the layer-cake identity
4. The convex representation G(p) = p T(p) + (1-p) F(p), G'(p) = T(p) - F(p)
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from extended_reals import (
    COEFFICIENT_TOLERANCE,
    NEG_INF,
    DomainError,
    InvalidInterval,
    NotMonotone,
    NotNonPositive,
    ext_add,
    ext_scale,
    is_neg_inf,
)
from score_functions import (
    Constant,
    Direction,
    Opaque,
    ScoreFn,
    Segment,
    clip_below,
    closed_form,
    continuous_at_one,
    continuous_at_zero,
    eval_score,
    is_monotone,
    probe_limit,
    reflect,
    sample,
)
from weighted_quadrature import (
    Weight,
    antiderivative,
    antiderivative_over_u_sq,
    integrate_form,
    integrate_signed,
)

logger = logging.getLogger(__name__)

BASE_POINT = 0.5
NORMALISATION_TOLERANCE = 1e-12
LEVEL_SET_CLIP_DELTA = 1e-6
LEVEL_TOLERANCE = 1e-12
MIDPOINT_CONVEXITY_TOLERANCE = 1e-9
OPAQUE_CACHE_SIZE = 4096


class Provenance(Enum):
    DERIVED_FROM_T = "derived-from-T"
    DERIVED_FROM_F = "derived-from-F"
    CATALOG = "catalog"
    USER_SUPPLIED = "user-supplied"


@dataclass(frozen=True)
class ScoringRule:
    """
    A (T, F) pair with the constants used to build it.

    T is the score received when the event happens, F when it does not.
    Propriety is not assumed here; propriety_checks verifies it.
    """
    T: ScoreFn
    F: ScoreFn
    C: float = 0.0
    c: float = 0.0
    provenance: Provenance = Provenance.USER_SUPPLIED
    notes: str = ""

    def __post_init__(self):
        if self.c < 0:
            raise ValueError(f"the drop at 1 must satisfy c >= 0, got c={self.c}")
        if (self.provenance is Provenance.DERIVED_FROM_T and not continuous_at_one(self.T)
                and not is_neg_inf(self.F.value_at_1)):
            raise ValueError("T jumps at 1, so the derived F must be -inf at 1")

    @property
    def has_opaque(self):
        return self.T.has_opaque or self.F.has_opaque


def _snap(value, scale):
    return 0.0 if abs(value) <= COEFFICIENT_TOLERANCE * (1.0 + scale) else value


def _stable_false_evaluator(T_form, lo, anchor):
    """
    F(x) on an Opaque segment [lo, hi] of T, for lo <= x < 1.

    Uses F(x) = anchor - T(x) lo/(1-lo) - J(x), where anchor = C plus the
    weighted integral of T from 1/2 to lo and
    J(x) = integral over [lo, x] of (T(x) - T(u))/(1-u)^2 du,
    which stays well conditioned as x approaches 1.
    """
    evaluator = T_form.evaluator

    @lru_cache(maxsize=OPAQUE_CACHE_SIZE)
    def false_score(x):
        tx = evaluator(x)
        gap = Opaque(lambda u: tx - evaluator(u), Direction.UNCONSTRAINED, None, None)
        jump = integrate_form(gap, lo, x, Weight.ONE_OVER_1_MINUS_U_SQ).value if x > lo else 0.0
        head = tx * lo / (1.0 - lo) if lo > 0.0 else 0.0
        return anchor - head - jump

    return false_score


def _derive_false_segment(segment, C, T):
    """Completion F on one segment of T, closed form whenever the grammar allows it."""
    lo, hi, form = segment.lo, segment.hi, segment.form
    anchor = C + integrate_signed(T, BASE_POINT, lo, Weight.ONE_OVER_1_MINUS_U_SQ).value
    if segment.is_point:
        head = -lo * form(lo) / (1.0 - lo)
        return segment.with_form(Constant(anchor + head))
    if isinstance(form, Opaque):
        evaluator = _stable_false_evaluator(form, lo, anchor)
        truth_lo = form.lim_lo if form.lim_lo is not None else form(lo)
        lim_lo = anchor - (truth_lo * lo / (1.0 - lo) if lo > 0.0 else 0.0)
        lim_hi = evaluator(hi) if hi < 1.0 else probe_limit(evaluator, 1)
        logger.info("opaque T segment on [%s, %s]: F kept as an opaque segment", lo, hi)
        derived = Opaque(evaluator, Direction.NON_INCREASING, lim_lo, lim_hi)
        return segment.with_form(derived)

    coefficients = form.coefficients()
    a, b, q2, q1, q0 = coefficients
    # -x g(x)/(1-x) + A(x) for g = a ln u + q2 u^2 + q1 u + q0 with A the antiderivative table
    log_coefficient = _snap(a + b + q1 + 2.0 * q2, abs(a) + abs(b) + abs(q1) + 2.0 * abs(q2))
    offset = anchor - antiderivative(coefficients, lo)
    derived = closed_form(0.0, log_coefficient, q2, q1 + 2.0 * q2, q0 + q1 + q2 + offset)
    if b == 0:
        return segment.with_form(derived)

    # ln(1-u) in T leaves a b/(1-x) term outside the grammar; keep F exact but opaque
    def false_score(x):
        return derived(x) + b / (1.0 - x)

    lim_hi = false_score(hi) if hi < 1.0 else NEG_INF
    opaque = Opaque(false_score, Direction.NON_INCREASING, false_score(lo), lim_hi)
    return segment.with_form(opaque)


def derive_false_score(T, C=0.0, c=0.0):
    """
    Complete a non-decreasing truth score T to a proper rule (T, F).

    Args:
        T (ScoreFn): Non-decreasing, finite on (0,1)
        C (float): Free additive constant on [0,1)
        c (float): Drop at 1, c >= 0 (used only when T is continuous at 1)

    Returns:
        ScoringRule: (T, F) with provenance DERIVED_FROM_T

    Raises:
        NotMonotone: If T is not non-decreasing
        ValueError: If c < 0
        NonConvergence: If an Opaque segment of T cannot be integrated
    """
    if c < 0:
        raise ValueError(f"the drop at 1 must satisfy c >= 0, got c={c}")
    if not is_monotone(T, Direction.NON_DECREASING):
        raise NotMonotone("derive_false_score needs a non-decreasing T")
    segments = [_derive_false_segment(segment, C, T) for segment in T.segments
                if not (segment.is_point and segment.lo in (0.0, 1.0))]
    value_at_0 = C + integrate_signed(T, BASE_POINT, 0.0, Weight.ONE_OVER_1_MINUS_U_SQ).value
    last = next(s for s in reversed(segments) if s.hi == 1.0)
    if continuous_at_one(T):
        value_at_1 = ext_add(last.right_limit(), -c)
    else:
        value_at_1 = NEG_INF
    F = ScoreFn(segments, value_at_0, value_at_1, Direction.NON_INCREASING)
    logger.debug("derived F with C=%s c=%s: F(0)=%s F(1)=%s", C, c, value_at_0, value_at_1)
    return ScoringRule(T, F, C, c, Provenance.DERIVED_FROM_T)


def _stable_truth_evaluator(F_form, hi, anchor):
    """
    T(x) on an Opaque segment [lo, hi] of F, for 0 < x <= hi.

    Uses T(x) = anchor - F(x)(1-hi)/hi + J(x), where anchor = C plus the
    weighted integral of F from hi to 1/2 and
    J(x) = integral over [x, hi] of (F(u) - F(x))/u^2 du.
    """
    evaluator = F_form.evaluator

    @lru_cache(maxsize=OPAQUE_CACHE_SIZE)
    def truth_score(x):
        fx = evaluator(x)
        gap = Opaque(lambda u: evaluator(u) - fx, Direction.UNCONSTRAINED, None, None)
        jump = integrate_form(gap, x, hi, Weight.ONE_OVER_U_SQ).value if x < hi else 0.0
        head = fx * (1.0 - hi) / hi if hi < 1.0 else 0.0
        return anchor - head + jump

    return truth_score


def _derive_truth_segment(segment, C, F):
    lo, hi, form = segment.lo, segment.hi, segment.form
    anchor = C + integrate_signed(F, hi, BASE_POINT, Weight.ONE_OVER_U_SQ).value
    if segment.is_point:
        head = -(1.0 - hi) * form(hi) / hi
        return segment.with_form(Constant(anchor + head))
    if isinstance(form, Opaque):
        evaluator = _stable_truth_evaluator(form, hi, anchor)
        false_hi = form.lim_hi if form.lim_hi is not None else form(hi)
        lim_hi = anchor - (false_hi * (1.0 - hi) / hi if hi < 1.0 else 0.0)
        lim_lo = evaluator(lo) if lo > 0.0 else probe_limit(evaluator, 0)
        logger.info("opaque F segment on [%s, %s]: T kept as an opaque segment", lo, hi)
        derived = Opaque(evaluator, Direction.NON_DECREASING, lim_lo, lim_hi)
        return segment.with_form(derived)

    coefficients = form.coefficients()
    a, b, q2, q1, q0 = coefficients
    # -(1-x) g(x)/x - B(x) for g = b ln(1-u) + q2 u^2 + q1 u + q0 with B the 1/u^2 table
    log_coefficient = _snap(a + b - q1, abs(a) + abs(b) + abs(q1))
    offset = anchor + antiderivative_over_u_sq(coefficients, hi)
    derived = closed_form(log_coefficient, 0.0, q2, q1 - 2.0 * q2, q0 - q1 + offset)
    if a == 0:
        return segment.with_form(derived)

    # ln(u) in F leaves an a/x term outside the grammar
    def truth_score(x):
        return derived(x) + a / x

    lim_lo = truth_score(lo) if lo > 0.0 else NEG_INF
    opaque = Opaque(truth_score, Direction.NON_DECREASING, lim_lo, truth_score(hi))
    return segment.with_form(opaque)


def derive_truth_score(F, C=0.0, c=0.0):
    """
    Complete a non-increasing false score F to a proper rule (T, F).

    T(x) = C - (1-x) F(x)/x + integral from x to 1/2 of F(u)/u^2 du for x > 0,
    T(0) = -c + lim T (F continuous at 0) or -inf (F jumps at 0).
    Integrates against 1/u^2 directly; derive_truth_score_by_reflection
    gives the same rule through the reflection duality.
    """
    if c < 0:
        raise ValueError(f"the drop at 0 must satisfy c >= 0, got c={c}")
    if not is_monotone(F, Direction.NON_INCREASING):
        raise NotMonotone("derive_truth_score needs a non-increasing F")
    segments = [_derive_truth_segment(segment, C, F) for segment in F.segments
                if not (segment.is_point and segment.lo in (0.0, 1.0))]
    value_at_1 = C + integrate_signed(F, 1.0, BASE_POINT, Weight.ONE_OVER_U_SQ).value
    first = next(s for s in segments if s.lo == 0.0)
    if continuous_at_zero(F):
        value_at_0 = ext_add(first.left_limit(), -c)
    else:
        value_at_0 = NEG_INF
    T = ScoreFn(segments, value_at_0, value_at_1, Direction.NON_DECREASING)
    return ScoringRule(T, F, C, c, Provenance.DERIVED_FROM_F)


def reflect_rule(rule):
    """(T, F) -> (F*, T*) with g*(x) = g(1-x); provenance and constants carry over."""
    provenance = {
        Provenance.DERIVED_FROM_T: Provenance.DERIVED_FROM_F,
        Provenance.DERIVED_FROM_F: Provenance.DERIVED_FROM_T,
    }.get(rule.provenance, rule.provenance)
    return ScoringRule(reflect(rule.F), reflect(rule.T), rule.C, rule.c, provenance, rule.notes)


def derive_truth_score_by_reflection(F, C=0.0, c=0.0):
    """derive_truth_score computed as reflect . derive_false_score . reflect."""
    mirrored = derive_false_score(reflect(F), C, c)
    return ScoringRule(reflect(mirrored.F), F, C, c, Provenance.DERIVED_FROM_F)


@dataclass(frozen=True)
class IndicatorA:
    """T = 1_A for A = [a,1] (closed) or (a,1] (open); (1,1] is the empty set."""
    a: float
    closed: bool = True


@dataclass(frozen=True)
class NegIndicatorB:
    """T = -1_B for B = [0,b] (closed) or [0,b) (open)."""
    b: float
    closed: bool = True


def _indicator_a_rule(kind):
    a = kind.a
    if not 0.0 <= a <= 1.0 or (a == 0.0 and kind.closed):
        raise InvalidInterval(f"A must be an interval inside (0,1] containing 1, got a={a}")
    if a == 1.0 and not kind.closed:
        # A is empty: the companion is 0 everywhere
        zero = ScoreFn([Segment(0.0, 1.0, True, True, Constant(0.0))], 0.0, 0.0,
                       Direction.NON_DECREASING)
        return ScoringRule(zero, zero.with_direction(Direction.NON_INCREASING),
                           provenance=Provenance.CATALOG, notes="A empty")
    if a == 1.0:
        T = ScoreFn([Segment(0.0, 1.0, True, False, Constant(0.0))], 0.0, 1.0,
                    Direction.NON_DECREASING)
        companion = ScoreFn([Segment(0.0, 1.0, True, False, Constant(0.0))], 0.0, NEG_INF,
                            Direction.NON_INCREASING)
        return ScoringRule(T, companion, provenance=Provenance.CATALOG, notes="A = {1}")
    level = -a / (1.0 - a)
    outside = Segment(0.0, a, True, not kind.closed, Constant(0.0))
    T = ScoreFn([outside, Segment(a, 1.0, kind.closed, True, Constant(1.0))], 0.0, 1.0,
                Direction.NON_DECREASING)
    companion = ScoreFn([outside, Segment(a, 1.0, kind.closed, True, Constant(level))],
                        0.0, level, Direction.NON_INCREASING)
    interval = f"[{a}, 1]" if kind.closed else f"({a}, 1]"
    return ScoringRule(T, companion, provenance=Provenance.CATALOG, notes=f"A = {interval}")


def _neg_indicator_b_rule(kind):
    b = kind.b
    if not 0.0 <= b <= 1.0:
        raise InvalidInterval(f"B must be [0,b] or [0,b) with b in [0,1], got b={b}")
    if b == 0.0 and not kind.closed:
        segments = [Segment(0.0, 1.0, True, True, Constant(0.0))]
        value_at_0 = 0.0
    elif b == 0.0:
        segments = [Segment(0.0, 1.0, False, True, Constant(0.0))]
        value_at_0 = -1.0
    elif b == 1.0:
        segments = [Segment(0.0, 1.0, True, kind.closed, Constant(-1.0))]
        value_at_0 = -1.0
    else:
        segments = [Segment(0.0, b, True, kind.closed, Constant(-1.0)),
                    Segment(b, 1.0, not kind.closed, True, Constant(0.0))]
        value_at_0 = -1.0
    value_at_1 = -1.0 if (b == 1.0 and kind.closed) else 0.0
    T = ScoreFn(segments, value_at_0, value_at_1, Direction.NON_DECREASING)
    return derive_false_score(T, 0.0, 0.0)


def building_block_rule(kind):
    """
    The indicator rules the general construction is assembled from.

    IndicatorA gives (1_A, G_A) with G_A = -(a/(1-a)) 1_A below 1 and
    G_A(1) = -inf exactly when A = {1}. NegIndicatorB gives (T_B, F_B) with
    T_B = -1_B and F_B from the completion formula with C = c = 0, so that
    F_B(1) = -inf exactly when B = [0,1).
    """
    if isinstance(kind, IndicatorA):
        return _indicator_a_rule(kind)
    if isinstance(kind, NegIndicatorB):
        return _neg_indicator_b_rule(kind)
    raise TypeError(f"unknown building block {kind!r}")


class LevelShape(Enum):
    CLOSED_RIGHT = "closed"
    OPEN_RIGHT = "open"


@dataclass(frozen=True)
class LevelSet:
    """B_t = {x : T(x) <= t} = [0,b] (closed) or [0,b) (open)."""
    t: float
    b: float
    shape: LevelShape

    def contains(self, x):
        if self.shape is LevelShape.CLOSED_RIGHT:
            return 0.0 <= x <= self.b
        return 0.0 <= x < self.b

    @property
    def is_empty(self):
        return self.shape is LevelShape.OPEN_RIGHT and self.b == 0.0


def _crossing(form, lo, hi, t):
    """Largest float in [lo, hi] where the monotone form is still <= t (bisection)."""
    inside, outside = lo, hi
    while True:
        middle = 0.5 * (inside + outside)
        if middle in (inside, outside):
            return inside
        if form(middle) <= t:
            inside = middle
        else:
            outside = middle


def level_set(T, t):
    """
    Compute the level set B_t of a non-decreasing T.

    Step boundaries are found exactly; crossings inside a continuous
    segment are located by bisection to adjacent floats.
    """
    if not eval_score(T, 0.0) <= t:
        return LevelSet(t, 0.0, LevelShape.OPEN_RIGHT)
    b = 0.0
    for segment in T.segments:
        if segment.is_point and segment.lo in (0.0, 1.0):
            continue
        if segment.right_limit() <= t:
            b = segment.hi
            continue
        if segment.left_limit() <= t and not segment.is_point:
            b = _crossing(segment.form, segment.lo, segment.hi, t)
        break
    else:
        b = 1.0
    shape = LevelShape.CLOSED_RIGHT if eval_score(T, b) <= t else LevelShape.OPEN_RIGHT
    return LevelSet(t, b, shape)


def _is_step_function(T):
    return all(isinstance(segment.form, Constant) for segment in T.segments)


def _check_layer_cake_input(T):
    if not is_monotone(T, Direction.NON_DECREASING):
        raise NotMonotone("the layer-cake identity needs a non-decreasing T")
    if T.value_at_1 > NORMALISATION_TOLERANCE:
        raise NotNonPositive(f"sup T = {T.value_at_1} > 0; subtract sup T first")


def level_set_decomposition(T, x):
    """
    Reconstruct T(x) as the integral over t in (-inf, 0] of -1[x in B_t].

    Args:
        T (ScoreFn): Non-decreasing, non-positive (normalised by subtracting sup T)
        x (float): Point in [0,1]

    Returns:
        float: The reconstructed value. Step functions give an exact finite
        sum over their levels; otherwise the t-integral is refined adaptively.
    """
    _check_layer_cake_input(T)
    if _is_step_function(T):
        levels = sorted({T.value_at_0, T.value_at_1}
                        | {segment.form.c for segment in T.segments})
        levels = [level for level in levels if level <= 0.0] + [0.0]
        if is_neg_inf(levels[0]):
            if level_set(T, NEG_INF).contains(x):
                return NEG_INF
            levels = levels[1:]
        pieces = [upper - lower for lower, upper in zip(levels[:-1], levels[1:])
                  if level_set(T, lower).contains(x)]
        return -math.fsum(pieces)

    floor = eval_score(T, 0.0)
    if is_neg_inf(floor):
        raise DomainError("T is unbounded below; clip it with clip_below before integrating over levels")
    tolerance = LEVEL_TOLERANCE * (1.0 + abs(floor))
    pending = [(floor, 0.0, level_set(T, floor).contains(x), True)]
    measure = []
    while pending:
        lower, upper, lower_in, upper_in = pending.pop()
        if lower_in == upper_in:
            measure.append(upper - lower if lower_in else 0.0)
        elif upper - lower <= tolerance:
            measure.append(0.5 * (upper - lower))
        else:
            middle = 0.5 * (lower + upper)
            middle_in = level_set(T, middle).contains(x)
            pending.append((lower, middle, lower_in, middle_in))
            pending.append((middle, upper, middle_in, upper_in))
    return -math.fsum(measure)


def clipped_level_set_decomposition(T, x, delta=LEVEL_SET_CLIP_DELTA):
    """
    Layer-cake reconstruction of a T that is unbounded below near 0.

    Returns:
        tuple: (reconstructed value of T(max(x, delta)), truncation error
        |T(x) - T(max(x, delta))| caused by the clip)
    """
    clipped = clip_below(T, delta)
    value = level_set_decomposition(clipped, x)
    original = eval_score(T, x)
    truncation = math.inf if is_neg_inf(original) else abs(original - eval_score(clipped, x))
    return value, truncation


@dataclass(frozen=True, eq=False)
class ConvexRep:
    """
    Samples of the convex function G and its subgradient G' on the grid interior.

    midpoint_violation is the largest G((p+q)/2) - (G(p)+G(q))/2 over adjacent
    grid pairs; subgradient_violation the largest G(x) + G'(x)(y-x) - G(y)
    over all grid pairs (both are <= 0 up to rounding for proper rules).
    """
    points: np.ndarray
    G: np.ndarray
    Gprime: np.ndarray
    midpoint_violation: float
    subgradient_violation: float

    @property
    def is_midpoint_convex(self):
        return self.midpoint_violation <= MIDPOINT_CONVEXITY_TOLERANCE

    def reconstruct(self):
        """Return (T_hat, F_hat) = (G + (1-p) G', G - p G')."""
        p = self.points
        return self.G + (1.0 - p) * self.Gprime, self.G - p * self.Gprime


def _expected_self_score(rule, p):
    return ext_add(ext_scale(p, eval_score(rule.T, p)), ext_scale(1.0 - p, eval_score(rule.F, p)))


def convex_rep(rule, grid):
    """
    Sample G(p) = p T(p) + (1-p) F(p) and G'(p) = T(p) - F(p).

    Args:
        rule (ScoringRule): Rule whose components are finite on the grid interior
        grid (GridSpec): Probe grid; only its points in (0,1) are used

    Returns:
        ConvexRep: Samples plus convexity diagnostics
    """
    points = np.asarray([p for p in grid.points if 0.0 < p < 1.0], dtype=float)
    truth, false = sample(rule.T, points), sample(rule.F, points)
    if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(false))):
        raise DomainError("rule components must be finite on the grid interior")
    G = points * truth + (1.0 - points) * false
    Gprime = truth - false
    middles = 0.5 * (points[:-1] + points[1:])
    G_middle = np.array([_expected_self_score(rule, float(m)) for m in middles])
    midpoint_violation = float(np.max(G_middle - 0.5 * (G[:-1] + G[1:]))) if len(middles) else 0.0
    tangent = G[:, None] + Gprime[:, None] * (points[None, :] - points[:, None])
    subgradient_violation = float(np.max(tangent - G[None, :]))
    return ConvexRep(points, G, Gprime, midpoint_violation, subgradient_violation)


def recover_constants(T, K, grid):
    """
    Recover (C, c) such that K is the completion of T built with them.

    C is the mean of K - F0 on the grid points below 1, where F0 is the
    completion with C = c = 0. c is F0(1) + C - K(1); it is None when T jumps
    at 1 (every completion is then -inf at 1 and the drop is not determined).

    Returns:
        tuple: (C, c, spread) where spread is max - min of K - F0 below 1
    """
    base = derive_false_score(T, 0.0, 0.0).F
    below = [float(p) for p in grid.points if p < 1.0]
    gaps = np.array([eval_score(K, p) - eval_score(base, p) for p in below])
    C = float(np.mean(gaps))
    spread = float(np.max(gaps) - np.min(gaps))
    if is_neg_inf(base.value_at_1):
        return C, None, spread
    if is_neg_inf(K.value_at_1):
        return C, math.inf, spread
    return C, base.value_at_1 + C - K.value_at_1, spread
