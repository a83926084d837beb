#!/usr/bin/env python3
"""
Exact piecewise score functions on [0,1]:
1. Segment forms: Constant, Affine, LogForm, Quadratic, LogQuadratic (closed forms) and Opaque
2. ScoreFn: an ordered partition of [0,1] into segments plus explicit endpoint values
3. Evaluation, exact monotonicity analysis, continuity at the endpoints
4. Reflection g*(x) = g(1-x), common-constant shifts, clipping and pointwise differences
"""

import bisect
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial

from extended_reals import (
    COEFFICIENT_TOLERANCE,
    NEG_INF,
    DomainError,
    InvalidInterval,
    NonConvergence,
    NotMonotone,
    as_ext_real,
    ext_add,
    ext_close,
    is_neg_inf,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_N = 201
DEFAULT_ACCUMULATION_DEPTH = 20

# Slack allowed when comparing values across segment boundaries
BOUNDARY_TOLERANCE = 1e-12

LIMIT_PROBE_EXPONENTS = range(10, 41)
LIMIT_CAUCHY_TOLERANCE = 1e-9
DIVERGENCE_STEP = 1e-6
# A tail whose steps shrink by less than this factor over four probes is diverging
DIVERGENCE_STEP_RATIO = 0.5


class Direction(Enum):
    NON_DECREASING = "nondecreasing"
    NON_INCREASING = "nonincreasing"
    UNCONSTRAINED = "unconstrained"

    def flipped(self):
        if self is Direction.NON_DECREASING:
            return Direction.NON_INCREASING
        if self is Direction.NON_INCREASING:
            return Direction.NON_DECREASING
        return self


def grid_points(n=DEFAULT_GRID_N, accumulation_depth=DEFAULT_ACCUMULATION_DEPTH,
                include_endpoints=True):
    """
    Build the deterministic probe grid on [0,1].

    The grid is the union of n uniform points, the base point 1/2, and the
    points 2^-k and 1 - 2^-k for k = 1..accumulation_depth, which accumulate
    at both endpoints where scores change fastest.

    Args:
        n (int): Number of uniform points, at least 3
        accumulation_depth (int): Largest k for the dyadic points
        include_endpoints (bool): Keep 0 and 1 in the grid

    Returns:
        numpy.ndarray: Strictly increasing grid points
    """
    if n < 3:
        raise ValueError(f"grid needs at least 3 points, got n={n}")
    if accumulation_depth < 0:
        raise ValueError("accumulation depth must be non-negative")
    uniform = np.linspace(0.0, 1.0, n)
    dyadic = np.array([2.0 ** -k for k in range(1, accumulation_depth + 1)])
    points = np.unique(np.concatenate([uniform, [0.5], dyadic, 1.0 - dyadic]))
    if not include_endpoints:
        points = points[(points > 0.0) & (points < 1.0)]
    return points


def _log_term(coef, arg):
    if coef == 0:
        return 0.0
    if arg == 0:
        return NEG_INF if coef > 0 else math.inf
    return coef * math.log(arg)


class ClosedForm:
    """
    Shared behaviour of the closed-form segment grammar.

    Every closed form is a special case of
    a*ln(u) + b*ln(1-u) + q2*u^2 + q1*u + q0, exposed by coefficients().
    """

    kind = None
    exact = True

    def coefficients(self):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    def __call__(self, u):
        a, b, q2, q1, q0 = self.coefficients()
        total = (q2 * u + q1) * u + q0
        logs = _log_term(a, u) + _log_term(b, 1.0 - u)
        return total + logs

    def limit(self, u):
        """Value or one-sided limit at u; may be -inf or +inf at 0 and 1."""
        return self(u)

    def derivative_numerator(self):
        """u(1-u) times the derivative, as a cubic polynomial in u."""
        a, b, q2, q1, _ = self.coefficients()
        return Polynomial([a, q1 - a - b, 2.0 * q2 - q1, -2.0 * q2])

    def monotone_on(self, lo, hi, direction):
        """
        Decide monotonicity on [lo, hi] from the sign of the derivative.

        The derivative a/u - b/(1-u) + 2*q2*u + q1 has the sign of the cubic
        u(1-u)*g'(u) on (0,1), whose minimum over [lo, hi] is attained at an
        end or at a real critical point inside.
        """
        if direction is Direction.UNCONSTRAINED or lo == hi:
            return True
        numerator = self.derivative_numerator()
        if direction is Direction.NON_INCREASING:
            numerator = -numerator
        candidates = [lo, hi]
        for root in numerator.deriv().roots():
            if abs(root.imag) <= 1e-14 and lo < root.real < hi:
                candidates.append(root.real)
        scale = 1.0 + float(np.sum(np.abs(numerator.coef)))
        return min(numerator(u) for u in candidates) >= -COEFFICIENT_TOLERANCE * scale

    def reflected(self):
        """The form of u -> g(1-u); reflecting the result again returns this form."""
        source = self.__dict__.get("_reflection_of")
        if source is not None:
            return source
        mirror = self._mirrored()
        if mirror is not self:
            object.__setattr__(mirror, "_reflection_of", self)
        return mirror

    def _mirrored(self):
        raise NotImplementedError

    def shifted(self, k):
        a, b, q2, q1, q0 = self.coefficients()
        return closed_form(a, b, q2, q1, q0 + k)


@dataclass(frozen=True)
class Constant(ClosedForm):
    c: float
    kind = "constant"

    def coefficients(self):
        return (0.0, 0.0, 0.0, 0.0, self.c)

    def params(self):
        return (self.c,)

    def _mirrored(self):
        return self

    def monotone_on(self, lo, hi, direction):
        return True


@dataclass(frozen=True)
class Affine(ClosedForm):
    """a*u + b"""
    a: float
    b: float
    kind = "affine"

    def coefficients(self):
        return (0.0, 0.0, 0.0, self.a, self.b)

    def params(self):
        return (self.a, self.b)

    def _mirrored(self):
        return Affine(-self.a, self.a + self.b)

    def monotone_on(self, lo, hi, direction):
        if lo == hi:
            return True
        if direction is Direction.NON_DECREASING:
            return self.a >= 0
        if direction is Direction.NON_INCREASING:
            return self.a <= 0
        return True


@dataclass(frozen=True)
class LogForm(ClosedForm):
    """a*ln(u) + b*ln(1-u) + c"""
    a: float
    b: float
    c: float
    kind = "log"

    def coefficients(self):
        return (self.a, self.b, 0.0, 0.0, self.c)

    def params(self):
        return (self.a, self.b, self.c)

    def _mirrored(self):
        return LogForm(self.b, self.a, self.c)


@dataclass(frozen=True)
class Quadratic(ClosedForm):
    """a*u^2 + b*u + c"""
    a: float
    b: float
    c: float
    kind = "quadratic"

    def coefficients(self):
        return (0.0, 0.0, self.a, self.b, self.c)

    def params(self):
        return (self.a, self.b, self.c)

    def _mirrored(self):
        return Quadratic(self.a, -2.0 * self.a - self.b, self.a + self.b + self.c)


@dataclass(frozen=True)
class LogQuadratic(ClosedForm):
    """a*ln(u) + b*ln(1-u) + q2*u^2 + q1*u + q0"""
    a: float
    b: float
    q2: float
    q1: float
    q0: float
    kind = "logquad"

    def coefficients(self):
        return (self.a, self.b, self.q2, self.q1, self.q0)

    def params(self):
        return self.coefficients()

    def _mirrored(self):
        return LogQuadratic(self.b, self.a, self.q2, -2.0 * self.q2 - self.q1,
                            self.q2 + self.q1 + self.q0)


def closed_form(a, b, q2, q1, q0):
    """Return the simplest named closed form with the given coefficients."""
    coefficients = (a, b, q2, q1, q0)
    if not all(math.isfinite(value) for value in coefficients):
        raise DomainError(f"closed-form coefficients must be finite, got {coefficients}")
    if a == 0 and b == 0:
        if q2 == 0 and q1 == 0:
            return Constant(q0)
        if q2 == 0:
            return Affine(q1, q0)
        return Quadratic(q2, q1, q0)
    if q2 == 0 and q1 == 0:
        return LogForm(a, b, q0)
    return LogQuadratic(a, b, q2, q1, q0)


FORM_CLASSES = {cls.kind: cls for cls in (Constant, Affine, LogForm, Quadratic, LogQuadratic)}


@dataclass(frozen=True, eq=False)
class Opaque:
    """
    A black-box segment form.

    The evaluator is trusted only as far as its declarations: the direction
    and the one-sided limits at the segment ends are data, cross-checked on
    the probe grid when monotonicity is decided. A limit of None means the
    limit is not declared and is never compared.
    """
    evaluator: Callable[[float], float]
    direction: Direction
    lim_lo: Optional[float]
    lim_hi: Optional[float]
    name: Optional[str] = None
    kind = "opaque"
    exact = False

    def __call__(self, u):
        value = float(self.evaluator(u))
        if not math.isfinite(value):
            raise DomainError(f"opaque evaluator {self.name or ''} returned {value} at {u}")
        return value

    def reflected(self):
        source = self.__dict__.get("_reflection_of")
        if source is not None:
            return source
        evaluator = self.evaluator
        mirror = Opaque(lambda u: evaluator(1.0 - u), self.direction.flipped(),
                        self.lim_hi, self.lim_lo)
        object.__setattr__(mirror, "_reflection_of", self)
        return mirror

    def shifted(self, k):
        evaluator = self.evaluator
        return Opaque(lambda u: evaluator(u) + k, self.direction,
                      None if self.lim_lo is None else ext_add(self.lim_lo, k),
                      None if self.lim_hi is None else ext_add(self.lim_hi, k))


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool
    form: object
    # Exact coordinates of the segment this one was reflected from, if any
    lo_mirror: Optional[float] = field(default=None, compare=False, repr=False)
    hi_mirror: Optional[float] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise InvalidInterval(f"segment [{self.lo}, {self.hi}] is not inside [0,1]")
        if self.lo == self.hi and not (self.lo_closed and self.hi_closed):
            raise InvalidInterval(f"degenerate segment at {self.lo} must be closed on both sides")

    @property
    def is_point(self):
        return self.lo == self.hi

    def contains(self, x):
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and not self.lo_closed:
            return False
        if x == self.hi and not self.hi_closed:
            return False
        return True

    def left_limit(self):
        """Value at lo, or the limit from inside the segment as u -> lo+."""
        if isinstance(self.form, Opaque):
            return self.form.lim_lo
        return self.form.limit(self.lo)

    def right_limit(self):
        """Value at hi, or the limit from inside the segment as u -> hi-."""
        if isinstance(self.form, Opaque):
            return self.form.lim_hi
        return self.form.limit(self.hi)

    def reflected(self):
        """The segment of u -> g(1-u); reflecting twice restores lo and hi exactly."""
        lo = 1.0 - self.hi if self.hi_mirror is None else self.hi_mirror
        hi = 1.0 - self.lo if self.lo_mirror is None else self.lo_mirror
        return Segment(lo, hi, self.hi_closed, self.lo_closed, self.form.reflected(),
                       self.hi, self.lo)

    def with_form(self, form):
        return replace(self, form=form)

    def restricted(self, lo, lo_closed):
        """The part of this segment at or above lo."""
        form = self.form
        if isinstance(form, Opaque):
            form = Opaque(form.evaluator, form.direction, form(lo), form.lim_hi, form.name)
        return replace(self, lo=lo, lo_closed=lo_closed, form=form, lo_mirror=None)


@dataclass(frozen=True)
class ScoreFn:
    """
    A score function on [0,1] (a truth score T or a false score F).

    Segments partition (0,1) in order; 0 and 1 may each be covered by at
    most one segment, but the stored endpoint values always override the
    segment formulas there.
    """
    segments: tuple
    value_at_0: float
    value_at_1: float
    direction: Direction = Direction.UNCONSTRAINED

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "value_at_0", as_ext_real(self.value_at_0))
        object.__setattr__(self, "value_at_1", as_ext_real(self.value_at_1))
        self._check_partition()
        self._check_log_endpoints()
        if self.direction is not Direction.UNCONSTRAINED and not is_monotone(self, self.direction):
            raise NotMonotone(f"score function is not {self.direction.value}")

    @classmethod
    def from_segments(cls, segments, value_at_0=None, value_at_1=None,
                      direction=Direction.UNCONSTRAINED):
        """Build a ScoreFn whose omitted endpoint values default to the adjacent segment limits."""
        segments = tuple(segments)
        if value_at_0 is None:
            first = next(s for s in segments if not (s.is_point and s.lo == 0.0))
            value_at_0 = first.left_limit()
        if value_at_1 is None:
            last = next(s for s in reversed(segments) if not (s.is_point and s.hi == 1.0))
            value_at_1 = last.right_limit()
        return cls(segments, value_at_0, value_at_1, direction)

    def _check_partition(self):
        if not self.segments:
            raise InvalidInterval("a score function needs at least one segment")
        cursor, covered = 0.0, False
        for segment in self.segments:
            if segment.lo != cursor:
                raise InvalidInterval(f"gap or overlap between {cursor} and {segment.lo}")
            if segment.lo_closed and covered:
                raise InvalidInterval(f"point {cursor} is covered twice")
            if not segment.lo_closed and not covered and 0.0 < cursor < 1.0:
                raise InvalidInterval(f"point {cursor} is not covered")
            cursor, covered = segment.hi, segment.hi_closed
        if cursor != 1.0:
            raise InvalidInterval(f"segments stop at {cursor} instead of 1")

    def _check_log_endpoints(self):
        for segment in self.segments:
            if isinstance(segment.form, Opaque):
                continue
            a, b, _, _, _ = segment.form.coefficients()
            if segment.lo == 0.0 and a != 0 and not is_neg_inf(self.value_at_0):
                raise DomainError("ln(u) term touching 0 needs value_at_0 = -inf")
            if segment.hi == 1.0 and b != 0 and not is_neg_inf(self.value_at_1):
                raise DomainError("ln(1-u) term touching 1 needs value_at_1 = -inf")

    @cached_property
    def _los(self):
        return [segment.lo for segment in self.segments]

    @property
    def has_opaque(self):
        return any(isinstance(segment.form, Opaque) for segment in self.segments)

    def segment_at(self, x):
        """Return the segment containing x (x in (0,1))."""
        index = bisect.bisect_right(self._los, x) - 1
        for candidate in range(max(index - 1, 0), min(index + 2, len(self.segments))):
            if self.segments[candidate].contains(x):
                return self.segments[candidate]
        raise DomainError(f"no segment contains {x}")

    def __call__(self, x):
        return eval_score(self, x)

    def with_direction(self, direction):
        return ScoreFn(self.segments, self.value_at_0, self.value_at_1, direction)


def eval_score(f, x):
    """
    Evaluate a score function at a probability.

    Args:
        f (ScoreFn): Score function
        x (float): Probability in [0,1]

    Returns:
        float: Extended real value; endpoint values override segment formulas
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"probability {x} is outside [0,1]")
    if x == 0.0:
        return f.value_at_0
    if x == 1.0:
        return f.value_at_1
    return f.segment_at(x).form(x)


def sample(f, points):
    """Evaluate f at every point of a grid, returning a float array."""
    return np.array([eval_score(f, float(x)) for x in points], dtype=float)


def _le(x, y, direction):
    """Order check x <= y (or x >= y for non-increasing) with boundary slack."""
    if x is None or y is None:
        return True
    if direction is Direction.NON_INCREASING:
        x, y = y, x
    if x == y:
        return True
    if x == -math.inf or y == math.inf:
        return True
    if y == -math.inf or x == math.inf:
        return False
    return x <= y + BOUNDARY_TOLERANCE * (1.0 + max(abs(x), abs(y)))


def _opaque_points(segment):
    inside = [x for x in grid_points() if segment.lo < x < segment.hi]
    inside.extend(np.linspace(segment.lo, segment.hi, 17)[1:-1])
    if segment.lo_closed and segment.lo > 0.0:
        inside.append(segment.lo)
    if segment.hi_closed and segment.hi < 1.0:
        inside.append(segment.hi)
    return sorted(set(float(x) for x in inside))


def _opaque_monotone(segment, direction):
    form = segment.form
    if form.direction is not Direction.UNCONSTRAINED and form.direction is not direction:
        return False
    values = [form(x) for x in _opaque_points(segment)]
    chain = [form.lim_lo] + values + [form.lim_hi]
    consistent = all(_le(chain[i], chain[i + 1], direction) for i in range(len(chain) - 1))
    if not consistent and form.direction is direction:
        logger.warning("opaque segment %s declared %s but fails the grid cross-check on [%s, %s]",
                       form.name or "<anonymous>", direction.value, segment.lo, segment.hi)
    return consistent


def _segment_monotone(segment, direction):
    if segment.is_point:
        return True
    if isinstance(segment.form, Opaque):
        return _opaque_monotone(segment, direction)
    return segment.form.monotone_on(segment.lo, segment.hi, direction)


def _chain_monotone(segments, direction, value_at_0=None, value_at_1=None):
    for segment in segments:
        if not _segment_monotone(segment, direction):
            return False
    inner = [s for s in segments if not (s.is_point and s.lo in (0.0, 1.0))]
    previous = value_at_0
    for segment in inner:
        if not _le(previous, segment.left_limit(), direction):
            return False
        previous = segment.right_limit()
    return _le(previous, value_at_1, direction)


def is_monotone(f, direction):
    """
    Decide whether f is monotone in the given direction on all of [0,1].

    Closed forms are decided exactly from the sign of their derivative;
    Opaque segments rely on their declaration, cross-checked on the grid.
    Jumps between segments and the endpoint values are compared in order.
    """
    if direction is Direction.UNCONSTRAINED:
        return True
    return _chain_monotone(f.segments, direction, f.value_at_0, f.value_at_1)


def _touching_one(f):
    return next(s for s in reversed(f.segments) if s.hi == 1.0 and s.lo < 1.0)


def _touching_zero(f):
    return next(s for s in f.segments if s.lo == 0.0 and s.hi > 0.0)


def limit_at_one(f):
    """lim_{x->1-} f(x) from the segment touching 1 (may be -inf or +inf)."""
    return _touching_one(f).right_limit()


def limit_at_zero(f):
    """lim_{x->0+} f(x) from the segment touching 0."""
    return _touching_zero(f).left_limit()


def probe_limit(evaluator, end):
    """
    Estimate the one-sided limit of a monotone black-box function at 0 or 1.

    Evaluates at 1 - 2^-k (or 2^-k) for k = 10..40 and accepts the value once
    two successive steps move it by at most LIMIT_CAUCHY_TOLERANCE. A sequence
    still decreasing at k = 40 is read as a limit of -inf when its last step
    exceeds DIVERGENCE_STEP or its steps no longer shrink (the last one is at
    least DIVERGENCE_STEP_RATIO times the one four probes earlier, as for
    logarithmic divergence with a small coefficient).

    Raises:
        NonConvergence: If neither criterion is met
    """
    values = []
    for k in LIMIT_PROBE_EXPONENTS:
        x = 1.0 - 2.0 ** -k if end == 1 else 2.0 ** -k
        values.append(float(evaluator(x)))
        if len(values) >= 3:
            steps = (values[-1] - values[-2], values[-2] - values[-3])
            if all(abs(step) <= LIMIT_CAUCHY_TOLERANCE * (1.0 + abs(values[-1])) for step in steps):
                return values[-1]
    steps = [later - earlier for earlier, later in zip(values, values[1:])]
    if all(step < 0 for step in steps[-5:]):
        if steps[-1] < -DIVERGENCE_STEP or steps[-1] <= DIVERGENCE_STEP_RATIO * steps[-5]:
            return NEG_INF
    raise NonConvergence(f"limit probe at {end} did not settle: last values {values[-3:]}")


def continuous_at_one(f):
    limit = limit_at_one(f)
    if limit is None or limit == math.inf:
        return False
    return ext_close(limit, f.value_at_1)


def continuous_at_zero(f):
    limit = limit_at_zero(f)
    if limit is None or limit == math.inf:
        return False
    return ext_close(limit, f.value_at_0)


def reflect(f):
    """
    Return g with g(x) = f(1-x).

    Segments are mirrored in reverse order with their closures swapped,
    forms are transformed exactly and the direction flips.
    """
    segments = [segment.reflected() for segment in reversed(f.segments)]
    return ScoreFn(segments, f.value_at_1, f.value_at_0, f.direction.flipped())


def shift(f, k):
    """Add a real constant k to f everywhere (NEG_INF endpoint values stay NEG_INF)."""
    segments = [s.with_form(s.form.shifted(k)) for s in f.segments]
    return ScoreFn(segments, ext_add(f.value_at_0, k), ext_add(f.value_at_1, k), f.direction)


def clip_below(f, delta):
    """
    Return f_delta(x) = f(max(x, delta)) for a non-decreasing f.

    Used to truncate functions that are unbounded below near 0 (such as ln)
    to a finite range of levels.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"clip point {delta} must lie in (0,1)")
    floor = eval_score(f, delta)
    segments = [Segment(0.0, delta, True, False, Constant(floor))]
    for segment in f.segments:
        if segment.hi < delta or (segment.hi == delta and not segment.hi_closed):
            continue
        if segment.lo < delta or (segment.lo == delta and not segment.lo_closed):
            if segment.hi == delta:
                segments.append(Segment(delta, delta, True, True, segment.form))
                continue
            segments.append(segment.restricted(delta, True))
        else:
            segments.append(segment)
    return ScoreFn(segments, floor, f.value_at_1, f.direction)


def _subtract_forms(form_f, form_g):
    if not isinstance(form_f, Opaque) and not isinstance(form_g, Opaque):
        coefficients = [x - y for x, y in zip(form_f.coefficients(), form_g.coefficients())]
        return closed_form(*coefficients)
    return Opaque(lambda u: form_f(u) - form_g(u), Direction.UNCONSTRAINED, None, None)


def difference_segments(f, g):
    """
    Segments of f - g on the common refinement of both partitions.

    Breakpoints in (0,1) become point segments holding the exact difference
    there; the open pieces between breakpoints carry the subtracted forms.
    """
    breaks = sorted({0.0, 1.0} | {s.lo for s in f.segments + g.segments}
                    | {s.hi for s in f.segments + g.segments})
    pieces = []
    for index, (lo, hi) in enumerate(zip(breaks[:-1], breaks[1:])):
        if index > 0:
            value = f.segment_at(lo).form(lo) - g.segment_at(lo).form(lo)
            pieces.append(Segment(lo, lo, True, True, Constant(value)))
        middle = 0.5 * (lo + hi)
        form = _subtract_forms(f.segment_at(middle).form, g.segment_at(middle).form)
        if isinstance(form, Opaque):
            lim_lo = form(lo) if lo > 0.0 else None
            lim_hi = form(hi) if hi < 1.0 else None
            form = Opaque(form.evaluator, Direction.UNCONSTRAINED, lim_lo, lim_hi)
        pieces.append(Segment(lo, hi, False, False, form))
    return tuple(pieces)


def is_difference_monotone(f, g, direction):
    """
    Decide whether f - g is monotone on the open interval (0,1).

    Endpoint values are not compared: differences of scores that are
    infinite at an endpoint need not be representable there, and under
    endpoint continuity the interior decides monotonicity on [0,1].
    """
    return _chain_monotone(difference_segments(f, g), direction)
