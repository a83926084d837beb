#!/usr/bin/env python3
"""
Integrals of score functions against the singular weights 1/(1-u)^2 and 1/u^2:
1. Closed-form antiderivatives for every closed segment form (exact path)
2. Adaptive quadrature for Opaque segments after the substitution v = 1/(1-u)
   (or v = 1/u), which turns the weighted integrand into f itself
3. Partition splitting with a depth budget; exhausting it raises NonConvergence
"""

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

from scipy.integrate import quad
from scipy.special import xlogy

from extended_reals import DomainError, NonConvergence
from score_functions import Opaque

logger = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-10
MAX_REFINEMENT_DEPTH = 30
QUAD_SUBDIVISIONS = 200
MAX_PARTITIONS = 2048


class Weight(Enum):
    ONE_OVER_1_MINUS_U_SQ = "1/(1-u)^2"
    ONE_OVER_U_SQ = "1/u^2"


@dataclass(frozen=True)
class WeightedIntegral:
    value: float
    exact: bool
    est_error: float = 0.0

    def __add__(self, other):
        return WeightedIntegral(self.value + other.value, self.exact and other.exact,
                                self.est_error + other.est_error)

    def __neg__(self):
        return WeightedIntegral(-self.value, self.exact, self.est_error)


ZERO = WeightedIntegral(0.0, True, 0.0)


def antiderivative(coefficients, u):
    """
    Antiderivative of g(u)/(1-u)^2 for g = a ln u + b ln(1-u) + q2 u^2 + q1 u + q0.

    Term by term:
        ln u       ->  u ln(u)/(1-u) + ln(1-u)      (= ln u/(1-u) - ln(u/(1-u)))
        ln(1-u)    ->  (ln(1-u) + 1)/(1-u)
        u^2        ->  1/(1-u) + 2 ln(1-u) + u
        u          ->  1/(1-u) + ln(1-u)
        1          ->  1/(1-u)
    Finite on [0,1); u ln(u) is taken as 0 at u = 0.
    """
    if not 0.0 <= u < 1.0:
        raise DomainError(f"antiderivative evaluated at {u}, outside [0,1)")
    a, b, q2, q1, q0 = coefficients
    inverse = 1.0 / (1.0 - u)
    log_complement = math.log1p(-u)
    total = (q2 + q1 + q0) * inverse + (2.0 * q2 + q1) * log_complement + q2 * u
    if a:
        total += a * (float(xlogy(u, u)) * inverse + log_complement)
    if b:
        total += b * (log_complement + 1.0) * inverse
    return total


def antiderivative_over_u_sq(coefficients, u):
    """
    Antiderivative of g(u)/u^2, the mirror image of antiderivative().

    Term by term:
        ln u       ->  -(ln u + 1)/u
        ln(1-u)    ->  -(1-u) ln(1-u)/u - ln u
        u^2        ->  u
        u          ->  ln u
        1          ->  -1/u
    Finite on (0,1]; (1-u) ln(1-u) is taken as 0 at u = 1.
    """
    if not 0.0 < u <= 1.0:
        raise DomainError(f"antiderivative evaluated at {u}, outside (0,1]")
    a, b, q2, q1, q0 = coefficients
    inverse = 1.0 / u
    log_u = math.log(u)
    total = -(q0 + a) * inverse + (q1 - b) * log_u + q2 * u - a * log_u * inverse
    if b:
        total -= b * float(xlogy(1.0 - u, 1.0 - u)) * inverse
    return total


def _closed_integral(form, lo, hi, weight):
    coefficients = form.coefficients()
    if weight is Weight.ONE_OVER_U_SQ:
        return antiderivative_over_u_sq(coefficients, hi) - antiderivative_over_u_sq(coefficients, lo)
    return antiderivative(coefficients, hi) - antiderivative(coefficients, lo)


def _quad_piece(integrand, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = quad(integrand, a, b, epsabs=QUADRATURE_TOLERANCE / 10,
                      epsrel=QUADRATURE_TOLERANCE / 10, limit=QUAD_SUBDIVISIONS, full_output=1)
    value, error = result[0], result[1]
    converged = len(result) == 3 and math.isfinite(value) and math.isfinite(error)
    return value, error, converged


def _adaptive_integral(form, lo, hi, weight):
    """
    Integrate an Opaque form adaptively after flattening the weight.

    With v = 1/(1-u) we have du/(1-u)^2 = dv, so the integral becomes
    the integral of f(1 - 1/v) over [1/(1-lo), 1/(1-hi)]; with v = 1/u it
    becomes the integral of f(1/v) over [1/hi, 1/lo].
    """
    evaluator = form.evaluator
    if weight is Weight.ONE_OVER_1_MINUS_U_SQ:
        start, stop = 1.0 / (1.0 - lo), 1.0 / (1.0 - hi)

        def integrand(v):
            return evaluator(1.0 - 1.0 / v)
    else:
        start, stop = 1.0 / hi, 1.0 / lo

        def integrand(v):
            return evaluator(1.0 / v)

    # v runs up to 1/(1-hi); doubling breakpoints keep each piece well scaled
    breaks = [start]
    while breaks[-1] * 2.0 < stop:
        breaks.append(breaks[-1] * 2.0)
    breaks.append(stop)
    partitions = [(a, b) + _quad_piece(integrand, a, b) for a, b in zip(breaks[:-1], breaks[1:])]
    width = stop - start
    for depth in range(MAX_REFINEMENT_DEPTH):
        value = math.fsum(part[2] for part in partitions)
        error = math.fsum(part[3] for part in partitions)
        allowed = QUADRATURE_TOLERANCE * (1.0 + abs(value))
        if error <= allowed and all(part[4] for part in partitions):
            return WeightedIntegral(value, False, error)
        refined = []
        for a, b, part_value, part_error, converged in partitions:
            if not converged or part_error > allowed * (b - a) / width:
                middle = 0.5 * (a + b)
                refined.append((a, middle) + _quad_piece(integrand, a, middle))
                refined.append((middle, b) + _quad_piece(integrand, middle, b))
            else:
                refined.append((a, b, part_value, part_error, converged))
        partitions = refined
        if len(partitions) > MAX_PARTITIONS:
            break
        logger.debug("refined opaque integral on [%s, %s] to %d partitions (depth %d)",
                     lo, hi, len(partitions), depth + 1)
    raise NonConvergence(f"adaptive quadrature on [{lo}, {hi}] exceeded the refinement budget "
                         f"(depth {MAX_REFINEMENT_DEPTH}, {MAX_PARTITIONS} partitions) for "
                         f"{form.name or 'opaque segment'}",
                         segment=form)


def _check_interval(lo, hi, weight):
    if lo > hi:
        raise DomainError(f"integration interval [{lo}, {hi}] is reversed")
    if lo < 0.0 or hi > 1.0:
        raise DomainError(f"integration interval [{lo}, {hi}] leaves [0,1]")
    if weight is Weight.ONE_OVER_1_MINUS_U_SQ and hi >= 1.0:
        raise DomainError("weight 1/(1-u)^2 is singular at u = 1, inside the interval")
    if weight is Weight.ONE_OVER_U_SQ and lo <= 0.0:
        raise DomainError("weight 1/u^2 is singular at u = 0, inside the interval")


def integrate_form(form, lo, hi, weight):
    """
    Integrate one segment form times the weight over [lo, hi].

    Returns:
        WeightedIntegral: exact for closed forms, adaptive for Opaque forms
    """
    _check_interval(lo, hi, weight)
    if lo == hi:
        return ZERO
    if isinstance(form, Opaque):
        return _adaptive_integral(form, lo, hi, weight)
    return WeightedIntegral(_closed_integral(form, lo, hi, weight), True, 0.0)


def integrate_weighted(f, lo, hi, weight):
    """
    Integrate a score function against a singular weight.

    Args:
        f (ScoreFn): Integrand
        lo (float): Lower limit
        hi (float): Upper limit, lo <= hi
        weight (Weight): 1/(1-u)^2 or 1/u^2; the singular point must lie outside [lo, hi]

    Returns:
        WeightedIntegral: value, exactness flag and error estimate

    Raises:
        DomainError: If the singular point lies in [lo, hi]
        NonConvergence: If an Opaque segment cannot be integrated within the depth budget
    """
    _check_interval(lo, hi, weight)
    total = ZERO
    for segment in f.segments:
        a, b = max(lo, segment.lo), min(hi, segment.hi)
        if a < b:
            total = total + integrate_form(segment.form, a, b, weight)
    return total


def integrate_signed(f, start, stop, weight):
    """Oriented integral from start to stop (negated when stop < start)."""
    if stop >= start:
        return integrate_weighted(f, start, stop, weight)
    return -integrate_weighted(f, stop, start, weight)
