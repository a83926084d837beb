#!/usr/bin/env python3
"""
Extended-real values for scores:
1. Represents a score as a finite float or NEG_INF (positive infinity is never allowed)
2. Implements the arithmetic conventions used in expected scores (0 * -inf = 0)
3. Formats and parses values for the text formats (17 significant digits, '-inf')
4. Holds the exception hierarchy shared by every module of the toolkit
"""

import math

NEG_INF = float("-inf")

# Absolute tolerance for exact-zero checks on closed-form coefficients
COEFFICIENT_TOLERANCE = 1e-12


class ScoringRuleError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(ScoringRuleError, ValueError):
    """A value or interval lies outside the representable domain."""


class NotMonotone(ScoringRuleError, ValueError):
    """A score function does not have the required direction."""


class NonConvergence(ScoringRuleError, ArithmeticError):
    """Adaptive refinement or a limit probe ran out of budget."""

    def __init__(self, message, segment=None):
        super().__init__(message)
        self.segment = segment


class InvalidInterval(ScoringRuleError, ValueError):
    """An interval does not have the shape an operation requires."""


class NotNonPositive(ScoringRuleError, ValueError):
    """A function expected to be non-positive takes a positive value."""


class PreconditionFailed(ScoringRuleError):
    """An input rule fails a precondition that is checked numerically."""


class HypothesisViolated(ScoringRuleError):
    """A rule is outside the hypothesis of the statement being tested."""


class ParseError(ScoringRuleError, ValueError):
    """A rule-spec document or forecast file could not be parsed."""

    def __init__(self, message, line=None, field=None):
        locus = []
        if line is not None:
            locus.append(f"line {line}")
        if field is not None:
            locus.append(f"field '{field}'")
        if locus:
            message = f"{', '.join(locus)}: {message}"
        super().__init__(message)
        self.line = line
        self.field = field


class SchemaError(ScoringRuleError, ValueError):
    """A parsed document violates the rule-spec schema."""


def as_ext_real(value):
    """
    Validate and normalise a value into the extended-real codomain [-inf, inf).

    Args:
        value (float): Candidate value

    Returns:
        float: The value as a float (NEG_INF for negative infinity)

    Raises:
        DomainError: If the value is NaN or positive infinity
    """
    value = float(value)
    if math.isnan(value):
        raise DomainError("NaN is not an extended real score")
    if value == math.inf:
        raise DomainError("positive infinity is not a representable score")
    return value


def is_neg_inf(value):
    return value == NEG_INF


def ext_add(x, y):
    """Add two extended reals; NEG_INF absorbs any finite value."""
    x, y = as_ext_real(x), as_ext_real(y)
    if is_neg_inf(x) or is_neg_inf(y):
        return NEG_INF
    return x + y


def ext_scale(k, x):
    """
    Multiply an extended real by a non-negative real weight.

    Uses the convention 0 * NEG_INF = 0, so that expected scores with p = 0
    or p = 1 stay defined when the opposite component is NEG_INF.

    Args:
        k (float): Weight, k >= 0
        x (float): Extended real value

    Returns:
        float: k * x under the convention
    """
    if k < 0:
        raise DomainError(f"negative weight {k} would produce positive infinity")
    x = as_ext_real(x)
    if k == 0:
        return 0.0
    if is_neg_inf(x):
        return NEG_INF
    return k * x


def ext_sub(x, y):
    """
    Subtract extended reals.

    Raises:
        DomainError: When the result is indeterminate (-inf - -inf) or +inf
    """
    x, y = as_ext_real(x), as_ext_real(y)
    if is_neg_inf(y):
        if is_neg_inf(x):
            raise DomainError("-inf - (-inf) is indeterminate")
        raise DomainError("finite - (-inf) is positive infinity")
    if is_neg_inf(x):
        return NEG_INF
    return x - y


def ext_ge(x, y, tol=0.0):
    """
    Exact comparison x >= y - tol with NEG_INF handled without tolerance.

    NEG_INF >= NEG_INF holds and any finite value is >= NEG_INF.
    """
    if is_neg_inf(y):
        return True
    if is_neg_inf(x):
        return False
    return x >= y - tol


def ext_close(x, y, tol=COEFFICIENT_TOLERANCE):
    """Equality of extended reals: NEG_INF only equals NEG_INF, finite values within tol."""
    if is_neg_inf(x) or is_neg_inf(y):
        return is_neg_inf(x) and is_neg_inf(y)
    return abs(x - y) <= tol * (1.0 + max(abs(x), abs(y)))


def format_ext_real(value):
    """Format a value with 17 significant digits, NEG_INF as '-inf'."""
    value = as_ext_real(value)
    if is_neg_inf(value):
        return "-inf"
    if value == 0:
        return "0"
    return f"{value:.17g}"


def parse_ext_real(text):
    """
    Parse a decimal string or the literal '-inf'.

    Raises:
        DomainError: For 'inf', 'nan' or anything positive infinite
        ValueError: For text that is not a number
    """
    text = text.strip()
    if text.lower() in ("-inf", "-infinity"):
        return NEG_INF
    value = float(text)
    return as_ext_real(value)
