#!/usr/bin/env python3
"""
Tests for score_functions.py:
1. Probe grid construction
2. Closed-form evaluation, normalisation, reflection and exact monotonicity
3. ScoreFn partition, endpoint and direction validation
4. Reflection, shifts, clipping, endpoint limits and pointwise differences
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from extended_reals import NEG_INF, DomainError, InvalidInterval, NonConvergence, NotMonotone
from score_functions import (
    Affine,
    Constant,
    Direction,
    LogForm,
    LogQuadratic,
    Opaque,
    Quadratic,
    ScoreFn,
    Segment,
    clip_below,
    closed_form,
    continuous_at_one,
    continuous_at_zero,
    eval_score,
    grid_points,
    is_difference_monotone,
    is_monotone,
    limit_at_one,
    probe_limit,
    reflect,
    sample,
    shift,
)
from test_rule_representation import random_truth_score, step_truth

coefficient = st.floats(min_value=-5, max_value=5, allow_nan=False)
inside = st.floats(min_value=0.01, max_value=0.99)


def log_truth():
    return ScoreFn([Segment(0.0, 1.0, False, False, LogForm(1.0, 0.0, 0.0))], NEG_INF, 0.0,
                   Direction.NON_DECREASING)


def brier_truth():
    return ScoreFn([Segment(0.0, 1.0, False, False, Quadratic(-1.0, 2.0, -1.0))], -1.0, 0.0,
                   Direction.NON_DECREASING)


def step_at_half():
    return ScoreFn([Segment(0.0, 0.5, True, False, Constant(-1.0)),
                    Segment(0.5, 1.0, True, True, Constant(0.0))], -1.0, 0.0,
                   Direction.NON_DECREASING)


def test_grid_contains_base_point_and_accumulates_at_endpoints():
    points = grid_points(11, 20)
    assert points[0] == 0.0 and points[-1] == 1.0
    assert 0.5 in points
    assert 2.0 ** -20 in points and 1.0 - 2.0 ** -20 in points
    assert np.all(np.diff(points) > 0)


def test_grid_without_endpoints_and_too_coarse_grid():
    points = grid_points(5, 3, include_endpoints=False)
    assert 0.0 not in points and 1.0 not in points
    with pytest.raises(ValueError):
        grid_points(2)


def test_closed_form_picks_simplest_named_form():
    assert closed_form(0, 0, 0, 0, 3.0) == Constant(3.0)
    assert closed_form(0, 0, 0, 2.0, 1.0) == Affine(2.0, 1.0)
    assert closed_form(1.0, 0, 0, 0, 0) == LogForm(1.0, 0.0, 0.0)
    assert closed_form(0, 0, -1.0, 0, 0) == Quadratic(-1.0, 0.0, 0.0)
    assert isinstance(closed_form(0, 1.0, 1.0, 0, 0), LogQuadratic)


def test_log_form_is_neg_inf_at_its_singular_endpoint():
    assert LogForm(1.0, 0.0, 0.0)(0.0) == NEG_INF
    assert LogForm(0.0, 1.0, 2.0)(1.0) == NEG_INF
    assert LogForm(1.0, 0.0, 0.0)(0.5) == pytest.approx(-math.log(2))


@given(coefficient, coefficient, coefficient, coefficient, coefficient, inside)
def test_reflected_form_mirrors_the_argument(a, b, q2, q1, q0, x):
    form = closed_form(a, b, q2, q1, q0)
    assert form.reflected()(x) == pytest.approx(form(1.0 - x), rel=1e-9, abs=1e-9)


def test_exact_monotonicity_of_closed_forms():
    assert Quadratic(-1.0, 2.0, -1.0).monotone_on(0.0, 1.0, Direction.NON_DECREASING)
    assert not Quadratic(-1.0, 0.0, 0.0).monotone_on(0.0, 1.0, Direction.NON_DECREASING)
    assert Quadratic(-1.0, 0.0, 0.0).monotone_on(0.0, 1.0, Direction.NON_INCREASING)
    # ln x + x^2 - 3x dips on (0.5, 1)
    form = LogQuadratic(1.0, 0.0, 1.0, -3.0, 0.0)
    assert form.monotone_on(0.0, 0.5, Direction.NON_DECREASING)
    assert not form.monotone_on(0.0, 1.0, Direction.NON_DECREASING)


def test_partition_must_cover_the_open_interval():
    with pytest.raises(InvalidInterval):
        ScoreFn([Segment(0.0, 0.4, True, True, Constant(0.0)),
                 Segment(0.5, 1.0, True, True, Constant(0.0))], 0.0, 0.0)
    with pytest.raises(InvalidInterval):
        ScoreFn([Segment(0.0, 0.5, True, True, Constant(0.0)),
                 Segment(0.5, 1.0, True, True, Constant(0.0))], 0.0, 0.0)
    with pytest.raises(InvalidInterval):
        ScoreFn([Segment(0.0, 0.5, True, False, Constant(0.0)),
                 Segment(0.5, 1.0, False, True, Constant(0.0))], 0.0, 0.0)
    with pytest.raises(InvalidInterval):
        Segment(0.5, 0.5, True, False, Constant(0.0))


def test_log_term_at_an_endpoint_needs_neg_inf_value():
    with pytest.raises(DomainError):
        ScoreFn([Segment(0.0, 1.0, False, False, LogForm(1.0, 0.0, 0.0))], -5.0, 0.0)


def test_declared_direction_is_enforced():
    with pytest.raises(NotMonotone):
        ScoreFn([Segment(0.0, 1.0, False, False, Quadratic(-1.0, 0.0, 0.0))], 0.0, -1.0,
                Direction.NON_DECREASING)
    # a jump at 1 that goes down breaks non-decreasing
    with pytest.raises(NotMonotone):
        ScoreFn([Segment(0.0, 1.0, True, False, Constant(0.0))], 0.0, -1.0,
                Direction.NON_DECREASING)


def test_endpoint_values_override_segments():
    f = ScoreFn([Segment(0.0, 1.0, True, True, Constant(-1.0))], -1.0, 0.0,
                Direction.NON_DECREASING)
    assert eval_score(f, 1.0) == 0.0
    assert eval_score(f, 0.999) == -1.0
    assert not continuous_at_one(f)
    assert continuous_at_zero(f)


def test_step_function_evaluates_closure_exactly():
    f = step_at_half()
    assert eval_score(f, 0.5) == 0.0
    assert eval_score(f, np.nextafter(0.5, 0.0)) == -1.0
    with pytest.raises(DomainError):
        eval_score(f, 1.5)


@given(inside)
def test_reflect_mirrors_values_and_direction(x):
    f = brier_truth()
    mirrored = reflect(f)
    assert mirrored.direction is Direction.NON_INCREASING
    assert eval_score(mirrored, x) == pytest.approx(eval_score(f, 1.0 - x), abs=1e-12)
    assert eval_score(mirrored, 0.0) == eval_score(f, 1.0)


def test_reflect_swaps_closures_of_a_step():
    mirrored = reflect(step_at_half())
    assert eval_score(mirrored, 0.5) == 0.0
    assert eval_score(mirrored, np.nextafter(0.5, 1.0)) == -1.0


def test_shift_and_sample():
    f = shift(log_truth(), -2.0)
    values = sample(f, [0.0, 0.5, 1.0])
    assert values[0] == NEG_INF
    assert values[1] == pytest.approx(-math.log(2) - 2.0)
    assert values[2] == -2.0


def test_clip_below_truncates_the_log():
    clipped = clip_below(log_truth(), 1e-6)
    assert eval_score(clipped, 0.0) == pytest.approx(math.log(1e-6))
    assert eval_score(clipped, 1e-9) == pytest.approx(math.log(1e-6))
    assert eval_score(clipped, 0.3) == pytest.approx(math.log(0.3))
    assert is_monotone(clipped, Direction.NON_DECREASING)


def test_limits_at_one():
    assert limit_at_one(log_truth()) == 0.0
    f = ScoreFn([Segment(0.0, 1.0, False, False, LogForm(0.0, 1.0, 0.0))], 0.0, NEG_INF,
                Direction.NON_INCREASING)
    assert limit_at_one(f) == NEG_INF
    assert continuous_at_one(f)


def test_probe_limit_finds_finite_and_divergent_limits():
    assert probe_limit(lambda x: x * x, 1) == pytest.approx(1.0, abs=1e-8)
    assert probe_limit(lambda x: math.log(1.0 - x), 1) == NEG_INF
    assert probe_limit(lambda x: math.log(x), 0) == NEG_INF
    with pytest.raises(NonConvergence):
        probe_limit(lambda x: 1.0 / (1.0 - x), 1)


def test_opaque_declaration_is_cross_checked_on_the_grid():
    wrong = Opaque(lambda u: -u, Direction.NON_DECREASING, 0.0, -1.0)
    f = ScoreFn([Segment(0.0, 1.0, False, False, wrong)], 0.0, -1.0)
    assert not is_monotone(f, Direction.NON_DECREASING)


def test_difference_monotonicity_of_log_and_brier():
    log_false = ScoreFn([Segment(0.0, 1.0, False, False, LogForm(0.0, 1.0, 0.0))], 0.0, NEG_INF)
    brier_false = ScoreFn([Segment(0.0, 1.0, False, False, Quadratic(-1.0, 0.0, 0.0))], 0.0, -1.0)
    assert is_difference_monotone(log_truth(), brier_truth(), Direction.NON_DECREASING)
    assert not is_difference_monotone(brier_truth(), log_truth(), Direction.NON_DECREASING)
    assert is_difference_monotone(log_false, brier_false, Direction.NON_INCREASING)
    assert not is_difference_monotone(brier_false, log_false, Direction.NON_INCREASING)


def test_difference_of_steps_compares_breakpoint_values():
    shifted_step = ScoreFn([Segment(0.0, 0.25, True, True, Constant(-1.0)),
                            Segment(0.25, 1.0, False, True, Constant(0.0))], -1.0, 0.0)
    # step_at_half - shifted_step is -1 on (0.25, 0.5) and 0 elsewhere
    assert not is_difference_monotone(step_at_half(), shifted_step, Direction.NON_DECREASING)
    assert not is_difference_monotone(step_at_half(), shifted_step, Direction.NON_INCREASING)
    assert is_difference_monotone(shifted_step, step_at_half(), Direction.UNCONSTRAINED)


def test_affine_monotonicity_follows_the_sign_of_the_slope():
    assert not Affine(-1e-12, 0.0).monotone_on(0.0, 1.0, Direction.NON_DECREASING)
    assert Affine(-1e-12, 0.0).monotone_on(0.0, 1.0, Direction.NON_INCREASING)
    assert not Affine(1e-300, 0.0).monotone_on(0.0, 1.0, Direction.NON_INCREASING)
    assert Affine(0.0, 3.0).monotone_on(0.0, 1.0, Direction.NON_INCREASING)
    assert Affine(-5.0, 0.0).monotone_on(0.4, 0.4, Direction.NON_DECREASING)
    assert Constant(2.0).monotone_on(0.0, 1.0, Direction.NON_DECREASING)
    with pytest.raises(NotMonotone):
        ScoreFn([Segment(0.0, 1.0, True, True, Affine(-1e-12, 0.0))], 0.0, -1e-12,
                Direction.NON_DECREASING)


def test_probe_limit_reads_slow_logarithmic_divergence_as_neg_inf():
    assert probe_limit(lambda x: 1e-7 * math.log1p(-x), 1) == NEG_INF
    assert probe_limit(lambda x: 1e-7 * math.log(x), 0) == NEG_INF
    assert probe_limit(lambda x: 1.0 - x, 1) == pytest.approx(0.0, abs=1e-8)


def breakpoints(f):
    return sorted({s.lo for s in f.segments} | {s.hi for s in f.segments})


def pairwise_monotone(values, direction):
    if direction is Direction.NON_INCREASING:
        values = [-v for v in values]
    for earlier, later in zip(values, values[1:]):
        if math.isinf(earlier) and earlier < 0:
            continue
        if not later >= earlier - 1e-12 * (1.0 + abs(earlier)):
            return False
    return True


def test_is_monotone_agrees_with_a_pairwise_check_on_random_grids():
    rng = np.random.default_rng(11)
    for _ in range(30):
        T = random_truth_score(rng)
        for f in (T, reflect(T)):
            points = sorted({0.0, 1.0} | set(breakpoints(f)) | set(rng.uniform(0.0, 1.0, 200)))
            values = sample(f, points).tolist()
            for direction in (Direction.NON_DECREASING, Direction.NON_INCREASING):
                assert is_monotone(f, direction) == pairwise_monotone(values, direction)


def test_random_score_functions_are_finite_inside_the_unit_interval():
    rng = np.random.default_rng(12)
    xs = rng.uniform(0.0, 1.0, 10_000)
    xs = xs[xs > 0.0]
    for _ in range(5):
        T = random_truth_score(rng)
        for f in (T, reflect(T)):
            assert np.all(np.isfinite(sample(f, xs)))


def neighbourhood(points):
    return [y for x in points for y in (np.nextafter(x, 0.0), x, np.nextafter(x, 1.0))
            if 0.0 <= y <= 1.0]


def test_double_reflection_is_exact():
    rng = np.random.default_rng(13)
    grid = [float(x) for x in grid_points()]
    functions = [random_truth_score(rng) for _ in range(20)]
    functions += [step_truth(at, closed) for at in grid if 0.05 < at < 0.95 for closed in (True, False)]
    for f in functions:
        back = reflect(reflect(f))
        assert back == f
        for x in neighbourhood(grid + breakpoints(f)):
            assert eval_score(back, float(x)) == eval_score(f, float(x)), x
