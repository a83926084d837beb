#!/usr/bin/env python3
"""
Tests for propriety_checks.py:
1. Expected scores under the 0 * -inf = 0 convention
2. Propriety sweeps over catalog rules, building blocks and fuzzed derived rules
3. Detection of improper pairs with a witness
4. The uniqueness gap between completions of one truth score
5. Agreement of the two difference-rule verdicts
"""

import itertools
import math

import numpy as np
import pytest

from extended_reals import NEG_INF, HypothesisViolated, PreconditionFailed
from propriety_checks import (
    CERTIFIED,
    GRID_SUPPORTED,
    GridSpec,
    difference_propriety,
    expected_score,
    propriety_check,
    uniqueness_gap,
)
from rule_catalog import catalog_rule
from rule_representation import (
    IndicatorA,
    NegIndicatorB,
    ScoringRule,
    building_block_rule,
    derive_false_score,
)
from score_functions import Constant, ScoreFn, Segment, closed_form, sample, shift
from test_rule_representation import random_truth_score, step_at_one

GRID = GridSpec()
TOL = 1e-9
LATTICE = [0.0, 0.25, 0.5, 0.75, 1.0]


def log_pair():
    T = catalog_rule("log").T
    return ScoringRule(T, T)


def test_grid_spec_validation_and_base_point():
    with pytest.raises(ValueError):
        GridSpec(2)
    assert 0.5 in GridSpec(4).points
    assert np.all(np.diff(GRID.points) > 0)


def test_expected_score_examples():
    rule = catalog_rule("log")
    assert expected_score(rule, 0.5, 0.5) == pytest.approx(-math.log(2.0))
    assert expected_score(rule, 1.0, 1.0) == 0.0
    assert expected_score(rule, 0.5, 1.0) == NEG_INF
    assert expected_score(rule, 0.0, 0.0) == 0.0


@pytest.mark.parametrize("name", ["log", "brier", "spherical"])
def test_catalog_rules_are_proper(name):
    report = propriety_check(catalog_rule(name), GRID, TOL)
    assert report.passed, report.witness
    assert report.witness is None
    assert report.worst_violation <= TOL
    assert report.checked_pairs == len(GRID.points) ** 2
    assert report.evidence == (GRID_SUPPORTED if name == "spherical" else CERTIFIED)


@pytest.mark.parametrize("name", ["log", "brier", "spherical"])
@pytest.mark.parametrize("k", [-5.0, -1.0, 0.0])
def test_common_shift_keeps_the_verdict(name, k):
    rule = catalog_rule(name)
    shifted = ScoringRule(shift(rule.T, k), shift(rule.F, k))
    assert propriety_check(shifted, GRID, TOL).passed
    improper = log_pair()
    moved = ScoringRule(shift(improper.T, k), shift(improper.F, k))
    assert propriety_check(moved, GRID, TOL).witness[:2] == propriety_check(improper, GRID, TOL).witness[:2]


def test_improper_pair_is_detected_with_a_witness():
    rule = log_pair()
    report = propriety_check(rule, GRID, TOL)
    assert not report.passed
    p, q, lhs, rhs = report.witness
    assert rhs > lhs
    assert report.worst_violation > TOL
    assert expected_score(rule, 0.5, 0.9) > expected_score(rule, 0.5, 0.5)


def test_witness_is_the_lexicographically_smallest_worst_pair():
    # T = F = ln x: the p = 0 row has lhs = -inf against finite reports, an infinite violation
    report = propriety_check(log_pair(), GRID, TOL)
    assert report.worst_violation == math.inf
    assert report.witness.p == 0.0
    assert report.witness.q == GRID.points[1]


def building_blocks():
    for value, closed in itertools.product(LATTICE, [True, False]):
        if not (value == 0.0 and closed):
            yield IndicatorA(value, closed)
        yield NegIndicatorB(value, closed)


@pytest.mark.parametrize("block", list(building_blocks()), ids=repr)
def test_building_blocks_are_proper(block):
    report = propriety_check(building_block_rule(block), GRID, TOL)
    assert report.passed, report.witness


def test_fuzzed_derived_rules_are_proper():
    rng = np.random.default_rng(4)
    for index in range(50):
        T = random_truth_score(rng, jump_at_one=index % 5 == 0)
        rule = derive_false_score(T, rng.uniform(-3.0, 3.0), rng.uniform(0.0, 2.0))
        report = propriety_check(rule, GRID, TOL)
        assert report.passed, (index, report.witness)


def test_refining_the_grid_finds_no_new_violations():
    rng = np.random.default_rng(11)
    fine = GridSpec(2001)
    for _ in range(3):
        rule = derive_false_score(random_truth_score(rng), rng.uniform(-1.0, 1.0))
        assert propriety_check(rule, fine, TOL).passed


def test_truth_jump_at_one_is_proper_with_neg_inf_false_score():
    rule = derive_false_score(step_at_one(), C=0.5)
    assert rule.F.value_at_1 == NEG_INF
    assert expected_score(rule, 1.0, 1.0) == 1.0
    assert expected_score(rule, 0.5, 1.0) == NEG_INF
    assert propriety_check(rule, GRID, TOL).passed


@pytest.mark.parametrize("value_at_1", [-1e5, -100.0, 0.0, 0.5])
def test_truth_jump_at_one_rejects_any_finite_false_score_at_one(value_at_1):
    K = ScoreFn([Segment(0.0, 1.0, True, False, Constant(0.0))], 0.0, value_at_1)
    report = propriety_check(ScoringRule(step_at_one(), K), GRID, TOL)
    assert not report.passed


def test_uniqueness_gap_examples():
    log_T = catalog_rule("log").T
    F = derive_false_score(log_T, 0.0, 0.0).F
    K = derive_false_score(log_T, 3.0, 0.0).F
    result = uniqueness_gap(log_T, F, K, GRID)
    assert result.is_constant
    assert result.gap == pytest.approx(-3.0, abs=1e-12)
    assert result.c_at_1 == NEG_INF

    catalog = catalog_rule("log")
    same = uniqueness_gap(catalog.T, catalog.F, catalog.F, GRID)
    assert same.is_constant and same.gap == 0.0

    brier_T = catalog_rule("brier").T
    F = derive_false_score(brier_T, 0.0, 0.0).F
    K = derive_false_score(brier_T, 0.0, 0.5).F
    dropped = uniqueness_gap(brier_T, F, K, GRID)
    assert dropped.is_constant
    assert dropped.gap == pytest.approx(0.0, abs=1e-12)
    assert dropped.c_at_1 == pytest.approx(-0.5, abs=1e-12)


def test_uniqueness_gap_requires_proper_inputs():
    rule = catalog_rule("log")
    with pytest.raises(PreconditionFailed):
        uniqueness_gap(rule.T, rule.F, catalog_rule("brier").F, GRID)


def test_completions_differ_by_a_constant():
    rng = np.random.default_rng(6)
    below = np.array([p for p in GRID.points if p < 1.0])
    constants = [(0.0, 0.0), (3.0, 0.0), (-1.0, 0.5)]
    for _ in range(20):
        T = random_truth_score(rng, constant_tail=True)
        completions = [derive_false_score(T, C, c).F for C, c in constants]
        for (i, F), (j, K) in itertools.combinations(enumerate(completions), 2):
            result = uniqueness_gap(T, F, K, GRID)
            difference = sample(F, below) - sample(K, below)
            assert result.is_constant
            assert np.max(difference) - np.min(difference) <= 1e-10
            assert result.gap == pytest.approx(constants[i][0] - constants[j][0], abs=1e-10)
            assert result.c_at_1 == pytest.approx(constants[i][1] - constants[j][1], abs=1e-10)


def combination_rule(log_weight, brier_weight, linear_weight):
    """log_weight * log + brier_weight * Brier + linear_weight * (x - 1, ln(1-x) + x)."""
    T = closed_form(log_weight, 0.0, -brier_weight, 2.0 * brier_weight + linear_weight,
                    -brier_weight - linear_weight)
    F = closed_form(0.0, log_weight + linear_weight, -brier_weight, linear_weight, 0.0)
    return ScoringRule(ScoreFn.from_segments([Segment(0.0, 1.0, False, False, T)]),
                       ScoreFn.from_segments([Segment(0.0, 1.0, False, False, F)]))


def test_log_minus_brier_is_proper():
    verdict = difference_propriety(catalog_rule("log"), catalog_rule("brier"), GRID)
    assert verdict.corollary_verdict
    assert verdict.grid_verdict.passed
    assert verdict.agree


def test_brier_minus_log_is_not_proper():
    verdict = difference_propriety(catalog_rule("brier"), catalog_rule("log"), GRID)
    assert not verdict.corollary_verdict
    assert not verdict.grid_verdict.passed
    assert verdict.grid_verdict.witness is not None
    assert verdict.agree


def test_difference_of_a_rule_with_itself_is_proper():
    rule = catalog_rule("brier")
    verdict = difference_propriety(rule, rule, GRID)
    assert verdict.corollary_verdict and verdict.grid_verdict.passed


def test_difference_requires_endpoint_continuity():
    with pytest.raises(HypothesisViolated):
        difference_propriety(derive_false_score(step_at_one()), catalog_rule("brier"), GRID)


def test_difference_verdicts_agree_on_random_pairs():
    rng = np.random.default_rng(2024)
    weights = [0.0, 0.5, 1.0, 1.5, 2.0]
    for _ in range(50):
        first = combination_rule(*rng.choice(weights, 3))
        second = combination_rule(*rng.choice(weights, 3))
        verdict = difference_propriety(first, second, GRID)
        assert verdict.agree, verdict
