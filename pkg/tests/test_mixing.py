import itertools
import math

import numpy as np
import pytest

from invariance_lab.core.chains import FiniteChain
from invariance_lab.core.exceptions import DefectBelowFloorError, PropertyViolationError, ValidationError
from invariance_lab.core.mixing import (
    IntervalPattern,
    c1_bound,
    c1_defect,
    c1_sweep,
    cf_joint,
    decay_fit,
    gap_family,
    grid_defect,
    standard_patterns,
)
from invariance_lab.core.operator import MixingConstants


def brute_force_cf(chain, pattern, t1, t2):
    """Прямое суммирование по всем траекториям X_1..X_L."""
    weights = {}
    bounds = pattern.j_bounds
    for m in range(pattern.M1):
        for idx in range(bounds[m] + 1, bounds[m + 1] + 1):
            weights[idx] = t1[m]
    for m in range(pattern.M2):
        lo, hi = bounds[pattern.M1 + m], bounds[pattern.M1 + m + 1]
        for idx in range(lo + pattern.k_gap + 1, hi + pattern.k_gap + 1):
            weights[idx] = t2[m]
    length = bounds[-1] + pattern.k_gap
    total = 0j
    for path in itertools.product(range(chain.n_states), repeat=length):
        prob, prev, phase = 1.0, chain.x0, 0.0
        for idx, state in enumerate(path, start=1):
            prob *= chain.P[prev, state]
            prev = state
            phase += weights.get(idx, 0.0) * chain.f[state]
        total += prob * np.exp(1j * phase)
    return total


@pytest.fixture
def slow_chain():
    return FiniteChain(P=[[0.95, 0.05], [0.05, 0.95]], f=[-1.0, 1.0], x0=0)


@pytest.mark.parametrize("pattern, t1, t2", [
    (IntervalPattern((0, 1, 3, 4), 2, 1, k_gap=2), [0.3, -0.7], [0.9]),
    (IntervalPattern((1, 2, 4), 1, 1, k_gap=1), [1.0], [-0.4]),
    (IntervalPattern((0, 2, 3, 5), 1, 2, k_gap=0), [0.5], [0.2, -1.0]),
])
def test_cf_matches_path_enumeration(two_state, pattern, t1, t2):
    expected = brute_force_cf(two_state, pattern, t1, t2)
    assert cf_joint(two_state, None, pattern, t1, t2) == pytest.approx(expected, abs=1e-12)


def test_cf_at_zero_is_one(three_state):
    pattern = IntervalPattern((0, 2, 5, 6), 2, 1, k_gap=3)
    assert cf_joint(three_state, None, pattern, [0.0, 0.0], [0.0]) == pytest.approx(1.0, abs=1e-13)


def test_cf_constant_zero_observable():
    chain = FiniteChain(P=[[0.6, 0.4], [0.3, 0.7]], f=[0.0, 0.0], x0=1)
    pattern = IntervalPattern((0, 3, 4), 1, 1, k_gap=2)
    assert cf_joint(chain, None, pattern, [0.8], [-0.8]) == pytest.approx(1.0, abs=1e-13)


def test_cf_hermitian_symmetry(three_state):
    pattern = IntervalPattern((0, 1, 3), 1, 1, k_gap=4)
    value = cf_joint(three_state, None, pattern, [0.6], [-0.25])
    mirrored = cf_joint(three_state, None, pattern, [-0.6], [0.25])
    assert mirrored == pytest.approx(value.conjugate(), abs=1e-13)


def test_cf_second_group_zero_marginalizes(three_state):
    joint = IntervalPattern((0, 2, 3), 1, 1, k_gap=5)
    single = IntervalPattern((0, 2, 3), 1, 1, k_gap=0)
    assert cf_joint(three_state, None, joint, [0.7], [0.0]) == pytest.approx(
        cf_joint(three_state, None, single, [0.7], [0.0]), abs=1e-13
    )


def test_cf_rejects_bad_arguments(two_state):
    pattern = IntervalPattern((0, 1, 2), 1, 1)
    with pytest.raises(ValidationError):
        cf_joint(two_state, None, pattern, [1.5], [0.0])
    with pytest.raises(ValidationError):
        cf_joint(two_state, None, pattern, [0.1, 0.2], [0.0])
    with pytest.raises(ValidationError):
        cf_joint(two_state, 5, pattern, [0.1], [0.0])


@pytest.mark.parametrize("bounds, M1, M2, k_gap", [
    ((0, 1), 1, 1, 0),
    ((0, 2, 2), 1, 1, 0),
    ((-1, 1, 2), 1, 1, 0),
    ((0, 1, 2), 0, 2, 0),
    ((0, 1, 2), 1, 1, -1),
])
def test_pattern_validation(bounds, M1, M2, k_gap):
    with pytest.raises(ValidationError):
        IntervalPattern(bounds, M1, M2, k_gap)


def test_pattern_cards_and_gap_family():
    pattern = IntervalPattern((1, 3, 4, 8), 2, 1)
    assert pattern.cards == [2, 1, 4]
    assert pattern.max_card == 4
    family = gap_family(pattern, [1, 5, 9])
    assert [p.k_gap for p in family] == [1, 5, 9]
    assert all(p.j_bounds == pattern.j_bounds for p in family)


def test_bound_for_unit_cards():
    constants = MixingConstants(lambda0_x=4.0, lambda1=math.log(2.0), lambda2=1.0, epsilon0=1.0)
    pattern = IntervalPattern((0, 1, 2), 1, 1, k_gap=10)
    assert c1_bound(constants, pattern) == pytest.approx(1.0 / 64.0, rel=1e-12)


def test_defect_within_bound(two_state):
    pattern = IntervalPattern((0, 1, 2), 1, 1, k_gap=10)
    result = c1_defect(two_state, None, pattern)
    assert 0.0 < result.defect <= result.bound


def test_defect_vanishes_without_memory(one_step):
    for k_gap in (1, 3, 7):
        pattern = IntervalPattern((0, 2, 3, 5), 2, 1, k_gap=k_gap)
        assert grid_defect(one_step, None, pattern, np.linspace(-1, 1, 9)) <= 1e-14


def test_violation_is_reported(two_state):
    constants = MixingConstants(lambda0_x=1e-12, lambda1=math.log(2.0), lambda2=1.0, epsilon0=1.0)
    pattern = IntervalPattern((0, 1, 2), 1, 1, k_gap=1)
    with pytest.raises(PropertyViolationError):
        c1_defect(two_state, None, pattern, constants=constants)


def test_sweep_small_gaps(two_state):
    patterns = standard_patterns(max_total=3, max_card=2, k_gaps=[0, 1, 2, 5])
    rows = c1_sweep(two_state, patterns)
    assert len(rows) == len(patterns)
    assert all(row["holds"] for row in rows)


@pytest.mark.slow
def test_sweep_full_pattern_family(two_state):
    patterns = standard_patterns(4, 4, range(1, 21))
    rows = c1_sweep(two_state, patterns)
    assert len(rows) == 480
    assert {row["k_gap"] for row in rows} == set(range(1, 21))
    assert max(row["M1"] + row["M2"] for row in rows) == 4
    assert max(row["max_card"] for row in rows) == 4
    assert all(row["holds"] for row in rows)


def test_sweep_thread_invariance(two_state):
    patterns = standard_patterns(max_total=3, max_card=2, k_gaps=[1, 3])
    assert c1_sweep(two_state, patterns, threads=1) == c1_sweep(two_state, patterns, threads=3)


def test_decay_slope_two_state(two_state):
    fit = decay_fit(two_state, None, gap_family(IntervalPattern((0, 1, 2), 1, 1), range(1, 21)))
    assert fit.slope == pytest.approx(math.log(0.5), abs=0.05)
    assert fit.r2 > 0.99


def test_decay_slope_slow_chain(slow_chain):
    fit = decay_fit(slow_chain, None, gap_family(IntervalPattern((0, 1, 2), 1, 1), range(1, 21)))
    assert fit.slope == pytest.approx(math.log(0.9), abs=0.05)


def test_decay_fit_below_floor(one_step):
    with pytest.raises(DefectBelowFloorError) as exc_info:
        decay_fit(one_step, None, gap_family(IntervalPattern((0, 1, 2), 1, 1), range(1, 21)))
    assert exc_info.value.usable < 5
