import logging
import math

import pytest

from invariance_lab.core.exceptions import PartitionError, ValidationError
from invariance_lab.core.partition import (
    GAP,
    ISLAND,
    _layout,
    block_fits,
    build,
    build_block,
    gap_total,
    independent_rate,
    island_length_closed_form,
    optimal_beta,
    smallest_feasible_k0,
    theoretical_rate,
)

PARAMETERS = [(0.1, 0.6), (0.1, 0.75), (0.2, 0.6), (0.2, 0.75)]


def _spans(segments):
    return [(s.kind, s.start, s.end) for s in segments]


def test_worked_layout():
    segments = build_block(4, 0.1, 0.6)
    assert _spans(segments) == [
        (GAP, 16, 20), (ISLAND, 20, 22), (GAP, 22, 23), (ISLAND, 23, 25),
        (GAP, 25, 27), (ISLAND, 27, 29), (GAP, 29, 30), (ISLAND, 30, 32),
    ]
    assert [s.j for s in segments] == [1, 1, 2, 2, 3, 3, 4, 4]
    gaps = sum(s.length for s in segments if s.kind == GAP)
    islands = sum(s.length for s in segments if s.kind == ISLAND)
    assert gaps == gap_total(4, 0.1, 0.6) == 8
    assert islands == 8


def test_zero_resolution_levels():
    segments = build_block(4, 0.1, 0.2)
    assert _spans(segments) == [(GAP, 16, 17), (ISLAND, 17, 32)]


@pytest.mark.parametrize("epsilon, beta", PARAMETERS)
def test_block_properties(epsilon, beta):
    for k in range(4, 21):
        if not block_fits(k, epsilon, beta):
            with pytest.raises(PartitionError):
                build_block(k, epsilon, beta)
            continue
        e, b = math.floor(epsilon * k), math.floor(beta * k)
        segments = build_block(k, epsilon, beta)
        assert segments[0].start == 2 ** k
        assert segments[-1].end == 2 ** (k + 1)
        assert all(a.end == c.start for a, c in zip(segments, segments[1:]))
        assert [s.kind for s in segments] == [GAP, ISLAND] * 2 ** b
        gaps = [s for s in segments if s.kind == GAP]
        islands = [s for s in segments if s.kind == ISLAND]
        assert len(gaps) == len(islands) == 2 ** b
        assert sum(s.length for s in gaps) == (2 + b) * 2 ** (e + b) // 2
        assert gaps[0].length == 2 ** (e + b)
        assert min(s.length for s in gaps) >= 2 ** e
        lengths = [s.length for s in islands]
        assert max(lengths) - min(lengths) <= 1


def test_small_epsilon_feasible_everywhere():
    assert all(block_fits(k, 0.1, 0.6) for k in range(4, 21))


def test_island_length_bounds():
    epsilon, beta = 0.1, 0.6
    for k in range(4, 21):
        b = math.floor(beta * k)
        for island in (s for s in build_block(k, epsilon, beta) if s.kind == ISLAND):
            assert 0.25 * 2 ** (k * (1 - beta)) <= island.length <= 2 ** (k - b)


def test_infeasible_parameters_raise():
    assert not block_fits(20, 0.1, 0.75)
    assert not any(block_fits(k, 0.2, 0.75) for k in range(4, 21))
    with pytest.raises(PartitionError):
        smallest_feasible_k0(20, 0.2, 0.75)


def test_smallest_feasible_k0():
    assert smallest_feasible_k0(20, 0.1, 0.6, 4) == 4
    assert smallest_feasible_k0(20, 0.05, 0.75, 4) == 9
    assert all(block_fits(k, 0.05, 0.75) for k in range(9, 21))


def test_parameter_validation():
    with pytest.raises(ValidationError):
        build_block(4, 0.3, 0.7)
    with pytest.raises(ValidationError):
        build_block(4, 0.0, 0.5)
    with pytest.raises(PartitionError):
        build(15, 0.1, 0.6, k0=4)


@pytest.mark.parametrize("N, locator, kind, start", [
    (31, (4, 4), ISLAND, 30),
    (29, (4, 4), GAP, 29),
    (16, (4, 1), GAP, 16),
    (64, (6, 1), GAP, 64),
])
def test_locator(N, locator, kind, start):
    partition = build(N, 0.1, 0.6, k0=4)
    assert partition.locator == locator
    segment = partition.segment_of(N)
    assert (segment.kind, segment.start) == (kind, start)
    assert (segment.k, segment.j) == locator


def test_index_set_lexicographic():
    partition = build(100, 0.1, 0.6, k0=4)
    keys = partition.index_set()
    assert keys == sorted(keys)
    assert keys[-1] == partition.locator
    covered = [s for s in partition.segments() if (s.k, s.j) <= partition.locator]
    assert any(s.start <= 100 < s.end for s in covered)
    assert all(s.end <= 101 for s in partition.islands())
    assert partition.islands()[-1].start <= 100


def test_segment_of_out_of_range():
    partition = build(40, 0.1, 0.6, k0=4)
    with pytest.raises(ValidationError):
        partition.segment_of(10)


def test_closed_form_discrepancy_logged(caplog):
    _layout.cache_clear()
    assert island_length_closed_form(4, 0.1, 0.6) == 2
    with caplog.at_level(logging.WARNING, logger="invariance_lab"):
        build_block(10, 0.1, 0.6)
    assert any("closed form" in r.getMessage() for r in caplog.records)
    _layout.cache_clear()


def test_optimal_beta():
    assert optimal_beta(0.5) == 0.75
    assert optimal_beta(1e6) == pytest.approx(0.5, abs=1e-6)
    assert optimal_beta(1e-9) == pytest.approx(1.0, abs=1e-8)
    assert all(0.5 < optimal_beta(a) < 1 for a in (0.1, 1, 10))


def test_theoretical_rate():
    assert theoretical_rate(0.5) == 3 / 32
    assert theoretical_rate(1e6) == pytest.approx(0.25, abs=1e-5)
    assert theoretical_rate(1e-9) == pytest.approx(0.0, abs=1e-8)
    values = [theoretical_rate(a) for a in (0.1, 0.5, 1, 5, 1e6)]
    assert values == sorted(values)
    assert len(set(values)) == len(values)
    assert independent_rate(0.5) == 1 / 8
    with pytest.raises(ValidationError):
        theoretical_rate(0.0)
