import logging
import math

import numpy as np
import pytest
from scipy import integrate, stats

from invariance_lab.core.chains import FiniteChain
from invariance_lab.core.coupling import (
    SmoothingSampler,
    build_path_coupling,
    coupling_error,
    estimate_island_laws,
    path_chunk,
    path_error,
    path_for_rep,
    randomized_pit,
)
from invariance_lab.core.exceptions import ValidationError
from invariance_lab.core.moments import long_run_variance
from invariance_lab.core.partition import build

N = 256


@pytest.fixture
def setup(two_state):
    mu, sigma2 = long_run_variance(two_state)
    partition = build(N, 0.1, 0.6, 4)
    return two_state, mu, math.sqrt(sigma2), partition


def test_constraint_residuals(setup):
    model, mu, sigma, partition = setup
    trace = build_path_coupling(model, mu, sigma, partition, N, reps_for_cdf=200, seed=3)
    assert trace.N == N
    assert trace.w_path.shape == (N,)
    assert len(trace.islands) == len(partition.islands())
    assert max(record.residual for record in trace.islands) <= 1e-10
    for record in trace.islands:
        assert record.i_star + record.f ** 2 == pytest.approx(record.sigma2, abs=1e-12)
        assert 0.0 < record.u < 1.0


def test_island_sums_match_path(setup):
    model, mu, sigma, partition = setup
    trace = build_path_coupling(model, mu, sigma, partition, N, reps_for_cdf=100, seed=5)
    for record in trace.islands:
        expected = trace.x_path[record.start - 1:record.end - 1].sum() - mu * record.length
        assert record.S == pytest.approx(expected, abs=1e-12)


def test_coupling_is_reproducible(setup):
    model, mu, sigma, partition = setup
    first = build_path_coupling(model, mu, sigma, partition, N, reps_for_cdf=100, seed=11, rep=7)
    second = build_path_coupling(model, mu, sigma, partition, N, reps_for_cdf=100, seed=11, rep=7, threads=3)
    assert np.array_equal(first.w_path, second.w_path)
    assert np.array_equal(first.x_path, path_for_rep(model, N, 11, 7))
    assert first.summary() == second.summary()


def test_path_rows_come_from_chunks(two_state, lab_settings):
    chunk = path_chunk(two_state, 64, seed=4, chunk=1, count=lab_settings.chunk_size)
    assert np.array_equal(path_for_rep(two_state, 64, 4, lab_settings.chunk_size + 3), chunk[3])


def test_island_increments_pooled_over_seeds(setup):
    model, mu, sigma, partition = setup
    scaled, residuals = [], []
    for seed in range(50):
        trace = build_path_coupling(model, mu, sigma, partition, N, reps_for_cdf=200, seed=seed)
        for record in trace.islands:
            island = trace.w_path[record.start - 1:record.end - 1]
            scaled.append(island.sum() / math.sqrt(record.length))
            residuals.append(record.residual)
    assert len(scaled) == 50 * len(partition.islands())
    assert max(residuals) <= 1e-10
    assert stats.kstest(scaled, "norm").pvalue > 0.01


def test_island_gaussian_variance(setup, lab_settings):
    model, mu, sigma, partition = setup
    laws = estimate_island_laws(model, mu, sigma, partition, reps_for_cdf=400, seed=8)
    assert laws.exact
    reps = 4 * lab_settings.chunk_size
    scaled = []
    for chunk in range(4):
        paths = path_chunk(model, N, 8, chunk, lab_settings.chunk_size)
        for row in range(paths.shape[0]):
            trace = build_path_coupling(model, mu, sigma, partition, N, 400, 8,
                                        rep=chunk * lab_settings.chunk_size + row, x_path=paths[row], laws=laws)
            scaled.extend(r.w2 / math.sqrt(r.sigma2) for r in trace.islands if r.sigma2 > 0)
    scaled = np.array(scaled)
    assert scaled.size >= reps
    assert abs(scaled.mean()) < 0.1
    assert abs(scaled.var() - 1.0) < 0.1


def test_degenerate_observable(caplog):
    chain = FiniteChain(P=[[0.6, 0.4], [0.3, 0.7]], f=[0.0, 0.0], x0=0)
    partition = build(64, 0.1, 0.6, 4)
    with caplog.at_level(logging.WARNING, logger="invariance_lab"):
        trace = build_path_coupling(chain, 0.0, 1.0, partition, 64, reps_for_cdf=50, seed=1)
    assert trace.degenerate == len(trace.islands)
    assert all(record.w2 == 0.0 and record.residual == 0.0 for record in trace.islands)
    assert "Degenerate" in caplog.text


def test_independent_steps(one_step):
    partition = build(128, 0.1, 0.6, 4)
    trace = build_path_coupling(one_step, 0.0, 1.0, partition, 128, reps_for_cdf=200, seed=2)
    for record in trace.islands:
        assert record.sigma2 == pytest.approx(record.length, abs=1e-9)
        island_sum = trace.w_path[record.start - 1:record.start - 1 + record.i_star].sum()
        assert island_sum + record.f * record.xi == pytest.approx(record.w2, abs=1e-10)


def test_coupling_validation(setup):
    model, mu, sigma, partition = setup
    with pytest.raises(ValidationError):
        build_path_coupling(model, mu, 0.0, partition, N, 10, 0)
    with pytest.raises(ValidationError):
        build_path_coupling(model, mu, sigma, partition, 2 * N, 10, 0)
    with pytest.raises(ValidationError):
        build_path_coupling(model, mu, sigma, partition, N, 10, 0, x_path=np.zeros(N - 1))
    with pytest.raises(ValidationError):
        estimate_island_laws(model, mu, sigma, partition, 0, 0)


def test_laws_thread_invariance(setup):
    model, mu, sigma, partition = setup
    single = estimate_island_laws(model, mu, sigma, partition, 150, seed=6, threads=1)
    pooled = estimate_island_laws(model, mu, sigma, partition, 150, seed=6, threads=4)
    assert np.array_equal(single.sorted_sums, pooled.sorted_sums)
    assert single.reps == 150


def test_randomized_pit():
    sorted_sums = np.array([[1.0], [2.0], [3.0]])
    assert randomized_pit(sorted_sums, np.array([2.0]), np.array([0.5]))[0] == pytest.approx(0.5)
    assert randomized_pit(sorted_sums, np.array([0.0]), np.array([0.3]))[0] == pytest.approx(0.075)
    assert randomized_pit(sorted_sums, np.array([5.0]), np.array([0.2]))[0] == pytest.approx(0.8)


def test_path_error_vanishes_for_exact_embedding():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(500)
    assert path_error(0.3 + 2.0 * w, w, 0.3, 2.0) == pytest.approx(0.0, abs=1e-12)
    assert path_error(np.ones(4), np.zeros(4), 0.0, 1.0) == pytest.approx(2.0)


def test_coupling_error_matches_trace(setup):
    model, mu, sigma, partition = setup
    trace = build_path_coupling(model, mu, sigma, partition, N, 100, 9)
    assert coupling_error(trace) == path_error(trace.x_path, trace.w_path, mu, sigma)
    assert trace.summary()["coupling_error"] == coupling_error(trace)


def test_smoothing_sampler():
    sampler = SmoothingSampler(1.0, seed=3)
    assert sampler.cf(0.0) == pytest.approx(1.0)
    assert sampler.cf(1.5) == 0.0
    assert sampler.cf(-1.5) == 0.0
    assert np.all(sampler.density >= 0.0)
    assert integrate.trapezoid(sampler.density, sampler.x) == pytest.approx(1.0, abs=1e-2)
    draws = sampler.sample(20000)
    assert abs(draws.mean()) < 5.0 * draws.std() / math.sqrt(draws.size)


@pytest.mark.parametrize("epsilon0, grid_size", [(0.0, None), (1.5, None), (1.0, 512)])
def test_smoothing_sampler_validation(epsilon0, grid_size):
    with pytest.raises(ValidationError):
        SmoothingSampler(epsilon0, grid_size)


def test_smoothed_laws_use_sample_variance(setup):
    model, mu, sigma, partition = setup
    sampler = SmoothingSampler(1.0, seed=1)
    laws = estimate_island_laws(model, mu, sigma, partition, 128, seed=2, smoothing=sampler)
    assert laws.smoothing and not laws.exact
    assert np.all(laws.variances > 0)
    trace = build_path_coupling(model, mu, sigma, partition, N, 128, 2, laws=laws, smoothing=sampler)
    assert max(record.residual for record in trace.islands) <= 1e-10


def test_smoothing_cf_vanishes_outside_support():
    sampler = SmoothingSampler(1.0)
    for seed in range(3):
        draws = sampler.sample(100000, np.random.default_rng(seed))
        for t in (1.5, 2.0, 3.0):
            assert abs(np.mean(np.exp(1j * t * draws))) <= 5.0 / math.sqrt(draws.size)


def test_smoothing_fourth_moment_stable_under_refinement():
    coarse = SmoothingSampler(1.0, grid_size=2 ** 12)
    fine = SmoothingSampler(1.0, grid_size=2 ** 14)
    m_coarse = integrate.trapezoid(coarse.x ** 4 * coarse.density, coarse.x)
    m_fine = integrate.trapezoid(fine.x ** 4 * fine.density, fine.x)
    assert math.isfinite(m_coarse) and m_coarse > 0
    assert m_coarse / m_fine == pytest.approx(1.0, abs=0.1)
