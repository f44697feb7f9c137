import numpy as np
import pytest

from invariance_lab.core.chains import FiniteChain, StochasticRecursion, Atom, simulate
from invariance_lab.core.exceptions import ModelError, ValidationError
from invariance_lab.core.moments import (
    C3Point,
    c3_profile,
    c3_tau_fit,
    closed_form_variance,
    covariance_decay,
    covariance_series,
    exact_mean_variance,
    long_run_variance,
    lp_maximal_check,
    mc_sum_variance,
    series_truncation,
    variance_report,
    window_variance,
)
from invariance_lab.core.utils import stream


def test_two_state_exact(two_state):
    mu, sigma2 = exact_mean_variance(two_state)
    assert mu == pytest.approx(0.0, abs=1e-12)
    assert sigma2 == pytest.approx(0.75, abs=1e-10)
    assert covariance_series(two_state, 60) == pytest.approx(sigma2, abs=1e-10)
    assert series_truncation(two_state) == 40


def test_one_step_is_iid(one_step):
    assert exact_mean_variance(one_step) == pytest.approx((0.0, 1.0), abs=1e-12)


def test_constant_observable(two_state):
    flat = FiniteChain(P=two_state.P, f=[2.0, 2.0])
    mu, sigma2 = exact_mean_variance(flat)
    assert mu == pytest.approx(2.0)
    assert sigma2 == pytest.approx(0.0, abs=1e-14)


def test_permutation_equivariance(three_state):
    perm = [2, 0, 1]
    P = three_state.P[np.ix_(perm, perm)]
    relabeled = FiniteChain(P=P, f=three_state.f[perm])
    assert exact_mean_variance(relabeled) == pytest.approx(exact_mean_variance(three_state), abs=1e-12)


def test_resolvent_matches_series(three_state):
    _, sigma2 = exact_mean_variance(three_state)
    assert covariance_series(three_state, 60) == pytest.approx(sigma2, abs=1e-10)


def test_closed_forms(ar_half, iid_pm1, recursion):
    assert closed_form_variance(ar_half) == pytest.approx((0.0, 4.0 / 3.0), abs=1e-15)
    assert closed_form_variance(iid_pm1) == (0.0, 1.0)
    assert closed_form_variance(recursion) == pytest.approx((0.0, 1.0 / 0.83), abs=1e-12)


def test_closed_form_errors(two_state):
    shifted = StochasticRecursion(atoms=(Atom(0.5, 1.0, 0.5), Atom(0.5, 0.5, 0.5)))
    with pytest.raises(ModelError):
        closed_form_variance(shifted)
    with pytest.raises(ValidationError):
        closed_form_variance(two_state)


def test_long_run_variance(ar_half, recursion, two_state):
    assert long_run_variance(ar_half) == pytest.approx((0.0, 4.0))
    assert long_run_variance(recursion)[1] == pytest.approx((1.0 / 0.83) * 1.4 / 0.6)
    assert long_run_variance(two_state)[1] == pytest.approx(0.75)


def test_stationary_marginal_matches_closed_form(ar_half, recursion):
    for model in (ar_half, recursion):
        values = simulate(model, 60, 40000, stream(8, 1))[:, -1]
        _, marginal = closed_form_variance(model)
        stderr = marginal * np.sqrt(2.0 / values.size) * 2
        assert np.var(values) == pytest.approx(marginal, abs=3 * stderr)


@pytest.mark.parametrize("model_name", ["two_state", "ar_half", "recursion"])
def test_monte_carlo_long_run(model_name, request):
    model = request.getfixturevalue(model_name)
    mu, sigma2 = long_run_variance(model)
    estimate, stderr = mc_sum_variance(model, 20000, 200, seed=21, mu=mu)
    assert stderr > 0
    assert abs(estimate - sigma2) <= 3 * stderr + 2 * sigma2 / 20000 ** 0.5


def test_monte_carlo_thread_invariance(two_state):
    assert mc_sum_variance(two_state, 500, 150, seed=3, threads=1) == mc_sum_variance(
        two_state, 500, 150, seed=3, threads=4
    )


def test_window_variance(two_state, one_step):
    # стационарный старт через большой start
    assert window_variance(two_state, 60, 1) == pytest.approx(0.25, abs=1e-12)
    assert window_variance(one_step, 1, 10) == pytest.approx(10.0, abs=1e-12)
    long = window_variance(two_state, 60, 400)
    assert long / 400 == pytest.approx(0.75, abs=0.01)
    with pytest.raises(ValidationError):
        window_variance(two_state, 0, 5)


def test_c3_profile_iid_and_negative_control(iid_pm1):
    profile = c3_profile(iid_pm1, 1.0, [16, 64], [0, 8], reps=400, seed=5)
    for point in profile:
        assert point.deviation <= 4 * point.stderr + 0.05
    biased = c3_profile(iid_pm1, 1.1, [16, 64], [0, 8], reps=400, seed=5)
    for point in biased:
        assert point.deviation == pytest.approx(0.1, abs=4 * point.stderr + 0.05)


def test_c3_tau_fit():
    profile = [C3Point(n=n, deviation=0.5 / n ** 0.9, stderr=1e-9, k_at_max=0) for n in (4, 16)]
    profile += [C3Point(n=n, deviation=0.3 / n ** 0.9, stderr=1e-9, k_at_max=0) for n in (64, 256)]
    fit = c3_tau_fit(profile, gamma=0.1)
    assert fit["tau"] == pytest.approx(0.5)
    assert fit["pass"]
    bad = profile + [C3Point(n=1024, deviation=0.3, stderr=1e-9, k_at_max=0)]
    assert not c3_tau_fit(bad, gamma=0.1)["pass"]


def test_covariance_decay_stationary_limit(two_state):
    points = covariance_decay(two_state, [60], list(range(6)))
    for point in points:
        assert point.cov == pytest.approx(0.25 * 0.5 ** point.k, abs=1e-12)
        assert point.cov <= point.bound


def test_covariance_decay_constant_observable(two_state):
    flat = FiniteChain(P=two_state.P, f=[1.0, 1.0])
    points = covariance_decay(flat, [0, 3], [0, 1, 5])
    assert all(p.cov == pytest.approx(0.0, abs=1e-15) for p in points)


def test_lp_maximal_check(iid_pm1):
    points = lp_maximal_check(iid_pm1, 3.0, [1, 256, 1024, 4096], reps=400, seed=9)
    assert points[0].ratio == pytest.approx(1.0)
    ratios = [p.ratio for p in points[1:]]
    assert max(ratios) < 2.0
    assert abs(ratios[-1] - ratios[0]) < 0.2


def test_lp_maximal_non_centered():
    ones = FiniteChain(P=[[1.0]], f=[1.0])
    points = lp_maximal_check(ones, 3.0, [4, 16], reps=10, seed=0)
    assert [p.ratio for p in points] == pytest.approx([2.0, 4.0])


@pytest.mark.parametrize("p", [2.0, 3.5])
def test_lp_maximal_p_range(iid_pm1, p):
    with pytest.raises(ValidationError):
        lp_maximal_check(iid_pm1, p, [4], reps=10, seed=0)


def test_variance_report(two_state, ar_half):
    report = variance_report(two_state, [16], [0, 4], reps=50, seed=1)
    assert report.method == "resolvent"
    assert report.sigma2 == pytest.approx(0.75)
    assert report.series_truncation == 40
    assert report.c2_value == pytest.approx(0.5)
    ar = variance_report(ar_half, [], [], reps=50, seed=1)
    assert ar.method == "closed_form"
    assert ar.long_run_sigma2 == pytest.approx(4.0)
    assert ar.to_dict()["c3_profile"] == []
