"""Среднее и дисперсия в ЦПТ, проверки условий на моменты и убывание ковариаций."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..decorators import measure_performance, require_finite_chain
from ..infra.settings import settings
from ..logging_config import logger
from .chains import (
    ArBernoulli,
    ChainModel,
    FiniteChain,
    StochasticRecursion,
    simulate,
    simulate_sums,
)
from .exceptions import ModelError, PropertyViolationError, SpectralError, ValidationError
from .operator import check_primitive, mu_delta, spectral_decompose, stationary_distribution
from .utils import STREAM_BOOTSTRAP, STREAM_MOMENTS, bootstrap_stderr, chunk_bounds, parallel_map, stream

METHODS = ("resolvent", "series", "closed_form", "monte_carlo")

# ключи подпотоков внутри STREAM_MOMENTS
_KEY_C3 = 1
_KEY_LP = 2
_KEY_C2 = 3
_KEY_SUMS = 4


@dataclass(frozen=True)
class C3Point:
    n: int
    deviation: float
    stderr: float
    k_at_max: int

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "deviation": self.deviation, "stderr": self.stderr, "k_at_max": self.k_at_max}


@dataclass(frozen=True)
class CovPoint:
    l: int
    k: int
    cov: float
    bound: float


@dataclass(frozen=True)
class MaximalPoint:
    n: int
    ratio: float
    stderr: float


@dataclass
class MomentReport:
    mu: float
    sigma2: float
    method: str
    delta: float
    long_run_sigma2: float
    series_truncation: Optional[int] = None
    series_sigma2: Optional[float] = None
    c3_profile: List[C3Point] = field(default_factory=list)
    c2_value: Optional[float] = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValidationError("method", f"ожидается одно из {METHODS}")
        if self.sigma2 < 0:
            raise ValidationError("sigma2", "дисперсия не может быть отрицательной")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu,
            "sigma2": self.sigma2,
            "long_run_sigma2": self.long_run_sigma2,
            "method": self.method,
            "series_truncation": self.series_truncation,
            "series_sigma2": self.series_sigma2,
            "c3_profile": [p.to_dict() for p in self.c3_profile],
            "c2_value": self.c2_value,
            "delta": self.delta,
        }


def _centered(chain: FiniteChain) -> Tuple[np.ndarray, np.ndarray, float]:
    nu = stationary_distribution(chain.P)
    mu = float(nu @ chain.f)
    return nu, chain.f - mu, mu


@require_finite_chain
def exact_mean_variance(chain: FiniteChain) -> Tuple[float, float]:
    """μ = ν(f), σ² = ν(f̃²) + 2·ν(f̃ ⊙ (I−Q)⁻¹Qf̃)."""
    check_primitive(chain.P)
    nu, f_tilde, mu = _centered(chain)
    n = chain.n_states
    Q = chain.P - np.outer(np.ones(n), nu)
    try:
        resolvent_term = np.linalg.solve(np.eye(n) - Q, Q @ f_tilde)
    except np.linalg.LinAlgError as e:
        raise SpectralError(f"I − Q вырождена: {e}")
    sigma2 = float(nu @ f_tilde ** 2 + 2.0 * nu @ (f_tilde * resolvent_term))
    return mu, max(sigma2, 0.0)


@require_finite_chain
def series_truncation(chain: FiniteChain, tol: Optional[float] = None) -> int:
    """Наименьшее K с C_Q·κ^K < tol."""
    tol = tol or float(settings.get("series_tol", 1e-12))
    spectral = spectral_decompose(chain)
    if spectral.kappa == 0.0:
        return 1
    return max(1, math.ceil(math.log(tol / spectral.C_Q) / math.log(spectral.kappa)))


@require_finite_chain
def covariance_series(chain: FiniteChain, K: int) -> float:
    """s_0 + 2·Σ_{k=1}^{K} s_k, s_k = Cov_ν(f(X_0), f(X_k))."""
    nu, f_tilde, _ = _centered(chain)
    weighted = nu * f_tilde
    g = f_tilde.copy()
    total = float(weighted @ g)
    for _ in range(K):
        g = chain.P @ g
        total += 2.0 * float(weighted @ g)
    return total


def closed_form_variance(model: ChainModel) -> Tuple[float, float]:
    """Стационарные μ и σ² для AR(1) и центрированной рекурсии."""
    if isinstance(model, ArBernoulli):
        return 0.0, 1.0 / (1.0 - model.alpha ** 2)
    if isinstance(model, StochasticRecursion):
        eb = model.moment("b", 1)
        ea2 = model.moment("a", 2)
        if abs(eb) > 1e-12:
            raise ModelError(model.kind, f"E b = {eb} ≠ 0: центрируйте b (замените b на b − E b)")
        if ea2 >= 1:
            raise ModelError(model.kind, f"E a² = {ea2} ≥ 1")
        return 0.0, model.moment("b", 2) / (1.0 - ea2)
    raise ValidationError("model", "замкнутая форма доступна только для моделей 'ar' и 'recursion'")


def long_run_variance(model: ChainModel) -> Tuple[float, float]:
    """μ и lim Var(S_n)/n.

    Для AR(1) и рекурсии Cov_ν(X_0, X_k) = (E a)^k·Var_ν(X_0), поэтому предельная
    дисперсия равна стационарной, умноженной на (1 + E a)/(1 − E a).
    """
    if isinstance(model, FiniteChain):
        return exact_mean_variance(model)
    mu, marginal = closed_form_variance(model)
    ea = model.alpha if isinstance(model, ArBernoulli) else model.moment("a", 1)
    return mu, marginal * (1.0 + ea) / (1.0 - ea)


@require_finite_chain
def window_variances(chain: FiniteChain, windows: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Точные Var_x(Σ_{i=start}^{start+length−1} f(X_i)) для набора окон (start ≥ 1).

    Для каждой длины L: g_L = f̃ + P·g_{L−1}, h_L = f̃² + 2f̃⊙(P·g_{L−1}) + P·h_{L−1};
    закон X_start равен δ_x·P^start.
    """
    if not windows:
        return np.zeros(0)
    _, f_tilde, _ = _centered(chain)
    n = chain.n_states
    lengths = sorted({int(length) for _, length in windows})
    if lengths[0] < 1 or min(int(s) for s, _ in windows) < 1:
        raise ValidationError("windows", "start и length должны быть ≥ 1")

    moments_by_length: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    g = np.zeros(n)
    h = np.zeros(n)
    wanted = iter(lengths)
    target = next(wanted)
    for L in range(1, lengths[-1] + 1):
        Pg = chain.P @ g
        h = f_tilde ** 2 + 2.0 * f_tilde * Pg + chain.P @ h
        g = f_tilde + Pg
        if L == target:
            moments_by_length[L] = (g.copy(), h.copy())
            target = next(wanted, None)

    start_row = np.zeros(n)
    start_row[chain.x0] = 1.0
    result = np.empty(len(windows))
    for idx, (start, length) in enumerate(windows):
        law = start_row @ np.linalg.matrix_power(chain.P, int(start))
        g_L, h_L = moments_by_length[int(length)]
        result[idx] = max(float(law @ h_L - (law @ g_L) ** 2), 0.0)
    return result


def window_variance(chain: FiniteChain, start: int, length: int) -> float:
    return float(window_variances(chain, [(start, length)])[0])


def _paths_in_chunks(model: ChainModel, length: int, reps: int, seed: int, key: int, threads: int) -> np.ndarray:
    chunks = chunk_bounds(reps, settings.chunk_size)

    def run(chunk):
        index, _, count = chunk
        return simulate(model, length, count, stream(seed, STREAM_MOMENTS, key, length, index))

    return np.vstack(parallel_map(run, chunks, threads))


@measure_performance
def mc_sum_variance(
    model: ChainModel, n: int, reps: int, seed: int, mu: float = 0.0, threads: int = 1
) -> Tuple[float, float]:
    """Монте-Карло оценка Var(S_n)/n и её бутстреп-ошибка."""
    chunks = chunk_bounds(reps, settings.chunk_size)

    def run(chunk):
        index, _, count = chunk
        return simulate_sums(model, n, count, stream(seed, STREAM_MOMENTS, _KEY_SUMS, n, index), shift=mu)

    sums = np.concatenate(parallel_map(run, chunks, threads))
    estimate = float(np.var(sums, ddof=1) / n)
    stderr = bootstrap_stderr(
        sums, lambda s: np.var(s, ddof=1) / n, stream(seed, STREAM_BOOTSTRAP, _KEY_SUMS, n), settings.bootstrap_resamples
    )
    return estimate, stderr


@measure_performance
def c3_profile(
    model: ChainModel,
    sigma2: float,
    n_list: Sequence[int],
    k_list: Sequence[int],
    reps: int,
    seed: int,
    threads: int = 1,
) -> List[C3Point]:
    """Для каждого n: max_k |Var̂(S_{k+1..k+n})/n − σ²| с бутстреп-ошибкой по репликам."""
    if reps < 2:
        raise ValidationError("reps", "нужно не менее двух реплик")
    n_list = sorted(int(n) for n in n_list)
    k_list = sorted(int(k) for k in k_list)
    if not n_list or n_list[0] < 1 or not k_list or k_list[0] < 0:
        raise ValidationError("n_list", "требуются n ≥ 1 и k ≥ 0")

    length = n_list[-1] + k_list[-1]
    paths = _paths_in_chunks(model, length, reps, seed, _KEY_C3, threads)
    prefix = np.concatenate([np.zeros((reps, 1)), np.cumsum(paths, axis=1)], axis=1)

    boot_rng = stream(seed, STREAM_BOOTSTRAP, _KEY_C3)
    boot_idx = boot_rng.integers(0, reps, size=(settings.bootstrap_resamples, reps))

    profile = []
    for n in n_list:
        sums = np.stack([prefix[:, k + n] - prefix[:, k] for k in k_list], axis=1)
        deviations = np.abs(np.var(sums, axis=0, ddof=1) / n - sigma2)
        best = int(np.argmax(deviations))
        boot = np.array([
            np.max(np.abs(np.var(sums[idx], axis=0, ddof=1) / n - sigma2)) for idx in boot_idx
        ])
        profile.append(C3Point(n=n, deviation=float(deviations[best]), stderr=float(np.std(boot, ddof=1)),
                               k_at_max=k_list[best]))
    return profile


def c3_tau_fit(profile: Sequence[C3Point], gamma: float = 0.1, slack: float = 3.0) -> Dict[str, Any]:
    """τ̂ по первой половине профиля и флаги deviation ≤ τ̂·n^{γ−1} + slack·stderr."""
    if not profile:
        raise ValidationError("profile", "профиль пуст")
    head = profile[: max(1, len(profile) // 2)]
    tau = max(p.deviation * p.n ** (1.0 - gamma) for p in head)
    checks = [
        {"n": p.n, "deviation": p.deviation, "allowed": tau * p.n ** (gamma - 1.0) + slack * p.stderr,
         "pass": p.deviation <= tau * p.n ** (gamma - 1.0) + slack * p.stderr}
        for p in profile
    ]
    return {"tau": tau, "gamma": gamma, "checks": checks, "pass": all(c["pass"] for c in checks)}


@require_finite_chain
def covariance_decay(
    chain: FiniteChain,
    l_list: Sequence[int],
    k_list: Sequence[int],
    delta: Optional[float] = None,
    c_delta: Optional[float] = None,
) -> List[CovPoint]:
    """Точные Cov_x(f(X_l), f(X_{l+k})) и граница A(x)·κ^{kγ/4}, γ = min{1, 2δ}.

    A(x) = c_δ·(1 + C_Q·C_P²·(‖ν‖ + ‖δ_x‖)·‖e‖ + μ_δ^{2+γ}) с нормами, равными 1.
    """
    delta = float(delta if delta is not None else settings.get("default_delta", 0.5))
    c_delta = float(c_delta if c_delta is not None else settings.get("c_delta", 1.0))
    gamma = min(1.0, 2.0 * delta)
    spectral = spectral_decompose(chain)
    moment = mu_delta(chain, delta)
    A = c_delta * (1.0 + spectral.C_Q * spectral.C_P ** 2 * (spectral.norm_nu + spectral.norm_delta_x) * spectral.norm_e
                   + moment ** (2.0 + gamma))

    start_row = np.zeros(chain.n_states)
    start_row[chain.x0] = 1.0
    f = chain.f
    points = []
    violations = []
    for l in l_list:
        law_l = start_row @ np.linalg.matrix_power(chain.P, int(l))
        for k in k_list:
            Pk = np.linalg.matrix_power(chain.P, int(k))
            joint = float(law_l @ (f * (Pk @ f)))
            cov = joint - float(law_l @ f) * float(law_l @ Pk @ f)
            decay = 1.0 if k == 0 else spectral.kappa ** (k * gamma / 4.0)
            bound = A * decay
            point = CovPoint(l=int(l), k=int(k), cov=abs(cov), bound=bound)
            points.append(point)
            if point.cov > bound + 1e-12:
                violations.append(point)
    if violations:
        raise PropertyViolationError("covariance_decay", f"|Cov| > граница в {len(violations)} точках: {violations[:3]}")
    return points


@measure_performance
def lp_maximal_check(
    model: ChainModel,
    p: float,
    n_list: Sequence[int],
    reps: int,
    seed: int,
    mu: float = 0.0,
    delta: Optional[float] = None,
    threads: int = 1,
) -> List[MaximalPoint]:
    """‖max_{k≤n}|S_k|‖_p / √n по префиксам одних и тех же траекторий."""
    delta = float(delta if delta is not None else settings.get("default_delta", 0.5))
    if not 2.0 < p <= 2.0 + 2.0 * delta:
        raise ValidationError("p", f"требуется 2 < p ≤ {2.0 + 2.0 * delta}")
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise ValidationError("n_list", "требуются n ≥ 1")
    paths = _paths_in_chunks(model, n_list[-1], reps, seed, _KEY_LP, threads)
    running_max = np.maximum.accumulate(np.abs(np.cumsum(paths - mu, axis=1)), axis=1)
    boot_rng = stream(seed, STREAM_BOOTSTRAP, _KEY_LP)

    points = []
    for n in n_list:
        maxima = running_max[:, n - 1]
        ratio = float(np.mean(maxima ** p) ** (1.0 / p) / math.sqrt(n))
        stderr = bootstrap_stderr(maxima, lambda m: np.mean(m ** p) ** (1.0 / p) / math.sqrt(n), boot_rng,
                                  settings.bootstrap_resamples)
        points.append(MaximalPoint(n=n, ratio=ratio, stderr=stderr))
    return points


def c2_moment(model: ChainModel, delta: float, reps: int = 1000, horizon: int = 256, seed: int = 0) -> float:
    """sup_i ‖X_i‖_{2+2δ}: точно для конечных цепей, Монте-Карло иначе."""
    if isinstance(model, FiniteChain):
        return mu_delta(model, delta)
    p = 2.0 + 2.0 * delta
    paths = _paths_in_chunks(model, horizon, reps, seed, _KEY_C2, 1)
    return float(np.max(np.mean(np.abs(paths) ** p, axis=0)) ** (1.0 / p))


@measure_performance
def variance_report(
    model: ChainModel,
    n_list: Sequence[int],
    k_list: Sequence[int],
    reps: int,
    seed: int,
    delta: Optional[float] = None,
    threads: int = 1,
) -> MomentReport:
    delta = float(delta if delta is not None else settings.get("default_delta", 0.5))
    if isinstance(model, FiniteChain):
        mu, sigma2 = exact_mean_variance(model)
        K = series_truncation(model)
        series = covariance_series(model, K)
        if abs(series - sigma2) > 1e-10:
            logger.warning(f"Resolvent and series variances differ: {sigma2} vs {series} (K={K})")
        method = "resolvent"
        long_run = sigma2
    else:
        mu, sigma2 = closed_form_variance(model)
        K, series = None, None
        method = "closed_form"
        long_run = long_run_variance(model)[1]

    profile = c3_profile(model, long_run, n_list, k_list, reps, seed, threads) if n_list else []
    return MomentReport(
        mu=mu,
        sigma2=sigma2,
        method=method,
        delta=delta,
        long_run_sigma2=long_run,
        series_truncation=K,
        series_sigma2=series,
        c3_profile=profile,
        c2_value=c2_moment(model, delta, seed=seed),
    )
