"""Монте-Карло эксперименты: KS-расстояние для максимума частичных сумм,
кривые ошибки каплинга и лог-лог оценка показателя скорости."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..decorators import measure_performance
from ..infra.settings import settings
from ..logging_config import logger
from .chains import ChainModel, simulate
from .coupling import SmoothingSampler, build_path_coupling, coupling_error, estimate_island_laws, path_chunk
from .exceptions import ValidationError
from .partition import build, independent_rate, optimal_beta, smallest_feasible_k0, theoretical_rate
from .utils import STREAM_BOOTSTRAP, STREAM_KS, bootstrap_stderr, chunk_bounds, parallel_map, stream

CONSTANT_NOTE = (
    "Константа C₀ теоремы не проверяется: сравниваются только показатели. "
    "Каплинг суррогатный (квантильный по островам), аппроксимируется медиана ошибки."
)
REPORT_COLUMNS = ["alpha", "rho_star", "beta_star", "independent_rate", "loss", "slope", "slope_lo", "slope_hi"]
CURVE_COLUMNS = ["N", "median_error", "stderr"]


class MaxStatKs(NamedTuple):
    distance: float
    stderr: float
    degenerate: bool


@dataclass(frozen=True)
class RatePoint:
    N: int
    statistic: float
    stderr: float


@dataclass
class RateFit:
    points: List[RatePoint]
    slope: float
    intercept: float
    slope_ci: Tuple[float, float]
    target: float
    alpha: float
    beta: float
    epsilon: float
    reps: int
    k0: Dict[int, int] = field(default_factory=dict)

    def rows(self) -> List[Dict[str, Any]]:
        return [{"N": p.N, "median_error": p.statistic, "stderr": p.stderr} for p in self.points]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "reps": self.reps,
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_ci": list(self.slope_ci),
            "target": self.target,
            "k0": {str(n): k for n, k in self.k0.items()},
            "points": self.rows(),
        }


def _reflection_cdf(sigma: float):
    def cdf(x):
        return np.maximum(0.0, 2.0 * stats.norm.cdf(np.asarray(x) / sigma) - 1.0)
    return cdf


@measure_performance
def max_stat_ks(
    model: ChainModel, mu: float, sigma: float, N: int, reps: int, seed: int, threads: int = 1
) -> MaxStatKs:
    """Колмогоровское расстояние между законом N^{−1/2}·max_k S_k и 2Φ(x/σ) − 1."""
    if sigma <= 0:
        raise ValidationError("sigma", "σ должно быть > 0")
    if reps < 100:
        raise ValidationError("reps", "для KS нужно не меньше 100 реплик")
    if N < 1:
        raise ValidationError("N", "N должно быть ≥ 1")

    def run(chunk):
        index, _, count = chunk
        paths = simulate(model, N, count, stream(seed, STREAM_KS, N, index))
        return np.max(np.cumsum(paths - mu, axis=1), axis=1) / math.sqrt(N)

    maxima = np.concatenate(parallel_map(run, chunk_bounds(reps, settings.chunk_size), threads))
    cdf = _reflection_cdf(sigma)
    degenerate = bool(np.ptp(maxima) == 0.0)
    if degenerate:
        logger.warning(f"max_stat_ks: all {reps} maxima equal {maxima[0]:.3g} (degenerate input)")

    distance = float(stats.kstest(maxima, cdf).statistic)
    stderr = bootstrap_stderr(
        maxima, lambda sample: stats.kstest(sample, cdf).statistic,
        stream(seed, STREAM_BOOTSTRAP, STREAM_KS, N), settings.bootstrap_resamples,
    )
    return MaxStatKs(distance, stderr, degenerate)


def fit_power_law(
    ns: Sequence[int],
    per_n_errors: Sequence[np.ndarray],
    n_boot: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float, Tuple[float, float]]:
    """Наклон log(медиана) по log N и 95% бутстреп-интервал по репликам."""
    n_boot = int(n_boot or settings.bootstrap_resamples)
    rng = rng or stream(0, STREAM_BOOTSTRAP)
    samples = [np.asarray(e, dtype=float) for e in per_n_errors]
    medians = np.array([np.median(e) for e in samples])
    usable = np.isfinite(medians) & (medians > 0)
    if usable.sum() < 4:
        raise ValidationError("N_list", f"нужно не меньше 4 пригодных точек, получено {int(usable.sum())}")
    log_n = np.log(np.asarray(ns, dtype=float)[usable])
    samples = [e for e, ok in zip(samples, usable) if ok]
    slope, intercept = np.polyfit(log_n, np.log(medians[usable]), 1)

    slopes = np.empty(n_boot)
    for b in range(n_boot):
        resampled = [np.median(e[rng.integers(0, e.size, e.size)]) for e in samples]
        slopes[b] = np.polyfit(log_n, np.log(np.maximum(resampled, np.finfo(float).tiny)), 1)[0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return float(slope), float(intercept), (float(min(lo, slope)), float(max(hi, slope)))


@measure_performance
def error_curve(
    model: ChainModel,
    mu: float,
    sigma: float,
    alpha: float,
    N_list: Sequence[int],
    reps: int,
    reps_for_cdf: int,
    seed: int,
    epsilon: float = 0.05,
    beta: Optional[float] = None,
    k0: int = 4,
    threads: int = 1,
    smoothing: Optional[SmoothingSampler] = None,
) -> RateFit:
    ns = sorted({int(n) for n in N_list})
    if len(ns) < 4:
        raise ValidationError("N_list", "нужно не меньше 4 различных значений N")
    if reps < 1:
        raise ValidationError("reps", "reps должно быть ≥ 1")
    beta = optimal_beta(alpha) if beta is None else float(beta)

    points, per_n, used_k0 = [], [], {}
    for N in ns:
        n = N.bit_length() - 1
        start = smallest_feasible_k0(n, epsilon, beta, k0)
        if start != k0:
            logger.warning(f"k0 raised from {k0} to {start} for N={N} (eps={epsilon}, beta={beta})")
        used_k0[N] = start
        partition = build(N, epsilon, beta, start)
        laws = estimate_island_laws(model, mu, sigma, partition, reps_for_cdf, seed, threads, smoothing)

        def run(chunk, N=N, partition=partition, laws=laws):
            index, first, count = chunk
            # кусок всегда полного размера: реплика r совпадает с path_for_rep(r)
            paths = path_chunk(model, N, seed, index, settings.chunk_size)
            return [
                coupling_error(build_path_coupling(model, mu, sigma, partition, N, reps_for_cdf, seed,
                                                   rep=first + row, x_path=paths[row], laws=laws,
                                                   smoothing=smoothing))
                for row in range(count)
            ]

        errors = np.array([e for part in parallel_map(run, chunk_bounds(reps, settings.chunk_size), threads)
                           for e in part])
        stderr = bootstrap_stderr(errors, np.median, stream(seed, STREAM_BOOTSTRAP, N), settings.bootstrap_resamples)
        points.append(RatePoint(N, float(np.median(errors)), stderr))
        per_n.append(errors)
        logger.info(f"Error curve N={N}: median={points[-1].statistic:.4f} ± {stderr:.4f}")

    slope, intercept, ci = fit_power_law(ns, per_n, settings.bootstrap_resamples, stream(seed, STREAM_BOOTSTRAP))
    return RateFit(points=points, slope=slope, intercept=intercept, slope_ci=ci, target=-theoretical_rate(alpha),
                   alpha=float(alpha), beta=beta, epsilon=float(epsilon), reps=int(reps), k0=used_k0)


def report(alpha: float, fits: Sequence[RateFit]) -> Dict[str, Any]:
    """Сопоставление эмпирических наклонов с ρ*(α), β*(α) и показателем независимого случая."""
    rows = []
    for fit in fits:
        rho = theoretical_rate(fit.alpha)
        indep = independent_rate(fit.alpha)
        rows.append({
            "alpha": fit.alpha,
            "rho_star": rho,
            "beta_star": optimal_beta(fit.alpha),
            "independent_rate": indep,
            "loss": indep - rho,
            "slope": fit.slope,
            "slope_lo": fit.slope_ci[0],
            "slope_hi": fit.slope_ci[1],
        })
    return {
        "alpha": alpha,
        "rho_star": theoretical_rate(alpha),
        "beta_star": optimal_beta(alpha),
        "independent_rate": independent_rate(alpha),
        "loss": independent_rate(alpha) - theoretical_rate(alpha),
        "columns": REPORT_COLUMNS,
        "rows": rows,
        "fits": [fit.to_dict() for fit in fits],
        "note": CONSTANT_NOTE,
    }
