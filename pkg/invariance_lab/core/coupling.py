"""Каплинг траектории с гауссовскими частичными суммами по островам разбиения.

Траектория X фиксируется, а нормальные величины подстраиваются к ней: для каждого
острова рандомизированное преобразование ранга суммы даёт u, затем
W'' = √v·Φ⁻¹(u) и точное гауссовское обусловливание на линейное ограничение
Σ_{i≤i*} W_i + f·ξ = W''.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import integrate, stats

from ..decorators import measure_performance
from ..infra.settings import settings
from ..logging_config import logger
from .chains import ChainModel, FiniteChain, simulate
from .exceptions import OracleError, ValidationError
from .moments import window_variances
from .partition import BlockPartition
from .utils import STREAM_AUX, STREAM_COUPLING, STREAM_PATH, STREAM_SMOOTHING, chunk_bounds, parallel_map, stream


def _bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


class SmoothingSampler:
    """Симметричная величина V, х.ф. которой есть гладкая шапочка с носителем [−ε₀, ε₀].

    Х.ф. равна нормированной автокорреляции шапочки exp(−1/(1−(2t/ε₀)²)), поэтому
    плотность есть |b̂|²/норма ≥ 0. Плотность восстанавливается косинус-суммой на
    сетке, выборка берётся по таблице обратной функции распределения.
    """

    def __init__(self, epsilon0: float = 1.0, grid_size: Optional[int] = None, seed: int = 0):
        grid_size = int(grid_size or settings.get("smoothing_x_points", 4096))
        if not 0 < epsilon0 <= 1:
            raise ValidationError("epsilon0", "ε₀ должно лежать в (0, 1]")
        if grid_size < 2 ** 10:
            raise ValidationError("grid_size", "размер сетки должен быть ≥ 2^10")
        self.epsilon0 = float(epsilon0)
        self.grid_size = grid_size
        self.seed = seed
        self._rng = stream(seed, STREAM_SMOOTHING)

        half = int(settings.get("smoothing_t_points", 1025))
        t_half = np.linspace(-epsilon0 / 2.0, epsilon0 / 2.0, half)
        dt = t_half[1] - t_half[0]
        base = _bump(2.0 * t_half / epsilon0)
        auto = np.convolve(base, base, mode="full") * dt
        self._t = np.linspace(-epsilon0, epsilon0, auto.size)
        self._cf = auto / auto.max()

        x_range = float(settings.get("smoothing_x_range", 200.0)) / epsilon0
        self.x = np.linspace(-x_range, x_range, grid_size)
        self.density = self._invert()
        cdf = integrate.cumulative_trapezoid(self.density, self.x, initial=0.0)
        cdf /= cdf[-1]
        knots_cdf, first = np.unique(cdf, return_index=True)
        self._cdf_knots = knots_cdf
        self._x_knots = self.x[first]

    def _invert(self) -> np.ndarray:
        positive = self._t >= 0
        t = self._t[positive]
        psi = self._cf[positive]
        weights = np.full(t.size, t[1] - t[0])
        weights[0] *= 0.5
        weights[-1] *= 0.5
        density = np.empty(self.x.size)
        for lo in range(0, self.x.size, 512):
            xs = self.x[lo:lo + 512]
            density[lo:lo + 512] = np.cos(np.outer(xs, t)) @ (psi * weights) / math.pi
        tol = float(settings.get("negative_density_tol", 1e-9))
        if density.min() < -tol:
            raise OracleError("smoothing_sampler", f"grid too coarse: плотность {density.min():.3e} < −{tol}")
        return np.clip(density, 0.0, None)

    def cf(self, t) -> np.ndarray:
        return np.interp(np.abs(np.asarray(t, dtype=float)), self._t[self._t >= 0], self._cf[self._t >= 0],
                         right=0.0)

    def sample(self, size: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        rng = rng or self._rng
        return np.interp(rng.random(size), self._cdf_knots, self._x_knots)


def smoothing_sampler(epsilon0: float = 1.0, grid_size: Optional[int] = None, seed: int = 0) -> SmoothingSampler:
    return SmoothingSampler(epsilon0, grid_size, seed)


@dataclass
class IslandLaws:
    """Законы сумм по островам: отсортированные вспомогательные суммы и дисперсии в единицах σ²."""

    starts: np.ndarray
    lengths: np.ndarray
    keys: List[tuple]
    sorted_sums: np.ndarray
    variances: np.ndarray
    exact: bool
    mu: float
    sigma: float
    smoothing: bool = False

    @property
    def reps(self) -> int:
        return int(self.sorted_sums.shape[0])


@dataclass
class IslandRecord:
    k: int
    j: int
    start: int
    end: int
    length: int
    S: float
    u: float
    w2: float
    sigma2: float
    i_star: int
    f: float
    xi: float
    residual: float

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "j": self.j, "length": self.length, "S": self.S, "u": self.u, "W2": self.w2,
                "sigma2": self.sigma2, "i_star": self.i_star, "f": self.f, "residual": self.residual}


@dataclass
class CouplingTrace:
    x_path: np.ndarray
    w_path: np.ndarray
    islands: List[IslandRecord]
    mu: float
    sigma: float
    partition: BlockPartition = field(repr=False)
    seed: int = 0
    rep: int = 0
    degenerate: int = 0

    @property
    def N(self) -> int:
        return int(self.x_path.size)

    def summary(self) -> Dict[str, Any]:
        return {"N": self.N, "seed": self.seed, "rep": self.rep, "mu": self.mu, "sigma": self.sigma,
                "islands": len(self.islands), "degenerate_islands": self.degenerate,
                "max_residual": max((r.residual for r in self.islands), default=0.0),
                "coupling_error": coupling_error(self)}


def _island_geometry(partition: BlockPartition):
    islands = partition.islands()
    starts = np.array([s.start for s in islands], dtype=np.int64)
    lengths = np.array([s.length for s in islands], dtype=np.int64)
    return islands, starts, lengths


def _island_sums(paths: np.ndarray, mu: float, starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    prefix = np.concatenate([np.zeros((paths.shape[0], 1)), np.cumsum(paths - mu, axis=1)], axis=1)
    return prefix[:, starts + lengths - 1] - prefix[:, starts - 1]


def path_chunk(model: ChainModel, N: int, seed: int, chunk: int, count: int) -> np.ndarray:
    """Траектории реплик chunk·size .. chunk·size+count−1; поток зависит только от (seed, N, chunk)."""
    return simulate(model, N, count, stream(seed, STREAM_PATH, N, chunk))


def path_for_rep(model: ChainModel, N: int, seed: int, rep: int) -> np.ndarray:
    size = settings.chunk_size
    return path_chunk(model, N, seed, rep // size, size)[rep % size]


@measure_performance
def estimate_island_laws(
    model: ChainModel,
    mu: float,
    sigma: float,
    partition: BlockPartition,
    reps_for_cdf: int,
    seed: int,
    threads: int = 1,
    smoothing: Optional[SmoothingSampler] = None,
) -> IslandLaws:
    """Законы островных сумм по reps_for_cdf независимым вспомогательным траекториям."""
    if sigma <= 0:
        raise ValidationError("sigma", "σ должно быть > 0")
    if reps_for_cdf < 1:
        raise ValidationError("reps_for_cdf", "нужна хотя бы одна вспомогательная траектория")
    N = partition.N
    islands, starts, lengths = _island_geometry(partition)

    def run(chunk):
        index, _, count = chunk
        paths = simulate(model, N, count, stream(seed, STREAM_AUX, N, index))
        return _island_sums(paths, mu, starts, lengths)

    sums = np.vstack(parallel_map(run, chunk_bounds(reps_for_cdf, settings.chunk_size), threads))
    if smoothing is not None:
        sums = sums + smoothing.sample(sums.size, stream(seed, STREAM_SMOOTHING, N)).reshape(sums.shape)

    exact = isinstance(model, FiniteChain) and smoothing is None
    if exact:
        variances = window_variances(model, list(zip(starts.tolist(), lengths.tolist()))) / sigma ** 2
    elif reps_for_cdf > 1:
        variances = np.var(sums, axis=0, ddof=1) / sigma ** 2
    else:
        variances = np.zeros(starts.size)

    return IslandLaws(
        starts=starts,
        lengths=lengths,
        keys=[(s.k, s.j) for s in islands],
        sorted_sums=np.sort(sums, axis=0),
        variances=variances,
        exact=exact,
        mu=mu,
        sigma=sigma,
        smoothing=smoothing is not None,
    )


def randomized_pit(sorted_sums: np.ndarray, values: np.ndarray, tie_break: np.ndarray) -> np.ndarray:
    """u = (#{<S} + V·(#{=S} + 1)) / (R + 1): ранг S среди R + 1 перестановочных значений."""
    reps = sorted_sums.shape[0]
    less = np.array([np.searchsorted(sorted_sums[:, i], v, side="left") for i, v in enumerate(values)])
    upto = np.array([np.searchsorted(sorted_sums[:, i], v, side="right") for i, v in enumerate(values)])
    return (less + tie_break * (upto - less + 1)) / (reps + 1)


def build_path_coupling(
    model: ChainModel,
    mu: float,
    sigma: float,
    partition: BlockPartition,
    N: int,
    reps_for_cdf: int,
    seed: int,
    rep: int = 0,
    x_path: Optional[np.ndarray] = None,
    laws: Optional[IslandLaws] = None,
    smoothing: Optional[SmoothingSampler] = None,
    threads: int = 1,
) -> CouplingTrace:
    if sigma <= 0:
        raise ValidationError("sigma", "σ должно быть > 0")
    if partition.N != N:
        raise ValidationError("partition", f"разбиение построено для N={partition.N}, а не для N={N}")
    if laws is None:
        laws = estimate_island_laws(model, mu, sigma, partition, reps_for_cdf, seed, threads, smoothing)
    if x_path is None:
        x_path = path_for_rep(model, N, seed, rep)
    x_path = np.asarray(x_path, dtype=float)
    if x_path.shape != (N,):
        raise ValidationError("x_path", f"ожидается траектория длины {N}")

    rng = stream(seed, STREAM_COUPLING, N, rep)
    w = rng.standard_normal(N)
    xi0 = rng.standard_normal(laws.starts.size)
    tie_break = rng.random(laws.starts.size)
    tie_break = np.where(tie_break == 0.0, 0.5, tie_break)

    starts, lengths = laws.starts, laws.lengths
    S = _island_sums(x_path[None, :], mu, starts, lengths)[0]
    if laws.smoothing and smoothing is not None:
        S = S + smoothing.sample(S.size, rng)
    u = randomized_pit(laws.sorted_sums, S, tie_break)

    v = np.maximum(laws.variances, 0.0)
    w2 = np.sqrt(v) * stats.norm.ppf(u)
    i_star = np.minimum(lengths, np.floor(v).astype(np.int64))
    f = np.sqrt(np.abs(v - i_star))

    # точное обусловливание: Z = Z0 + a(W'' − a·Z0)/|a|², |a|² = i* + f² = v
    origin = starts - 1
    prefix = np.concatenate([[0.0], np.cumsum(w)])
    partial = prefix[origin + i_star] - prefix[origin]
    degenerate = v <= 0.0
    correction = np.where(degenerate, 0.0, (w2 - partial - f * xi0) / np.where(degenerate, 1.0, v))
    shift = np.zeros(N + 1)
    np.add.at(shift, origin, correction)
    np.add.at(shift, origin + i_star, -correction)
    w = w + np.cumsum(shift)[:N]
    xi = xi0 + correction * f

    prefix = np.concatenate([[0.0], np.cumsum(w)])
    residual = np.abs(prefix[origin + i_star] - prefix[origin] + f * xi - w2)

    if degenerate.any():
        logger.warning(f"Degenerate coupling on {int(degenerate.sum())} islands (zero variance), W'' set to 0")

    records = [
        IslandRecord(k=key[0], j=key[1], start=int(s), end=int(s + L), length=int(L), S=float(S_i), u=float(u_i),
                     w2=float(w2_i), sigma2=float(v_i), i_star=int(istar_i), f=float(f_i), xi=float(xi_i),
                     residual=float(r_i))
        for key, s, L, S_i, u_i, w2_i, v_i, istar_i, f_i, xi_i, r_i in zip(
            laws.keys, starts, lengths, S, u, w2, v, i_star, f, xi, residual
        )
    ]
    return CouplingTrace(x_path=x_path, w_path=w, islands=records, mu=mu, sigma=sigma, partition=partition,
                         seed=seed, rep=rep, degenerate=int(degenerate.sum()))


def coupling_error(trace: CouplingTrace) -> float:
    """N^{−1/2}·max_k |Σ_{i≤k}(x_i − μ) − σ·Σ_{i≤k} W_i|."""
    return path_error(trace.x_path, trace.w_path, trace.mu, trace.sigma)


def path_error(x_path: np.ndarray, w_path: np.ndarray, mu: float, sigma: float) -> float:
    gap = np.cumsum(np.asarray(x_path) - mu) - sigma * np.cumsum(np.asarray(w_path))
    return float(np.max(np.abs(gap)) / math.sqrt(gap.size))
