"""Точные оракулы для расстояния Прохорова, полной вариации, обобщённой обратной
функции распределения и правой части леммы о сглаживании."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special, stats

from ..infra.settings import settings
from .exceptions import OracleError, ValidationError

DIST_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """Конечный закон: точки носителя (m, d), d ≤ 3, и их вероятности."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        probs = np.asarray(self.probs, dtype=float)
        if support.ndim != 2 or support.shape[1] > 3 or support.shape[0] != probs.shape[0]:
            raise ValidationError("support", "носитель должен иметь форму (m, d), d ≤ 3, m = len(probs)")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("probs", "веса должны быть неотрицательны и суммироваться в 1")
        if np.unique(support, axis=0).shape[0] != support.shape[0]:
            raise ValidationError("support", "точки носителя должны быть различны")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.support.shape[1]


def _merge(P: FiniteDist, Q: FiniteDist) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if P.dim != Q.dim:
        raise ValidationError("support", "размерности законов различаются")
    points, inverse = np.unique(np.vstack([P.support, Q.support]), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    p = np.zeros(points.shape[0])
    q = np.zeros(points.shape[0])
    np.add.at(p, inverse[:P.probs.size], P.probs)
    np.add.at(q, inverse[P.probs.size:], Q.probs)
    return points, p, q


def _sup_distances(points: np.ndarray) -> np.ndarray:
    return np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=2)


def total_variation_finite(P: FiniteDist, Q: FiniteDist) -> float:
    _, p, q = _merge(P, Q)
    return 0.5 * float(np.abs(p - q).sum())


def prokhorov_finite(P: FiniteDist, Q: FiniteDist) -> float:
    """π(P, Q) = inf{ε : P(B) ≤ Q(B^ε) + ε для всех B} в sup-метрике, перебором всех B.

    g(ε) = max_B [P(B) − Q(B^ε)] не возрастает, поэтому допустимость ε монотонна
    и ищется бисекцией по кандидатам: попарным расстояниям и значениям g на них.
    """
    points, p, q = _merge(P, Q)
    m = points.shape[0]
    limit = int(settings.get("max_prokhorov_support", 12))
    if m > limit:
        raise OracleError("prokhorov_finite",
                          f"объединённый носитель {m} > {limit} точек; используйте выборочную оценку")

    distances = _sup_distances(points)
    bits = ((np.arange(2 ** m)[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
    mass_p = bits @ p

    def excess(eps: float) -> float:
        neighbours = (distances <= eps + DIST_TOL).astype(float)
        enlarged = ((bits @ neighbours) > 0).astype(float)
        return float(np.max(mass_p - enlarged @ q))

    levels = np.unique(distances)
    candidates = np.unique(np.concatenate([levels, [max(excess(d), 0.0) for d in levels]]))

    lo, hi = 0, candidates.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if excess(candidates[mid]) <= candidates[mid] + DIST_TOL:
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def strassen_dudley_finite(P: FiniteDist, Q: FiniteDist) -> float:
    """π через теорему Штрассена–Дадли: min_ε max(ε, min_γ γ(d > ε)), где γ пробегает каплинги P и Q.

    Для каждого порога решается транспортная задача с 0-1 стоимостью.
    """
    points, p, q = _merge(P, Q)
    m = points.shape[0]
    distances = _sup_distances(points)

    A_eq = np.zeros((2 * m, m * m))
    for i in range(m):
        A_eq[i, i * m:(i + 1) * m] = 1.0
        A_eq[m + i, i::m] = 1.0
    b_eq = np.concatenate([p, q])

    best = math.inf
    for eps in np.unique(distances):
        cost = (distances > eps + DIST_TOL).astype(float).ravel()
        result = optimize.linprog(cost, A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
        if not result.success:
            raise OracleError("strassen_dudley", result.message)
        best = min(best, max(float(eps), float(result.fun)))
    return best


def generalized_inverse(x: Sequence[float], F: Sequence[float], y):
    """F⁻¹(y) = inf{x : F(x) > y} по таблице (x, F(x))."""
    x = np.asarray(x, dtype=float)
    F = np.asarray(F, dtype=float)
    if x.shape != F.shape or x.ndim != 1 or x.size == 0:
        raise ValidationError("F", "таблица должна состоять из двух одномерных массивов равной длины")
    if np.any(np.diff(x) < 0) or np.any(np.diff(F) < 0):
        raise ValidationError("F", "таблица должна быть неубывающей")
    if abs(F[-1] - 1.0) > 1e-12:
        raise ValidationError("F", "функция распределения должна заканчиваться единицей")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0) or np.any(y_arr >= F[-1]):
        raise OracleError("generalized_inverse", f"y должно лежать в [0, {F[-1]})")
    idx = np.searchsorted(F, y_arr, side="right")
    result = x[idx]
    return float(result) if np.ndim(result) == 0 else result


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Смесь изотропных нормальных законов N(m_k, s_k² I) в ℝ^d, d ≤ 3."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        scales = np.asarray(self.scales, dtype=float)
        if weights.shape != scales.shape or means.shape[0] != weights.size or means.shape[1] > 3:
            raise ValidationError("mixture", "несогласованные размеры весов, средних и масштабов")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12 or np.any(scales <= 0):
            raise ValidationError("mixture", "веса должны образовывать распределение, масштабы > 0")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def cf(self, t: np.ndarray) -> np.ndarray:
        """Характеристическая функция в точках t формы (..., d)."""
        t = np.asarray(t, dtype=float)
        phase = np.tensordot(t, self.means, axes=([-1], [1]))
        damp = np.sum(t ** 2, axis=-1)[..., None] * self.scales ** 2 / 2.0
        return np.sum(self.weights * np.exp(1j * phase - damp), axis=-1)

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sq = np.sum((x[..., None, :] - self.means) ** 2, axis=-1)
        norm = (2.0 * np.pi * self.scales ** 2) ** (self.dim / 2.0)
        return np.sum(self.weights * np.exp(-sq / (2.0 * self.scales ** 2)) / norm, axis=-1)

    def tail_prob(self, T: float) -> float:
        """P(‖X‖∞ > T)."""
        upper = stats.norm.cdf((T - self.means) / self.scales[:, None])
        lower = stats.norm.cdf((-T - self.means) / self.scales[:, None])
        inside = np.prod(upper - lower, axis=1)
        return float(max(0.0, 1.0 - np.sum(self.weights * inside)))


def _tensor_grid(lo: np.ndarray, hi: np.ndarray, points: int) -> Tuple[np.ndarray, float]:
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    cell = float(np.prod([(b - a) / (points - 1) for a, b in zip(lo, hi)]))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    weights = np.ones([points] * len(axes))
    for axis in range(len(axes)):
        index = [slice(None)] * len(axes)
        index[axis] = 0
        weights[tuple(index)] *= 0.5
        index[axis] = -1
        weights[tuple(index)] *= 0.5
    return mesh, cell * weights


_DEFAULT_POINTS = {1: 4001, 2: 401, 3: 97}


def smoothing_lemma_rhs(P: GaussianMixture, Q: GaussianMixture, T: float, points: Optional[int] = None) -> float:
    """(T/π)^{d/2}·(∫|p̂ − q̂|² dt)^{1/2} + P(‖x‖∞ > T).

    Интеграл считается по кубу [−U, U]^d, U = 10/s_min; хвост вне куба оценивается
    сверху через 2Σw(√π/s)^d(1 − erf(sU)^d).
    """
    if not T > 0:
        raise ValidationError("T", "T должно быть > 0")
    if P.dim != Q.dim:
        raise ValidationError("mixture", "размерности законов различаются")
    d = P.dim
    points = points or _DEFAULT_POINTS[d]
    scales = np.concatenate([P.scales, Q.scales])
    weights = np.concatenate([P.weights, Q.weights])
    U = 10.0 / float(scales.min())

    mesh, quad = _tensor_grid(np.full(d, -U), np.full(d, U), points)
    integral = float(np.sum(quad * np.abs(P.cf(mesh) - Q.cf(mesh)) ** 2))
    outside = float(np.sum(2.0 * weights * (math.sqrt(math.pi) / scales) ** d * (1.0 - special.erf(scales * U) ** d)))

    factor = (T / math.pi) ** (d / 2.0)
    gap_term = factor * math.sqrt(integral)
    truncation = factor * (math.sqrt(integral + outside) - math.sqrt(integral))
    value = gap_term + P.tail_prob(T)
    if truncation > max(float(settings.get("quadrature_rel_tol", 0.01)) * value, 1e-15):
        raise OracleError("smoothing_lemma_rhs", f"ошибка усечения {truncation:.3e} превышает 1% значения {value:.3e}")
    return value


def total_variation(P: GaussianMixture, Q: GaussianMixture, points: Optional[int] = None) -> float:
    """½∫|p − q| квадратурой (d ≤ 2) по кубу, покрывающему средние ± 12 масштабов."""
    if P.dim != Q.dim or P.dim > 2:
        raise OracleError("total_variation", "квадратура реализована для d ≤ 2")
    means = np.vstack([P.means, Q.means])
    reach = 12.0 * float(np.max(np.concatenate([P.scales, Q.scales])))
    points = points or (20001 if P.dim == 1 else 801)
    mesh, quad = _tensor_grid(means.min(axis=0) - reach, means.max(axis=0) + reach, points)
    return 0.5 * float(np.sum(quad * np.abs(P.density(mesh) - Q.density(mesh))))
