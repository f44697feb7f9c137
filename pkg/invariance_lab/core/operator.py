"""Возмущённые операторы переходов P_t, разложение P = Π + Q и константы перемешивания."""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..decorators import measure_performance, require_finite_chain
from ..infra.settings import settings
from ..logging_config import logger
from .chains import FiniteChain
from .exceptions import ChainStructureError, SpectralError, ValidationError


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Спектральные данные конечной цепи в пространстве (ℂ^n, sup-норма)."""

    nu: np.ndarray
    Pi: np.ndarray
    Q: np.ndarray
    kappa: float
    C_Q: float
    C_P: float
    norm_e: float = 1.0
    norm_nu: float = 1.0
    norm_delta_x: float = 1.0
    m_max: int = 64
    m_certified: int = 64
    t_grid: tuple = ()
    epsilon0: float = 1.0
    primitive_power: int = 1

    @property
    def kappa_is_zero(self) -> bool:
        return self.kappa == 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nu": self.nu.tolist(),
            "Pi": self.Pi.tolist(),
            "Q": self.Q.tolist(),
            "kappa": self.kappa,
            "C_Q": self.C_Q,
            "C_P": self.C_P,
            "norm_e": self.norm_e,
            "norm_nu": self.norm_nu,
            "norm_delta_x": self.norm_delta_x,
            "m_max": self.m_max,
            "m_certified": self.m_certified,
            "t_grid": list(self.t_grid),
            "epsilon0": self.epsilon0,
            "primitive_power": self.primitive_power,
        }


@dataclass(frozen=True)
class MixingConstants:
    lambda0_x: float
    lambda1: float
    lambda2: float
    epsilon0: float
    lambda1_infinite: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda0_x": self.lambda0_x,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "epsilon0": self.epsilon0,
            "lambda1_infinite": self.lambda1_infinite,
        }


def check_primitive(P: np.ndarray) -> int:
    """Наименьшее m ≤ n² с P^m > 0 поэлементно; иначе ChainStructureError."""
    n = P.shape[0]
    adjacency = (P > 0).astype(np.int64)

    reach = np.eye(n, dtype=np.int64) | adjacency
    for _ in range(n):
        reach = ((reach @ adjacency) > 0).astype(np.int64) | reach
    if not reach.all():
        raise ChainStructureError("reducible", "не все состояния достижимы друг из друга")

    power = adjacency.copy()
    for m in range(1, n * n + 1):
        if power.all():
            return m
        power = ((power @ adjacency) > 0).astype(np.int64)
    raise ChainStructureError("periodic", f"ни одна степень P^m, m ≤ {n * n}, не положительна")


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Решение νP = ν, Σν = 1 (последнее уравнение заменено нормировкой)."""
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        nu = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise SpectralError(f"система для ν вырождена: {e}")
    nu = np.where(np.abs(nu) < 1e-15, 0.0, nu)
    if np.any(nu < 0):
        raise SpectralError(f"стационарный вектор имеет отрицательные компоненты: {nu.tolist()}")
    return nu / nu.sum()


def spectral_radius(Q: np.ndarray, max_iter: Optional[int] = None, tol: Optional[float] = None) -> float:
    """Модуль наибольшего собственного числа Q степенным методом.

    Оценка по двум шагам sqrt(‖Q²x‖/‖x‖) устойчива к паре ±κ. Если итерации
    не сошлись (например, комплексная пара), берётся максимум |eigvals|.
    """
    max_iter = max_iter or int(settings.get("power_max_iter", 10000))
    tol = tol or float(settings.get("power_tol", 1e-13))
    if np.max(np.abs(Q)) <= float(settings.get("zero_tol", 1e-14)):
        return 0.0

    rng = np.random.default_rng(0)
    n = Q.shape[0]
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    x /= np.linalg.norm(x)

    previous_growth = None
    previous_estimate = None
    for _ in range(max_iter):
        y = Q @ x
        growth = np.linalg.norm(y)
        if growth < 1e-300:
            return 0.0
        x = y / growth
        if previous_growth is not None:
            estimate = math.sqrt(growth * previous_growth)
            if previous_estimate is not None and abs(estimate - previous_estimate) <= tol * max(1.0, estimate):
                return float(estimate)
            previous_estimate = estimate
        previous_growth = growth

    logger.warning("Power iteration did not converge, falling back to dense eigenvalues")
    return float(np.max(np.abs(np.linalg.eigvals(Q))))


def default_t_grid(epsilon0: float, points: Optional[int] = None) -> np.ndarray:
    return np.linspace(-epsilon0, epsilon0, points or settings.t_points)


def perturbed(chain: FiniteChain, t: float) -> np.ndarray:
    """P_t(x, y) = P(x, y)·exp(i·t·f(y))."""
    if t == 0:
        return chain.P.astype(complex)
    return chain.P * np.exp(1j * t * chain.f)[None, :]


@measure_performance
@require_finite_chain
def spectral_decompose(
    chain: FiniteChain,
    m_max: Optional[int] = None,
    t_grid: Optional[Sequence[float]] = None,
    epsilon0: Optional[float] = None,
) -> SpectralData:
    m_max = int(m_max or settings.m_max)
    epsilon0 = float(epsilon0 if epsilon0 is not None else settings.epsilon0)
    if not 0 < epsilon0 <= 1:
        raise ValidationError("epsilon0", "ε₀ должно лежать в (0, 1]")
    grid = default_t_grid(epsilon0) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(np.abs(grid) > epsilon0 + 1e-15):
        raise ValidationError("t_grid", f"точки сетки должны лежать в [-{epsilon0}, {epsilon0}]")

    P = chain.P
    n = chain.n_states
    primitive_power = check_primitive(P)

    nu = stationary_distribution(P)
    Pi = np.outer(np.ones(n), nu)
    Q = P - Pi

    tol = float(settings.get("projector_tol", 1e-10))
    if np.max(np.abs(Pi @ Q)) > tol or np.max(np.abs(Q @ Pi)) > tol:
        raise SpectralError("ΠQ и QΠ должны быть нулевыми")
    if np.max(np.abs(Pi @ Pi - Pi)) > tol:
        raise SpectralError("Π не является проектором")

    kappa = spectral_radius(Q)
    if kappa >= 1:
        raise SpectralError(f"κ = {kappa} ≥ 1")

    C_Q = 1.0
    m_certified = m_max
    Qm = np.eye(n)
    for m in range(1, m_max + 1):
        Qm = Qm @ Q
        norm = np.linalg.norm(Qm, np.inf)
        if kappa == 0.0:
            C_Q = max(C_Q, norm)
            continue
        scale = kappa ** m
        if scale == 0.0 or norm == 0.0:
            m_certified = m - 1
            break
        C_Q = max(C_Q, norm / scale)

    C_P = 1.0
    for t in grid:
        Pt = perturbed(chain, float(t))
        power = np.eye(n, dtype=complex)
        for _ in range(m_max):
            power = power @ Pt
            C_P = max(C_P, float(np.linalg.norm(power, np.inf)))

    logger.debug(f"Spectral decomposition: kappa={kappa:.6g}, C_Q={C_Q:.6g}, C_P={C_P:.6g}")
    return SpectralData(
        nu=nu,
        Pi=Pi,
        Q=Q,
        kappa=kappa,
        C_Q=C_Q,
        C_P=C_P,
        m_max=m_max,
        m_certified=m_certified,
        t_grid=tuple(float(t) for t in grid),
        epsilon0=epsilon0,
        primitive_power=primitive_power,
    )


def mixing_constants(spectral: SpectralData) -> MixingConstants:
    """λ₀(x) = 2·C_Q·(‖ν‖ + ‖δ_x‖)·‖e‖, λ₁ = |ln κ|, λ₂ = max{1, log₂ C_P}."""
    if spectral.kappa >= 1 or spectral.kappa < 0:
        raise SpectralError(f"κ должно лежать в [0, 1), получено {spectral.kappa}")
    lambda0 = 2.0 * spectral.C_Q * (spectral.norm_nu + spectral.norm_delta_x) * spectral.norm_e
    lambda2 = max(1.0, math.log2(spectral.C_P))
    if spectral.kappa_is_zero:
        return MixingConstants(lambda0, math.inf, lambda2, spectral.epsilon0, lambda1_infinite=True)
    return MixingConstants(lambda0, abs(math.log(spectral.kappa)), lambda2, spectral.epsilon0)


@require_finite_chain
def mu_delta(chain: FiniteChain, delta: float, m_max: Optional[int] = None) -> float:
    """sup_k (E_x |f(X_k)|^{2+2δ})^{1/(2+2δ)} по k = 1..m_max и стационарному пределу."""
    if delta <= 0:
        raise ValidationError("delta", "δ должно быть > 0")
    p = 2.0 + 2.0 * delta
    m_max = int(m_max or settings.m_max)
    g = np.abs(chain.f) ** p
    row = np.zeros(chain.n_states)
    row[chain.x0] = 1.0
    best = 0.0
    for _ in range(m_max):
        row = row @ chain.P
        best = max(best, float(row @ g))
    best = max(best, float(stationary_distribution(chain.P) @ g))
    return best ** (1.0 / p)
