"""Проверка условия перемешивания C1: совместные характеристические функции
блоковых сумм как произведения операторов P^j и P_t^{|J|}."""

import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from ..decorators import measure_performance, require_finite_chain
from ..infra.settings import settings
from ..logging_config import logger
from .chains import FiniteChain
from .exceptions import DefectBelowFloorError, PropertyViolationError, ValidationError
from .operator import MixingConstants, default_t_grid, mixing_constants, perturbed, spectral_decompose
from .utils import parallel_map

DEFECT_TOL = 1e-12


@dataclass(frozen=True)
class IntervalPattern:
    """Границы j_0 < … < j_{M1+M2}; вторая группа интервалов сдвинута на k_gap шагов."""

    j_bounds: tuple
    M1: int
    M2: int
    k_gap: int = 0

    def __post_init__(self) -> None:
        bounds = tuple(int(j) for j in self.j_bounds)
        if self.M1 < 1 or self.M2 < 1:
            raise ValidationError("pattern", "M1 и M2 должны быть ≥ 1")
        if len(bounds) != self.M1 + self.M2 + 1:
            raise ValidationError("pattern", f"нужно {self.M1 + self.M2 + 1} границ, получено {len(bounds)}")
        if bounds[0] < 0 or any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise ValidationError("pattern", "границы должны строго возрастать от j_0 ≥ 0")
        if self.k_gap < 0:
            raise ValidationError("k_gap", "k_gap должно быть ≥ 0")
        object.__setattr__(self, "j_bounds", bounds)

    @property
    def cards(self) -> List[int]:
        return [b - a for a, b in zip(self.j_bounds, self.j_bounds[1:])]

    @property
    def max_card(self) -> int:
        return max(self.cards)

    def to_dict(self) -> Dict[str, Any]:
        return {"j_bounds": list(self.j_bounds), "M1": self.M1, "M2": self.M2, "k_gap": self.k_gap}


class DefectBound(NamedTuple):
    defect: float
    bound: float


class DecayFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    k_gaps: List[int]
    defects: List[float]


def gap_family(pattern: IntervalPattern, k_gaps: Sequence[int]) -> List[IntervalPattern]:
    return [replace(pattern, k_gap=int(k)) for k in k_gaps]


def _start_row(chain: FiniteChain, x0: Optional[int]) -> np.ndarray:
    x = chain.x0 if x0 is None else int(x0)
    if not 0 <= x < chain.n_states:
        raise ValidationError("x0", f"состояние {x} вне диапазона")
    row = np.zeros(chain.n_states, dtype=complex)
    row[x] = 1.0
    return row


@require_finite_chain
def cf_joint(
    chain: FiniteChain,
    x0: Optional[int],
    pattern: IntervalPattern,
    t1: Sequence[float],
    t2: Sequence[float],
    epsilon0: Optional[float] = None,
) -> complex:
    """φ(t1, t2) = (δ_x P^{j0} P_{t1}^{|J1|} … P^{k_gap} P_{t2}^{|J_{M1+1}|} … e)."""
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    if t1.shape != (pattern.M1,) or t2.shape != (pattern.M2,):
        raise ValidationError("t", f"ожидаются векторы длины {pattern.M1} и {pattern.M2}")
    epsilon0 = float(epsilon0 if epsilon0 is not None else settings.epsilon0)
    if max(np.max(np.abs(t1)), np.max(np.abs(t2))) > epsilon0 + 1e-15:
        raise ValidationError("t", f"‖(t1, t2)‖∞ должна быть ≤ ε₀ = {epsilon0}")

    row = _start_row(chain, x0) @ np.linalg.matrix_power(chain.P, pattern.j_bounds[0])
    cards = pattern.cards
    for t, card in zip(t1, cards[:pattern.M1]):
        row = row @ np.linalg.matrix_power(perturbed(chain, float(t)), card)
    row = row @ np.linalg.matrix_power(chain.P, pattern.k_gap)
    for t, card in zip(t2, cards[pattern.M1:]):
        row = row @ np.linalg.matrix_power(perturbed(chain, float(t)), card)
    return complex(row.sum())


def _propagate(rows: np.ndarray, chain: FiniteChain, grid: np.ndarray, cards: Sequence[int]) -> np.ndarray:
    """rows: (B, n) → (B·G^len(cards), n), индекс сетки последней координаты меняется быстрее всего."""
    n = chain.n_states
    for card in cards:
        stack = np.stack([np.linalg.matrix_power(perturbed(chain, float(t)), card) for t in grid])
        rows = np.einsum("bi,gij->bgj", rows, stack).reshape(-1, n)
    return rows


def grid_defect(chain: FiniteChain, x0: Optional[int], pattern: IntervalPattern, t_grid: Sequence[float]) -> float:
    """max по сетке |φ(t1, t2) − φ₁(t1)·φ₂(t2)|."""
    grid = np.asarray(t_grid, dtype=float)
    cards = pattern.cards
    start = _start_row(chain, x0)[None, :] @ np.linalg.matrix_power(chain.P, pattern.j_bounds[0])

    first = _propagate(start, chain, grid, cards[:pattern.M1])
    phi1 = first.sum(axis=1)
    joint_rows = _propagate(first @ np.linalg.matrix_power(chain.P, pattern.k_gap), chain, grid,
                            cards[pattern.M1:])
    phi = joint_rows.sum(axis=1).reshape(phi1.size, -1)

    second_start = _start_row(chain, x0)[None, :] @ np.linalg.matrix_power(
        chain.P, pattern.j_bounds[pattern.M1] + pattern.k_gap
    )
    phi2 = _propagate(second_start, chain, grid, cards[pattern.M1:]).sum(axis=1)
    return float(np.max(np.abs(phi - np.outer(phi1, phi2))))


def c1_bound(constants: MixingConstants, pattern: IntervalPattern) -> float:
    """λ₀·exp(−λ₁·k_gap)·(1 + max|J_m|)^{λ₂(M1+M2)}."""
    decay = 1.0 if pattern.k_gap == 0 else math.exp(-constants.lambda1 * pattern.k_gap)
    growth = (1.0 + pattern.max_card) ** (constants.lambda2 * (pattern.M1 + pattern.M2))
    return constants.lambda0_x * decay * growth


@require_finite_chain
def c1_defect(
    chain: FiniteChain,
    x0: Optional[int],
    pattern: IntervalPattern,
    t_grid: Optional[Sequence[float]] = None,
    constants: Optional[MixingConstants] = None,
) -> DefectBound:
    if constants is None:
        start = chain if x0 is None else chain.with_start(x0)
        constants = mixing_constants(spectral_decompose(start))
    grid = default_t_grid(constants.epsilon0) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(np.abs(grid) > constants.epsilon0 + 1e-15):
        raise ValidationError("t_grid", f"сетка должна лежать в [-{constants.epsilon0}, {constants.epsilon0}]")

    defect = grid_defect(chain, x0, pattern, grid)
    bound = c1_bound(constants, pattern)
    if defect > bound + DEFECT_TOL:
        raise PropertyViolationError("c1_bound", f"defect={defect:.3e} > bound={bound:.3e} для {pattern.to_dict()}")
    return DefectBound(defect, bound)


@measure_performance
def c1_sweep(
    chain: FiniteChain,
    patterns: Sequence[IntervalPattern],
    t_grid: Optional[Sequence[float]] = None,
    threads: int = 1,
) -> List[Dict[str, Any]]:
    """Проверяет C1 на наборе шаблонов; все нарушения собираются в одну ошибку."""
    constants = mixing_constants(spectral_decompose(chain))
    grid = default_t_grid(constants.epsilon0) if t_grid is None else np.asarray(t_grid, dtype=float)

    def evaluate(pattern: IntervalPattern) -> Dict[str, Any]:
        defect = grid_defect(chain, None, pattern, grid)
        bound = c1_bound(constants, pattern)
        return {"k_gap": pattern.k_gap, "M1": pattern.M1, "M2": pattern.M2, "max_card": pattern.max_card,
                "defect": defect, "bound": bound, "holds": defect <= bound + DEFECT_TOL}

    rows = parallel_map(evaluate, patterns, threads)
    violations = [r for r in rows if not r["holds"]]
    if violations:
        raise PropertyViolationError("c1_bound", f"{len(violations)} нарушений из {len(rows)}: {violations[:3]}")
    logger.info(f"C1 sweep: {len(rows)} patterns, zero violations")
    return rows


def standard_patterns(max_total: int = 4, max_card: int = 4, k_gaps: Sequence[int] = range(1, 21)) -> List[IntervalPattern]:
    """Шаблоны с M1+M2 ≤ max_total, интервалами одинаковой длины ≤ max_card и j_0 = 0."""
    patterns = []
    for total in range(2, max_total + 1):
        for M1 in range(1, total):
            for card in range(1, max_card + 1):
                bounds = tuple(card * i for i in range(total + 1))
                base = IntervalPattern(bounds, M1, total - M1)
                patterns.extend(gap_family(base, k_gaps))
    return patterns


@require_finite_chain
def decay_fit(
    chain: FiniteChain,
    x0: Optional[int],
    patterns: Sequence[IntervalPattern],
    t_grid: Optional[Sequence[float]] = None,
) -> DecayFit:
    """Наклон ln(defect) по k_gap; ожидается ≈ ln κ."""
    floor = float(settings.get("defect_floor", 1e-14))
    grid = default_t_grid(settings.epsilon0) if t_grid is None else np.asarray(t_grid, dtype=float)
    k_gaps, defects = [], []
    for pattern in patterns:
        if pattern.k_gap < 1:
            continue
        defect = grid_defect(chain, x0, pattern, grid)
        if defect > floor:
            k_gaps.append(pattern.k_gap)
            defects.append(defect)
    if len(k_gaps) < 5:
        raise DefectBelowFloorError(len(k_gaps))
    fit = stats.linregress(k_gaps, np.log(defects))
    return DecayFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), k_gaps, defects)
