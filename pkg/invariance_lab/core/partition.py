"""Канторовское разбиение диадических блоков [2^k, 2^{k+1}) на острова и промежутки."""

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

from ..logging_config import logger
from .exceptions import PartitionError, ValidationError

GAP = "gap"
ISLAND = "island"


@dataclass(frozen=True)
class Segment:
    """Полуинтервал [start, end) блока k; j нумерует пары J_{k,j}, I_{k,j} с единицы."""

    kind: str
    k: int
    j: int
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "j": self.j, "kind": self.kind, "start": self.start, "end": self.end,
                "length": self.length}


def _levels(k: int, epsilon: float, beta: float) -> Tuple[int, int]:
    return math.floor(epsilon * k), math.floor(beta * k)


def _check_parameters(epsilon: float, beta: float) -> None:
    if not 0 < epsilon < 1:
        raise ValidationError("epsilon", "ε должно лежать в (0, 1)")
    if not 0 < beta < 1:
        raise ValidationError("beta", "β должно лежать в (0, 1)")
    if epsilon + beta >= 1:
        raise ValidationError("beta", f"требуется ε + β < 1, получено {epsilon + beta}")


def island_length_closed_form(k: int, epsilon: float, beta: float) -> float:
    e, b = _levels(k, epsilon, beta)
    return 2.0 ** (k - b) - (1.0 + b * 2.0 ** (e - 1))


@lru_cache(maxsize=256)
def _layout(k: int, epsilon: float, beta: float) -> Tuple[Segment, ...]:
    e, b = _levels(k, epsilon, beta)
    block_start, block_end = 2 ** k, 2 ** (k + 1)
    left_gap = 2 ** (e + b)
    if left_gap >= block_end - block_start:
        raise PartitionError(f"левый промежуток 2^{e + b} не помещается в блок длины 2^{k}", k)

    intervals = [(block_start + left_gap, block_end)]
    inner_gaps: List[Tuple[int, int]] = []
    for level in range(b):
        gap = 2 ** (e + b - level - 1)
        refined = []
        for lo, hi in intervals:
            rest = hi - lo - gap
            if rest < 2:
                raise PartitionError(
                    f"интервал [{lo}, {hi}) слишком короток для промежутка длины {gap} на уровне {level}", k
                )
            left = rest // 2
            refined.append((lo, lo + left))
            inner_gaps.append((lo + left, lo + left + gap))
            refined.append((lo + left + gap, hi))
        intervals = refined

    gaps = sorted([(block_start, block_start + left_gap)] + inner_gaps)
    segments = []
    for j, ((g_lo, g_hi), (i_lo, i_hi)) in enumerate(zip(gaps, intervals), start=1):
        segments.append(Segment(GAP, k, j, g_lo, g_hi))
        segments.append(Segment(ISLAND, k, j, i_lo, i_hi))

    closed = island_length_closed_form(k, epsilon, beta)
    lengths = {s.length for s in segments if s.kind == ISLAND}
    if closed.is_integer() and lengths != {int(closed)}:
        logger.warning(
            f"Island length closed form gives {int(closed)} for k={k}, eps={epsilon}, beta={beta}; "
            f"construction gives {sorted(lengths)}"
        )
    return tuple(segments)


def build_block(k: int, epsilon: float, beta: float) -> List[Segment]:
    """Сегменты блока k: левый промежуток, затем рекурсивные средние промежутки.

    При нечётном остатке левая часть получает floor, правая ceil.
    """
    _check_parameters(epsilon, beta)
    if k < 1:
        raise ValidationError("k", "k должно быть ≥ 1")
    return list(_layout(int(k), float(epsilon), float(beta)))


def block_fits(k: int, epsilon: float, beta: float) -> bool:
    try:
        build_block(k, epsilon, beta)
    except PartitionError:
        return False
    return True


def smallest_feasible_k0(n: int, epsilon: float, beta: float, k0: int = 1) -> int:
    """Наименьшее k ≥ k0, при котором строятся все блоки k..n."""
    for start in range(max(1, k0), n + 1):
        if all(block_fits(k, epsilon, beta) for k in range(start, n + 1)):
            return start
    raise PartitionError(f"нет допустимого k0 ≤ {n} для ε={epsilon}, β={beta}", n)


@dataclass(frozen=True)
class BlockPartition:
    k0: int
    epsilon: float
    beta: float
    n: int
    N: int
    blocks: Dict[int, Tuple[Segment, ...]] = field(repr=False)
    locator: Tuple[int, int] = (0, 0)

    def segments(self) -> List[Segment]:
        return [s for k in sorted(self.blocks) for s in self.blocks[k]]

    def index_set(self) -> List[Tuple[int, int]]:
        """K_N = {(k, j) ⪯ (n, m)} в лексикографическом порядке."""
        n, m = self.locator
        return [(k, j) for k in sorted(self.blocks) for j in range(1, len(self.blocks[k]) // 2 + 1)
                if (k, j) <= (n, m)]

    def _clipped(self, kind: str) -> List[Segment]:
        out = []
        for s in self.segments():
            if s.kind != kind or (s.k, s.j) > self.locator or s.start > self.N:
                continue
            out.append(Segment(s.kind, s.k, s.j, s.start, min(s.end, self.N + 1)))
        return out

    def islands(self) -> List[Segment]:
        """Острова из K_N, лежащие не правее N; последний обрезан по N."""
        return self._clipped(ISLAND)

    def gaps(self) -> List[Segment]:
        return self._clipped(GAP)

    def segment_of(self, i: int) -> Segment:
        segments = self.segments()
        starts = [s.start for s in segments]
        pos = bisect.bisect_right(starts, i) - 1
        if pos < 0 or i >= segments[pos].end:
            raise ValidationError("i", f"индекс {i} вне [2^{self.k0}, 2^{self.n + 1})")
        return segments[pos]

    def rows(self) -> List[Dict[str, Any]]:
        return [s.to_dict() for s in self.segments()]

    def to_dict(self) -> Dict[str, Any]:
        return {"k0": self.k0, "epsilon": self.epsilon, "beta": self.beta, "n": self.n, "N": self.N,
                "locator": list(self.locator), "segments": self.rows()}


def build(N: int, epsilon: float, beta: float, k0: int = 4) -> BlockPartition:
    _check_parameters(epsilon, beta)
    if k0 < 1:
        raise ValidationError("k0", "k0 должно быть ≥ 1")
    if N < 2 ** k0:
        raise PartitionError(f"N = {N} < 2^k0 = {2 ** k0}")
    n = int(N).bit_length() - 1
    blocks = {k: tuple(build_block(k, epsilon, beta)) for k in range(k0, n + 1)}
    located = next(s for s in blocks[n] if s.start <= N < s.end)
    return BlockPartition(k0=k0, epsilon=epsilon, beta=beta, n=n, N=int(N), blocks=blocks,
                          locator=(n, located.j))


def optimal_beta(alpha: float) -> float:
    """β* = (1+α)/(1+2α)."""
    if not alpha > 0:
        raise ValidationError("alpha", "α должно быть > 0")
    return (1.0 + alpha) / (1.0 + 2.0 * alpha)


def theoretical_rate(alpha: float) -> float:
    """ρ* = α(1+α)/((3+2α)(1+2α))."""
    if not alpha > 0:
        raise ValidationError("alpha", "α должно быть > 0")
    return alpha * (1.0 + alpha) / ((3.0 + 2.0 * alpha) * (1.0 + 2.0 * alpha))


def independent_rate(alpha: float) -> float:
    """Показатель α/(3+2α) для независимых слагаемых."""
    if not alpha > 0:
        raise ValidationError("alpha", "α должно быть > 0")
    return alpha / (3.0 + 2.0 * alpha)


def gap_total(k: int, epsilon: float, beta: float) -> int:
    e, b = _levels(k, epsilon, beta)
    return (2 + b) * 2 ** (e + b) // 2
