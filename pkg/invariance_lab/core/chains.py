"""Модели процессов: конечная цепь Маркова, AR(1) с бернуллиевским шумом и
стохастическая рекурсия, а также их симуляция и загрузка из JSON."""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, ClassVar, Dict, Tuple, Union

import numpy as np

from ..infra.settings import settings
from .exceptions import ConfigurationError, ModelError, ValidationError
from .utils import STREAM_PATH, stream


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Конечная цепь: матрица переходов P, наблюдаемая f и начальное состояние x0."""

    P: np.ndarray
    f: np.ndarray
    x0: int = 0
    kind: ClassVar[str] = "finite"

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ModelError(self.kind, f"P должна быть квадратной матрицей, получено {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ModelError(self.kind, "элементы P должны лежать в [0, 1]")
        row_sums = P.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > settings.stochastic_tol:
            raise ModelError(self.kind, f"строки P должны суммироваться в 1, получено {row_sums.tolist()}")
        if f.shape != (P.shape[0],):
            raise ModelError(self.kind, f"длина f должна быть {P.shape[0]}")
        if not np.all(np.isfinite(f)):
            raise ModelError(self.kind, "значения f должны быть конечными")
        x0 = int(self.x0)
        if not 0 <= x0 < P.shape[0]:
            raise ModelError(self.kind, f"x0={x0} вне диапазона [0, {P.shape[0]})")
        object.__setattr__(self, "P", _frozen_array(P))
        object.__setattr__(self, "f", _frozen_array(f))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "_cum", _frozen_array(np.cumsum(P, axis=1)))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    def with_start(self, x0: int) -> 'FiniteChain':
        return FiniteChain(self.P, self.f, x0)

    def _initial_state(self, n_paths: int) -> np.ndarray:
        return np.full(n_paths, self.x0, dtype=np.int64)

    def _advance(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(state.shape[0])
        nxt = (u[:, None] >= self._cum[state]).sum(axis=1)
        return np.minimum(nxt, self.n_states - 1)

    def _observe(self, state: np.ndarray) -> np.ndarray:
        return self.f[state]

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "P": self.P.tolist(), "f": self.f.tolist(), "x0": self.x0}


@dataclass(frozen=True, eq=False)
class ArBernoulli:
    """Авторегрессия x_{n+1} = alpha·x_n + b_n с шумом ±1; наблюдаемая f(x) = x."""

    alpha: float
    x0: float = 0.0
    kind: ClassVar[str] = "ar"

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not abs(alpha) < 1:
            raise ModelError(self.kind, f"|alpha| должен быть < 1, получено {alpha}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "x0", float(self.x0))

    @property
    def bound(self) -> float:
        return abs(self.x0) + 1.0 / (1.0 - abs(self.alpha))

    def stationary_mean_variance(self) -> Tuple[float, float]:
        return 0.0, 1.0 / (1.0 - self.alpha ** 2)

    def _initial_state(self, n_paths: int) -> np.ndarray:
        return np.full(n_paths, self.x0)

    def _advance(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = 2.0 * rng.integers(0, 2, size=state.shape[0]) - 1.0
        return self.alpha * state + noise

    def _observe(self, state: np.ndarray) -> np.ndarray:
        return state

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alpha": self.alpha, "x0": self.x0}


@dataclass(frozen=True)
class Atom:
    a: float
    b: float
    weight: float


@dataclass(frozen=True)
class RecursionHypotheses:
    """Флаги условий устойчивости рекурсии и использованный показатель p."""

    h1: bool
    h1_p: float
    h2: bool
    h3: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"h1": self.h1, "h1_p": self.h1_p, "h2": self.h2, "h3": self.h3}


def check_recursion_hypotheses(atoms: Tuple[Atom, ...], p_max: float = 64.0) -> RecursionHypotheses:
    """Проверка H1-H3 перебором конечного носителя."""
    a = np.array([atom.a for atom in atoms])
    w = np.array([atom.weight for atom in atoms])

    # Σ w·a^p выпукла по p и равна 1 при p = 0: годные p образуют интервал
    grid = np.arange(2.25, p_max + 1e-9, 0.25)
    moments = np.array([np.sum(w * a ** p) for p in grid])
    passing = grid[moments < 1.0]
    h1_p = float(passing.max()) if passing.size else float("nan")

    # H2: ни одна точка не неподвижна для атомов полной массы
    fixed_mass: Dict[float, float] = {}
    identity_mass = 0.0
    for atom in atoms:
        if atom.weight == 0:
            continue
        if atom.a == 1.0:
            if atom.b == 0.0:
                identity_mass += atom.weight
            continue
        point = round(atom.b / (1.0 - atom.a), 12)
        fixed_mass[point] = fixed_mass.get(point, 0.0) + atom.weight
    worst = max(fixed_mass.values(), default=0.0) + identity_mass
    h2 = worst < 1.0 - 1e-12

    # H3: логарифмы a порождают плотную подгруппу, т.е. есть иррациональное отношение
    logs = sorted({math.log(atom.a) for atom in atoms if atom.weight > 0 and atom.a != 1.0})
    h3 = False
    for i in range(len(logs)):
        for j in range(i + 1, len(logs)):
            ratio = logs[i] / logs[j]
            approx = Fraction(ratio).limit_denominator(1000)
            if abs(ratio - float(approx)) > 1e-9:
                h3 = True
    return RecursionHypotheses(h1=bool(passing.size), h1_p=h1_p, h2=bool(h2), h3=h3)


@dataclass(frozen=True, eq=False)
class StochasticRecursion:
    """Рекурсия x_{n+1} = a·x_n + b с конечным набором атомов (a, b, вес); f(x) = x."""

    atoms: Tuple[Atom, ...]
    x0: float = 0.0
    kind: ClassVar[str] = "recursion"
    hypotheses: RecursionHypotheses = field(init=False)

    def __post_init__(self) -> None:
        atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        if not atoms:
            raise ModelError(self.kind, "список атомов пуст")
        for atom in atoms:
            if not atom.a > 0:
                raise ModelError(self.kind, f"коэффициент a должен быть > 0, получено {atom.a}")
            if atom.weight < 0:
                raise ModelError(self.kind, "веса должны быть неотрицательны")
        total = sum(atom.weight for atom in atoms)
        if abs(total - 1.0) > settings.stochastic_tol:
            raise ModelError(self.kind, f"веса должны суммироваться в 1, получено {total}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "_a", _frozen_array([atom.a for atom in atoms]))
        object.__setattr__(self, "_b", _frozen_array([atom.b for atom in atoms]))
        object.__setattr__(self, "_w", _frozen_array([atom.weight for atom in atoms]))
        object.__setattr__(self, "hypotheses", check_recursion_hypotheses(atoms))

    def moment(self, which: str, power: int) -> float:
        values = self._a if which == "a" else self._b
        return float(np.sum(self._w * values ** power))

    def stationary_mean_variance(self) -> Tuple[float, float]:
        ea, ea2 = self.moment("a", 1), self.moment("a", 2)
        eb, eb2 = self.moment("b", 1), self.moment("b", 2)
        eab = float(np.sum(self._w * self._a * self._b))
        if ea2 >= 1:
            raise ModelError(self.kind, "E a² ≥ 1: стационарный закон не имеет второго момента")
        mean = eb / (1.0 - ea)
        second = (eb2 + 2.0 * eab * mean) / (1.0 - ea2)
        return mean, second - mean ** 2

    def _initial_state(self, n_paths: int) -> np.ndarray:
        return np.full(n_paths, self.x0)

    def _advance(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self._w.size, size=state.shape[0], p=self._w)
        return self._a[idx] * state + self._b[idx]

    def _observe(self, state: np.ndarray) -> np.ndarray:
        return state

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "atoms": [{"a": atom.a, "b": atom.b, "weight": atom.weight} for atom in self.atoms],
            "x0": self.x0,
        }


ChainModel = Union[FiniteChain, ArBernoulli, StochasticRecursion]


@dataclass(frozen=True, eq=False)
class Trajectory:
    values: np.ndarray
    descriptor: Dict[str, Any]
    seed: int
    rep: int = 0

    @property
    def N(self) -> int:
        return int(self.values.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {"model": self.descriptor, "seed": self.seed, "rep": self.rep, "values": self.values.tolist()}


def simulate(model: ChainModel, n_steps: int, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Пакетная симуляция: массив (n_paths, n_steps) значений f(X_1..X_n)."""
    if n_steps < 1 or n_paths < 1:
        raise ValidationError("N", "число шагов и траекторий должно быть ≥ 1")
    out = np.empty((n_paths, n_steps))
    state = model._initial_state(n_paths)
    for i in range(n_steps):
        state = model._advance(state, rng)
        out[:, i] = model._observe(state)
    return out


def simulate_sums(
    model: ChainModel, n_steps: int, n_paths: int, rng: np.random.Generator, shift: float = 0.0
) -> np.ndarray:
    """Суммы Σ_{i≤n}(f(X_i) − shift) без хранения траекторий."""
    totals = np.zeros(n_paths)
    state = model._initial_state(n_paths)
    for _ in range(n_steps):
        state = model._advance(state, rng)
        totals += model._observe(state) - shift
    return totals


def sample_path(model: ChainModel, N: int, seed: int, rep: int = 0) -> Trajectory:
    if N < 1:
        raise ValidationError("N", f"N должно быть ≥ 1, получено {N}")
    values = simulate(model, N, 1, stream(seed, STREAM_PATH, rep))[0]
    values.setflags(write=False)
    return Trajectory(values=values, descriptor=model.to_dict(), seed=int(seed), rep=rep)


def exact_marginal(chain: FiniteChain, k: int) -> np.ndarray:
    """Закон X_k при старте из x0: строка δ_x0·P^k."""
    if k < 0:
        raise ValidationError("k", "k должно быть ≥ 0")
    start = np.zeros(chain.n_states)
    start[chain.x0] = 1.0
    return start @ np.linalg.matrix_power(chain.P, k)


def block_sum(traj: Trajectory, start: int, end: int) -> float:
    """Сумма значений траектории по индексам [start, end] (нумерация с 1)."""
    if not 1 <= start <= end <= traj.N:
        raise ValidationError("indices", f"требуется 1 ≤ start ≤ end ≤ {traj.N}, получено [{start}, {end}]")
    return float(np.sum(traj.values[start - 1:end]))


def model_from_dict(data: Dict[str, Any]) -> ChainModel:
    kind = data.get("kind")
    try:
        if kind == "finite":
            return FiniteChain(P=data["P"], f=data["f"], x0=data.get("x0", 0))
        if kind == "ar":
            return ArBernoulli(alpha=data["alpha"], x0=data.get("x0", 0.0))
        if kind == "recursion":
            atoms = tuple(Atom(float(a["a"]), float(a["b"]), float(a["weight"])) for a in data["atoms"])
            return StochasticRecursion(atoms=atoms, x0=data.get("x0", 0.0))
    except KeyError as e:
        raise ConfigurationError("Неполное описание модели", {f"model.{e.args[0]}": "обязательное поле"})
    except (TypeError, ValueError) as e:
        raise ConfigurationError("Некорректное описание модели", {"model": str(e)})
    raise ConfigurationError("Неизвестный тип модели", {"model.kind": f"ожидается finite|ar|recursion, получено {kind!r}"})


def load_model(path: Union[str, Path]) -> ChainModel:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Файл модели не найден: {path}", {"model": str(path)})
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Файл модели {path} не является JSON", {"model": str(e)})
    return model_from_dict(data)
