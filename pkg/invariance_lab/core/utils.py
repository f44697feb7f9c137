import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError

# Теги потоков случайных чисел: (seed, тег, ...) задаёт независимый поток
STREAM_PATH = 1
STREAM_AUX = 2
STREAM_COUPLING = 3
STREAM_BOOTSTRAP = 4
STREAM_SMOOTHING = 5
STREAM_MOMENTS = 6
STREAM_KS = 7

_U64 = 2 ** 64


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError("seed", "зерно должно быть целым числом")
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValidationError("seed", "зерно должно лежать в [0, 2^64)")
    return seed


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Генератор Philox, однозначно заданный зерном и ключами.

    Счётчиковый генератор даёт независимые потоки для каждой реплики,
    поэтому результат не зависит от числа потоков исполнения.
    """
    entropy = [check_seed(seed), *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def chunk_bounds(total: int, size: int) -> List[Tuple[int, int, int]]:
    """Разбивает [0, total) на куски фиксированного размера: (номер, начало, длина)."""
    size = max(1, int(size))
    return [(i, start, min(size, total - start)) for i, start in enumerate(range(0, total, size))]


def parallel_map(func: Callable[[Any], Any], items: Iterable[Any], threads: int = 1) -> List[Any]:
    """Применяет func к элементам; порядок результатов совпадает с порядком входа."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def bootstrap_stderr(
    values: Sequence[float],
    statistic: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    n_boot: int = 500,
) -> float:
    """Бутстреп-оценка стандартной ошибки статистики по репликам."""
    data = np.asarray(values, dtype=float)
    if data.size < 2:
        return 0.0
    idx = rng.integers(0, data.size, size=(n_boot, data.size))
    replicas = np.array([statistic(data[row]) for row in idx])
    return float(np.std(replicas, ddof=1))


def to_jsonable(obj: Any) -> Any:
    """Приводит numpy/dataclass объекты к JSON-совместимому виду."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, (np.complexfloating, complex)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj
