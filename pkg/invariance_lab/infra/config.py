import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..core.chains import ChainModel, load_model, model_from_dict
from ..core.exceptions import ConfigurationError, PartitionError
from ..core.partition import optimal_beta, smallest_feasible_k0

SCHEMA_VERSION = 1
EXECUTION_KEYS = ("out", "threads")


def _default_n_list() -> List[int]:
    return [2 ** k for k in range(12, 18)]


@dataclass
class ExperimentConfig:
    """Параметры эксперимента; JSON-схема версии 1.

    model: описание модели или путь к файлу с ним.
    """

    model: Union[str, Dict[str, Any], None] = None
    schema_version: int = SCHEMA_VERSION
    alpha: float = 0.5
    epsilon: float = 0.05
    beta: Optional[float] = None
    k0: int = 4
    N_list: List[int] = field(default_factory=_default_n_list)
    N: int = 2 ** 12
    reps: int = 200
    reps_for_cdf: int = 1000
    seed: int = 0
    threads: int = 1
    out: str = "results"
    delta: float = 0.5
    smoothing: bool = False
    block: Optional[int] = None
    mc_n: int = 100000
    c3_n_list: List[int] = field(default_factory=lambda: [64, 256, 1024])
    c3_k_list: List[int] = field(default_factory=lambda: [0, 16, 64])
    k_gaps: List[int] = field(default_factory=lambda: list(range(1, 21)))

    @property
    def resolved_beta(self) -> float:
        return optimal_beta(self.alpha) if self.beta is None else float(self.beta)

    def validate(
        self, for_rates: bool = False, require_model: bool = True, partition_field: Optional[str] = None
    ) -> "ExperimentConfig":
        """Собирает ошибки по всем полям и выбрасывает одну ConfigurationError.

        partition_field: поле с длинами ("N" или "N_list"), для которых строится разбиение.
        """
        errors: Dict[str, str] = {}
        if self.schema_version != SCHEMA_VERSION:
            errors["schema_version"] = f"поддерживается только версия {SCHEMA_VERSION}"
        if require_model and self.model is None:
            errors["model"] = "модель не задана"
        if not self.alpha > 0:
            errors["alpha"] = "α должно быть > 0"
        if not 0 < self.epsilon < 1:
            errors["epsilon"] = "ε должно лежать в (0, 1)"
        beta = self.resolved_beta if self.alpha > 0 else self.beta
        if beta is not None:
            if not 0 < beta < 1:
                errors["beta"] = "β должно лежать в (0, 1)"
            elif self.epsilon + beta >= 1:
                errors["beta"] = f"требуется ε + β < 1, получено {self.epsilon + beta:.4f}"
            elif for_rates and beta <= 0.5:
                errors["beta"] = "для экспериментов со скоростью требуется β > 1/2"
        for name in ("k0", "N", "reps", "reps_for_cdf", "threads", "mc_n"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                errors[name] = "должно быть целым числом ≥ 1"
        for name in ("N_list", "c3_n_list", "k_gaps"):
            values = getattr(self, name)
            if not values or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in values):
                errors[name] = "должен быть непустым списком целых ≥ 1"
        if any(isinstance(v, bool) or not isinstance(v, int) or v < 0 for v in self.c3_k_list):
            errors["c3_k_list"] = "должен быть списком целых ≥ 0"
        if for_rates and len(set(self.N_list)) < 4:
            errors["N_list"] = "для оценки наклона нужно не меньше 4 значений N"
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            errors["seed"] = "зерно должно быть целым в [0, 2^64)"
        if not self.delta > 0:
            errors["delta"] = "δ должно быть > 0"
        if self.block is not None and (not isinstance(self.block, int) or self.block < 1):
            errors["block"] = "номер блока должен быть ≥ 1"
        if partition_field is not None and not errors:
            self._check_partition(partition_field, errors)
        if errors:
            raise ConfigurationError("Некорректная конфигурация", errors)
        return self

    def _check_partition(self, name: str, errors: Dict[str, str]) -> None:
        sizes = [self.N] if name == "N" else sorted(set(self.N_list))
        for N in sizes:
            if N < 2 ** self.k0:
                errors[name] = f"N={N} меньше 2^k0={2 ** self.k0}"
                return
            try:
                smallest_feasible_k0(N.bit_length() - 1, self.epsilon, self.resolved_beta, self.k0)
            except PartitionError:
                errors[name] = f"для N={N} нет допустимого k0 при ε={self.epsilon}, β={self.resolved_beta}"
                return

    def load_model(self) -> ChainModel:
        if isinstance(self.model, dict):
            return model_from_dict(self.model)
        if isinstance(self.model, str):
            return load_model(self.model)
        raise ConfigurationError("Модель не задана", {"model": "ожидается описание модели или путь к файлу"})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def provenance(self) -> Dict[str, Any]:
        """Параметры, от которых зависят результаты; out и threads на них не влияют."""
        return {key: value for key, value in asdict(self).items() if key not in EXECUTION_KEYS}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError("Неизвестные ключи конфигурации", {key: "неизвестный ключ" for key in unknown})
        return cls(**data)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Файл конфигурации не найден: {path}", {"config": str(path)})
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Файл конфигурации {path} не является JSON", {"config": str(e)})
    if not isinstance(data, dict):
        raise ConfigurationError("Конфигурация должна быть JSON-объектом", {"config": str(path)})
    return ExperimentConfig.from_dict(data)
