import json
from pathlib import Path
from typing import Any, Dict, Optional


class SettingsLoader:
    """Singleton класс для управления численными настройками лаборатории."""

    _instance: Optional['SettingsLoader'] = None
    _initialized: bool = False

    def __new__(cls) -> 'SettingsLoader':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self) -> None:
        if SettingsLoader._initialized:
            return

        self._settings = {
            "results_dir": "results",
            "log_dir": "logs",
            "log_level": "INFO",
            "stochastic_tol": 1e-12,
            "projector_tol": 1e-10,
            "power_max_iter": 10000,
            "power_tol": 1e-13,
            "m_max": 64,
            "t_points": 9,
            "epsilon0": 1.0,
            "zero_tol": 1e-14,
            "series_tol": 1e-12,
            "defect_floor": 1e-14,
            "c_delta": 1.0,
            "default_delta": 0.5,
            "smoothing_x_points": 4096,
            "smoothing_t_points": 1025,
            "smoothing_x_range": 200.0,
            "negative_density_tol": 1e-9,
            "max_prokhorov_support": 12,
            "quadrature_rel_tol": 0.01,
            "bootstrap_resamples": 500,
            "chunk_size": 64,
        }

        self._load_external_config()
        SettingsLoader._initialized = True

    def _load_external_config(self) -> None:
        config_path = Path("lab_settings.json")
        if config_path.exists():
            try:
                with open(config_path, 'r', encoding='utf-8') as f:
                    external_config = json.load(f)
                    self._settings.update(external_config)
            except (json.JSONDecodeError, OSError):
                pass

    def get(self, key: str, default: Any = None) -> Any:
        return self._settings.get(key, default)

    def get_results_dir_path(self, override: Optional[str] = None) -> Path:
        results_dir = Path(override or self._settings["results_dir"])
        results_dir.mkdir(parents=True, exist_ok=True)
        return results_dir

    def get_log_dir_path(self) -> Path:
        log_dir = Path(self._settings["log_dir"])
        log_dir.mkdir(parents=True, exist_ok=True)
        return log_dir

    @property
    def stochastic_tol(self) -> float:
        return float(self._settings.get("stochastic_tol", 1e-12))

    @property
    def epsilon0(self) -> float:
        return float(self._settings.get("epsilon0", 1.0))

    @property
    def m_max(self) -> int:
        return int(self._settings.get("m_max", 64))

    @property
    def t_points(self) -> int:
        return int(self._settings.get("t_points", 9))

    @property
    def bootstrap_resamples(self) -> int:
        return int(self._settings.get("bootstrap_resamples", 500))

    @property
    def chunk_size(self) -> int:
        return int(self._settings.get("chunk_size", 64))

    @property
    def all_settings(self) -> Dict[str, Any]:
        return self._settings.copy()


settings = SettingsLoader()
