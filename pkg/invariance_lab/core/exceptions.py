from typing import Dict, Optional


class LabError(Exception):
    """Базовое исключение для всех ошибок лаборатории"""
    exit_code = 1


class ValidationError(LabError):
    """Исключение при нарушении предусловия или неверном аргументе"""
    exit_code = 2

    def __init__(self, field: str, message: str):
        super().__init__(f"Ошибка валидации поля '{field}': {message}")
        self.field = field
        self.detail = message


class ModelError(LabError):
    """Исключение при некорректном описании модели"""
    exit_code = 2

    def __init__(self, kind: str, message: str):
        super().__init__(f"Некорректная модель '{kind}': {message}")
        self.kind = kind
        self.detail = message


class ChainStructureError(LabError):
    """Исключение для приводимой или периодической цепи"""

    def __init__(self, check: str, detail: str = ""):
        message = f"Цепь не прошла проверку '{check}' (periodic/reducible)"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.check = check


class SpectralError(LabError):
    """Исключение при нарушении спектрального разложения P = Π + Q"""

    def __init__(self, message: str):
        super().__init__(f"Ошибка спектрального разложения: {message}")


class PartitionError(LabError):
    """Исключение при невозможности построить блок разбиения"""

    def __init__(self, message: str, k: Optional[int] = None):
        prefix = f"Блок k={k}: " if k is not None else ""
        super().__init__(f"Ошибка разбиения: {prefix}{message}")
        self.k = k


class OracleError(LabError):
    """Исключение при неприменимости точного оракула или квадратуры"""

    def __init__(self, oracle: str, message: str):
        super().__init__(f"Оракул '{oracle}': {message}")
        self.oracle = oracle


class DefectBelowFloorError(LabError):
    """Исключение, когда дефекты факторизации ниже численного порога"""

    def __init__(self, usable: int, required: int = 5):
        super().__init__(
            f"defect below measurable range: пригодных точек {usable}, требуется {required}"
        )
        self.usable = usable
        self.required = required


class PropertyViolationError(LabError):
    """Исключение при нарушении проверяемого свойства"""

    def __init__(self, name: str, detail: str):
        super().__init__(f"Нарушено свойство '{name}': {detail}")
        self.name = name
        self.detail = detail


class ConfigurationError(LabError):
    """Исключение при ошибке конфигурации эксперимента"""
    exit_code = 2

    def __init__(self, message: str = "Ошибка конфигурации", errors: Optional[Dict[str, str]] = None):
        self.errors = dict(errors or {})
        if self.errors:
            details = "; ".join(f"{field}: {text}" for field, text in self.errors.items())
            message = f"{message} ({details})"
        super().__init__(message)
