import logging
import sys

from .infra.settings import settings


def setup_logging():
    """Настройка логирования."""
    log_dir = settings.get_log_dir_path()
    level = getattr(logging, str(settings.get("log_level", "INFO")).upper(), logging.INFO)

    logger = logging.getLogger("invariance_lab")
    logger.setLevel(level)
    if logger.handlers:
        return logger

    file_handler = logging.FileHandler(log_dir / "lab.log", encoding="utf-8")
    file_handler.setLevel(level)

    # stdout занят CSV/JSON выводом команд
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.WARNING)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    file_handler.setFormatter(formatter)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger


def set_level(name: str) -> None:
    """Меняет уровень логгера и файлового обработчика (флаг --log-level)."""
    level = getattr(logging, name.upper(), logging.INFO)
    logger.setLevel(level)
    for handler in logger.handlers:
        if isinstance(handler, logging.FileHandler):
            handler.setLevel(level)


logger = setup_logging()
