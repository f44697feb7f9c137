import functools
import time
from typing import Any, Callable

from .logging_config import logger


def _describe_config(config: Any) -> str:
    model = getattr(config, "model", None)
    if isinstance(model, dict):
        model = model.get("kind", "inline")
    return (f"seed={getattr(config, 'seed', None)} threads={getattr(config, 'threads', None)} "
            f"model={model} out={getattr(config, 'out', None)}")


def log_action(func: Callable) -> Callable:
    """Декоратор для логирования подкоманд с параметрами запуска и длительностью."""
    @functools.wraps(func)
    def wrapper(self, config, *args, **kwargs) -> Any:
        start_time = time.time()
        command = func.__name__
        logger.info(f"Starting {command}: {_describe_config(config)}")

        try:
            result = func(self, config, *args, **kwargs)
        except Exception as e:
            duration = time.time() - start_time
            logger.error(f"Error in {command} after {duration:.3f}s: {type(e).__name__}: {str(e)}")
            raise

        duration = time.time() - start_time
        logger.info(f"Completed {command} in {duration:.3f}s (seed={getattr(config, 'seed', None)})")
        return result

    return wrapper


def require_finite_chain(func: Callable) -> Callable:
    """Декоратор: первый аргумент обязан быть конечной цепью."""
    @functools.wraps(func)
    def wrapper(chain, *args, **kwargs):
        from .core.chains import FiniteChain
        if not isinstance(chain, FiniteChain):
            from .core.exceptions import ValidationError
            raise ValidationError(
                "model",
                f"{func.__name__} требует конечную цепь, получено '{getattr(chain, 'kind', type(chain).__name__)}'"
            )
        return func(chain, *args, **kwargs)
    return wrapper


def measure_performance(func: Callable) -> Callable:
    """Декоратор для измерения производительности численных ядер."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start_time = time.time()

        try:
            result = func(*args, **kwargs)

            duration = time.time() - start_time
            logger.debug(f"Performance: {func.__name__} took {duration:.3f}s")

            return result

        except Exception as e:
            duration = time.time() - start_time
            logger.error(f"Performance error: {func.__name__} failed after {duration:.3f}s: {e}")
            raise

    return wrapper
