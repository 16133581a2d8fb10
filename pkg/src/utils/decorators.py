# src/utils/decorators.py
import functools
import time
from typing import Any, Callable

from src.utils.logger import Log


def measure_time(func: Callable) -> Callable:
    """Wall-clock time of each call, reported under the function's qualified name."""
    name = func.__qualname__

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start_time = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            Log.performance(f"'{name}' took {time.perf_counter() - start_time:.4f} seconds")
    return wrapper


def log_lifecycle(func: Callable) -> Callable:
    """Trace entry and exit of a stage; a stage that raises is traced as failed."""
    name = func.__qualname__

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        Log.trace(f"Starting: {name}")
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            Log.trace(f"Failed: {name} ({type(e).__name__})")
            raise
        Log.trace(f"Finished: {name}")
        return result
    return wrapper
