"""Stage timing and the lazily initialised library logger."""
import functools
import threading
import time
from typing import Any, Callable, Optional, TypeVar

from pymicg.custom_logging import Logging
from pymicg.setup import Setup

F = TypeVar("F", bound=Callable[..., Any])

_logger_instance: Optional[Logging] = None
_logger_lock = threading.Lock()

LOGGED_ATTRIBUTE = "_micg_logged"


def ensure_initialized() -> Logging:
    """Initialise Setup and Logging with defaults if nobody has done so yet."""
    global _logger_instance
    if _logger_instance is not None and Logging._configured:
        return _logger_instance

    with _logger_lock:
        if _logger_instance is not None and Logging._configured:
            return _logger_instance
        if not Setup.is_setup_done():
            Setup.initialize("micg")
        _logger_instance = Logging()
        return _logger_instance


def reset_logger() -> None:
    """Forget the cached Logging instance. Used by tests between runs."""
    global _logger_instance
    with _logger_lock:
        _logger_instance = None
        Logging.reset()


class _LazyLoggingProxy:
    """Resolve the logger lazily to avoid import-time setup side effects."""

    def __getattr__(self, item: str):
        ensure_initialized()
        if hasattr(Logging, item):
            return getattr(Logging, item)
        return getattr(ensure_initialized(), item)


log = _LazyLoggingProxy()


def stage(name: Optional[str] = None) -> Callable[[F], F]:
    """
    Decorate a pipeline operation so that its start, end and failures are
    logged with durations and its timing lands in the metrics summary.
    """

    def decorator(func: F) -> F:
        stage_name = name or func.__qualname__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            ensure_initialized()
            Setup.increment_level()
            log.log_debug("called...", fn_type="stage", function=stage_name)
            start = time.perf_counter()
            try:
                with Logging.with_context(stage=stage_name):
                    result = func(*args, **kwargs)
            except Exception as e:
                if not getattr(e, LOGGED_ATTRIBUTE, False):
                    log.log_error(
                        f"Error: {e}",
                        fn_type="stage",
                        function=stage_name,
                        error_type=type(e).__name__,
                    )
                    try:
                        setattr(e, LOGGED_ATTRIBUTE, True)
                    except AttributeError:
                        pass
                raise
            else:
                duration = time.perf_counter() - start
                log.log_debug("Ok.", fn_type="stage", function=stage_name, duration=duration)
                Logging.record_metric(stage_name, duration)
                return result
            finally:
                Setup.decrement_level()

        return wrapper  # type: ignore[return-value]

    return decorator
