import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from pymicg import exceptions
from pymicg.config import config


@dataclass
class _RunState:
    run: Optional[str] = None
    done: bool = False
    show_metrics: bool = False
    disable_file_logging: Optional[bool] = None
    testing: bool = False
    captured: Optional[List[Dict[str, Any]]] = None
    atexit_registered: bool = field(default=False, repr=False)


class Setup:
    """
    Process-wide run state for pymicg (thread-safe).

    A run has an upper-cased name shown in every log line, a stage nesting
    depth tracked per thread, an optional timing summary printed at exit and,
    under tests, an in-memory capture of log entries in place of output.
    """
    _state = _RunState()
    _depth = threading.local()
    _lock = threading.Lock()

    # Run lifecycle
    @classmethod
    def initialize(
        cls,
        project: str = "micg",
        show_metrics: bool = False,
        disable_file_logging: Optional[bool] = None,
        *,
        log_format: Optional[str] = None,
        console_format: Optional[str] = None,
        file_format: Optional[str] = None,
        log_level: Optional[str] = None,
        log_file: Optional[str] = None,
        log_dir: Optional[str] = None,
        seed: Optional[int] = None,
    ) -> None:
        """Start the run. Keyword overrides are written to ``config`` before the logger exists."""
        overrides = {
            "format": log_format,
            "console_format": console_format,
            "file_format": file_format,
            "log_level": log_level,
            "log_file": log_file,
            "log_dir": log_dir,
            "seed": seed,
        }
        with cls._lock:
            if cls._state.done:
                raise exceptions.SetupAlreadyDoneError(f"Run {cls._state.run!r} is already initialized.")
            for name, value in overrides.items():
                if value is not None:
                    setattr(config, name, value)
            cls._state.run = project.upper()
            cls._state.done = True
            cls._state.show_metrics = show_metrics
            cls._state.disable_file_logging = disable_file_logging
            cls._depth.value = 0
            if show_metrics:
                cls._register_timing_summary()

    @classmethod
    def reset(cls) -> None:
        """Forget the current run; testing mode and the exit hook survive."""
        with cls._lock:
            cls._state.run = None
            cls._state.done = False
            cls._state.show_metrics = False
            cls._state.disable_file_logging = None
            cls._depth.value = 0

    @classmethod
    def is_setup_done(cls) -> bool:
        with cls._lock:
            return cls._state.done

    @classmethod
    def get_project(cls) -> Optional[str]:
        with cls._lock:
            return cls._state.run

    @classmethod
    def set_project(cls, project: str) -> None:
        with cls._lock:
            if not cls._state.done:
                raise exceptions.SetupNotDoneError("Initialize the run before renaming it.")
            cls._state.run = project.upper()

    @classmethod
    def resolve_seed(cls, seed: Optional[int] = None) -> int:
        """Explicit seed, else ``MICG_SEED``, else 0."""
        if seed is not None:
            return int(seed)
        return config.seed if config.seed is not None else 0

    # Stage nesting
    @classmethod
    def increment_level(cls) -> None:
        cls._depth.value = cls.get_level() + 1

    @classmethod
    def decrement_level(cls) -> None:
        cls._depth.value = cls.get_level() - 1

    @classmethod
    def get_level(cls) -> int:
        return getattr(cls._depth, "value", 0)

    # Output switches
    @classmethod
    def get_show_metrics(cls) -> bool:
        with cls._lock:
            return cls._state.show_metrics

    @classmethod
    def set_show_metrics(cls, show_metrics: bool) -> None:
        with cls._lock:
            cls._state.show_metrics = show_metrics
            if show_metrics:
                cls._register_timing_summary()

    @classmethod
    def get_disable_file_logging(cls) -> bool:
        with cls._lock:
            if cls._state.disable_file_logging is None:
                return config.disable_file_logging
            return cls._state.disable_file_logging

    @classmethod
    def _register_timing_summary(cls) -> None:
        # caller holds the lock
        if not cls._state.atexit_registered:
            import atexit
            from pymicg.custom_logging import Logging
            atexit.register(Logging.log_final_metrics_summary)
            cls._state.atexit_registered = True

    # Testing mode
    @classmethod
    def enable_testing_mode(cls) -> None:
        """Capture log entries in memory; no console or file output."""
        with cls._lock:
            cls._state.testing = True
            cls._state.captured = []

    @classmethod
    def disable_testing_mode(cls) -> None:
        with cls._lock:
            cls._state.testing = False
            cls._state.captured = None

    @classmethod
    def is_testing_mode(cls) -> bool:
        with cls._lock:
            return cls._state.testing

    @classmethod
    def capture_log(cls, log_entry: Dict[str, Any]) -> None:
        with cls._lock:
            if cls._state.testing and cls._state.captured is not None:
                cls._state.captured.append(log_entry)

    @classmethod
    def get_captured_logs(cls) -> List[Dict[str, Any]]:
        with cls._lock:
            if not cls._state.testing:
                raise exceptions.SetupError("Not in testing mode. No logs captured.")
            return list(cls._state.captured or [])

    @classmethod
    def clear_captured_logs(cls) -> None:
        with cls._lock:
            if cls._state.captured is not None:
                cls._state.captured.clear()
