import contextvars
import json
import logging
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from logging.handlers import RotatingFileHandler
from typing import Any, Callable, Dict, List, Optional, Union

from pymicg.config import config
from pymicg.exceptions import SetupNotDoneError
from pymicg.setup import Setup

LOGGER_NAME = "pymicg"

LogFormat = Union[str, Callable[..., str]]

_COLORS = {
    "DEBUG": "\033[36m",
    "INFO": "\033[32m",
    "WARNING": "\033[33m",
    "ERROR": "\033[31m",
}
_RESET = "\033[0m"


class LogContext:
    """Context-local key/values merged into every log entry (e.g. stage, chain)."""
    _stack: contextvars.ContextVar = contextvars.ContextVar("micg_log_context", default=())

    def __init__(self, **kwargs: Any) -> None:
        self.context = kwargs
        self._token: Optional[contextvars.Token] = None

    @classmethod
    def current(cls) -> Dict[str, Any]:
        stack = cls._stack.get()
        return dict(stack[-1]) if stack else {}

    def __enter__(self) -> "LogContext":
        stack = self._stack.get()
        self._token = self._stack.set(stack + ({**self.current(), **self.context},))
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self._stack.reset(self._token)


@dataclass
class _Line:
    level: str
    message: str
    fn_type: str
    function: str
    duration: Optional[float]
    data: Dict[str, Any]
    project: str = field(default_factory=lambda: Setup.get_project() or "?")
    depth: int = field(default_factory=lambda: max(Setup.get_level(), 0))
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime()))

    @property
    def branch(self) -> str:
        if self.depth == 0:
            return ""
        return "│    " * (self.depth - 1) + ("├──" if self.depth == 1 else "├───")

    @property
    def took(self) -> str:
        return "" if self.duration is None else f" (took {self.duration:.5f} seconds)"

    def data_json(self) -> str:
        return json.dumps(self.data, default=str)


def _render_color(line: _Line) -> str:
    data = f" {line.data_json()}" if line.data else ""
    return (f"{_COLORS.get(line.level, '')}{line.timestamp} - {line.level} - [{line.project}] "
            f"{line.branch} {line.function} {line.message}{_RESET}{data}{line.took}")


def _render_plain(line: _Line) -> str:
    data = f" {line.data_json()}" if line.data else ""
    return (f"{line.timestamp} - {line.level} - [{line.project}] {line.branch}{line.fn_type} "
            f"{line.function} {line.message}{data}{line.took}")


def _render_json(line: _Line) -> str:
    payload: Dict[str, Any] = {
        "timestamp": line.timestamp,
        "level": line.level,
        "project": line.project,
        "fn_type": line.fn_type,
        "function": line.function,
        "message": line.message,
        "data": line.data,
    }
    if line.duration is not None:
        payload["duration"] = line.duration
    return json.dumps(payload, default=str)


def _render_logfmt(line: _Line) -> str:
    parts = [
        f"time={line.timestamp}",
        f"level={line.level}",
        f"project={line.project}",
        f"fn_type={line.fn_type}",
        f"function={line.function}",
        f'message="{line.message}"',
    ]
    if line.data:
        parts.append(f"data={line.data_json()}")
    if line.duration is not None:
        parts.append(f"duration={line.duration:.5f}")
    return " ".join(parts)


RENDERERS: Dict[str, Callable[[_Line], str]] = {
    "color": _render_color,
    "plain": _render_plain,
    "json": _render_json,
    "logfmt": _render_logfmt,
}


class _SinkFilter(logging.Filter):
    """Route a record to one handler when console and file formats differ."""

    def __init__(self, sink: str) -> None:
        super().__init__()
        self._sink = sink

    def filter(self, record: logging.LogRecord) -> bool:
        sink = getattr(record, "micg_sink", None)
        return sink is None or sink == self._sink


class StageTimings:
    """Thread-safe call counts and wall time per stage."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._totals: Dict[str, Dict[str, Any]] = {}

    def add(self, stage_name: str, duration: float) -> None:
        with self._lock:
            entry = self._totals.setdefault(stage_name, {"count": 0, "total": 0.0})
            entry["count"] += 1
            entry["total"] += duration

    def snapshot(self) -> Dict[str, Dict[str, Any]]:
        with self._lock:
            return {name: dict(entry) for name, entry in self._totals.items()}

    def clear(self) -> None:
        with self._lock:
            self._totals.clear()

    @staticmethod
    def table(metrics: Dict[str, Dict[str, Any]]) -> str:
        calls_total = sum(int(m["count"]) for m in metrics.values())
        lines: List[str] = ["STAGE TIMINGS", f"Stages: {len(metrics)}, Total calls: {calls_total}"]
        if not metrics:
            return "\n".join(lines)
        lines.append(f"  {'Stage':<40} {'Calls':>8} {'Total Time':>12} {'Avg Time':>12}")
        lines.append(f"  {'-' * 40} {'-' * 8} {'-' * 12} {'-' * 12}")
        for name in sorted(metrics):
            calls = int(metrics[name]["count"])
            total = float(metrics[name]["total"])
            shown = name if len(name) <= 38 else name[:35] + "..."
            lines.append(f"  {shown:<40} {calls:>8} {total:>12.6f}s {(total / calls if calls else 0.0):>12.6f}s")
        return "\n".join(lines)


class Logging:
    """
    Logging facade for pymicg.

    Console and file sinks may use different formats ('color', 'plain',
    'json', 'logfmt' or a callable). Console lines go to stderr so result
    files written to stdout stay clean. In testing mode nothing is emitted;
    entries are handed to ``Setup.capture_log`` instead.
    """

    _configured = False
    _console_format: Optional[LogFormat] = None
    _file_format: Optional[LogFormat] = None
    _file_logging_enabled = False
    _timings = StageTimings()

    def __init__(self, log_format: Optional[LogFormat] = None, disable_file_logging: Optional[bool] = None) -> None:
        if not Setup.is_setup_done():
            raise SetupNotDoneError("Setup is not done. Cannot initialize logging.")
        Logging._console_format, Logging._file_format = self._resolve_formats(log_format)
        if Logging._configured:
            return
        if Setup.is_testing_mode():
            disable_file_logging = True
        elif disable_file_logging is None:
            disable_file_logging = Setup.get_disable_file_logging()
        Logging._file_logging_enabled = not disable_file_logging
        self._install_handlers(with_file=Logging._file_logging_enabled)
        Logging._configured = True

    @staticmethod
    def _resolve_formats(log_format: Optional[LogFormat]):
        # explicit argument > MICG_LOG_FORMAT > per-sink formats
        if log_format is not None:
            return log_format, log_format
        shared = config.format if config.format_explicit else None
        console = config.console_format if config.console_format_explicit or shared is None else shared
        file = config.file_format if config.file_format_explicit or shared is None else shared
        return console, file

    @staticmethod
    def _install_handlers(with_file: bool) -> None:
        logger = logging.getLogger(LOGGER_NAME)
        logger.setLevel(getattr(logging, config.log_level, logging.INFO))
        logger.propagate = False
        Logging._drop_handlers(logger)
        formatter = logging.Formatter("%(message)s")

        console = logging.StreamHandler(sys.__stderr__)
        console.setFormatter(formatter)
        console.addFilter(_SinkFilter("console"))
        logger.addHandler(console)

        if with_file:
            path = config.get_log_path()
            os.makedirs(path.parent, exist_ok=True)
            rotating = RotatingFileHandler(str(path), maxBytes=config.max_size,
                                           backupCount=config.backup_count, encoding="utf-8")
            rotating.setFormatter(formatter)
            rotating.addFilter(_SinkFilter("file"))
            logger.addHandler(rotating)

    @staticmethod
    def _drop_handlers(logger: logging.Logger) -> None:
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()

    @classmethod
    def reset(cls) -> None:
        """Drop handlers and timings so the next instance reconfigures."""
        cls._drop_handlers(logging.getLogger(LOGGER_NAME))
        cls._configured = False
        cls._console_format = None
        cls._file_format = None
        cls._file_logging_enabled = False
        cls._timings.clear()

    @staticmethod
    def with_context(**kwargs: Any) -> LogContext:
        return LogContext(**kwargs)

    @staticmethod
    def _format_message(
        level: str,
        message: str,
        fn_type: Optional[str] = None,
        function: Optional[str] = None,
        duration: Optional[float] = None,
        _log_format: Optional[LogFormat] = None,
        **kwargs: Any,
    ) -> str:
        log_format = _log_format if _log_format is not None else Logging._console_format or "color"
        if callable(log_format):
            return log_format(level, message, fn_type, function, duration, **kwargs)
        line = _Line(level.upper(), message, fn_type or "", function or kwargs.get("stage", ""), duration, kwargs)
        return RENDERERS.get(log_format, _render_plain)(line)

    @staticmethod
    def _log(level: str, message: str, fn_type: Optional[str] = None, function: Optional[str] = None,
             duration: Optional[float] = None, **kwargs: Any) -> None:
        if not Setup.is_setup_done():
            raise SetupNotDoneError(f"Setup is not done. Cannot log {level.lower()}.")
        data = {**LogContext.current(), **kwargs}

        if Setup.is_testing_mode():
            Setup.capture_log({
                "level": level,
                "message": message,
                "fn_type": fn_type,
                "function": function,
                "duration": duration,
                "kwargs": data,
            })
            return

        logger = logging.getLogger(LOGGER_NAME)
        levelno = getattr(logging, level)
        console_format = Logging._console_format or "color"
        file_format = Logging._file_format or "json"
        text = Logging._format_message(level, message, fn_type, function, duration,
                                       _log_format=console_format, **data)
        if not Logging._file_logging_enabled or console_format == file_format:
            logger.log(levelno, text)
            return
        logger.log(levelno, text, extra={"micg_sink": "console"})
        logger.log(levelno, Logging._format_message(level, message, fn_type, function, duration,
                                                     _log_format=file_format, **data),
                   extra={"micg_sink": "file"})

    @staticmethod
    def log_debug(message: str, fn_type: Optional[str] = None, function: Optional[str] = None,
                  duration: Optional[float] = None, **kwargs: Any) -> None:
        Logging._log("DEBUG", message, fn_type, function, duration, **kwargs)

    @staticmethod
    def log_info(message: str, fn_type: Optional[str] = None, function: Optional[str] = None,
                 duration: Optional[float] = None, **kwargs: Any) -> None:
        Logging._log("INFO", message, fn_type, function, duration, **kwargs)

    @staticmethod
    def log_warning(message: str, fn_type: Optional[str] = None, function: Optional[str] = None,
                    duration: Optional[float] = None, **kwargs: Any) -> None:
        Logging._log("WARNING", message, fn_type, function, duration, **kwargs)

    @staticmethod
    def log_error(message: str, fn_type: Optional[str] = None, function: Optional[str] = None,
                  duration: Optional[float] = None, **kwargs: Any) -> None:
        Logging._log("ERROR", message, fn_type, function, duration, **kwargs)

    # Stage timings
    @staticmethod
    def record_metric(stage_name: str, duration: float) -> None:
        if Setup.get_show_metrics():
            Logging._timings.add(stage_name, duration)

    @staticmethod
    def metrics_snapshot() -> Dict[str, Dict[str, Any]]:
        return Logging._timings.snapshot()

    @staticmethod
    def format_metrics_table(metrics: Dict[str, Dict[str, Any]]) -> str:
        return StageTimings.table(metrics)

    @staticmethod
    def log_final_metrics_summary() -> None:
        """Print the stage timing table at exit when metrics are enabled."""
        if not Setup.is_setup_done() or not Setup.get_show_metrics() or Setup.is_testing_mode():
            return
        metrics = Logging.metrics_snapshot()
        if metrics:
            try:
                print(StageTimings.table(metrics), file=sys.__stderr__)
            except (OSError, ValueError):
                pass
