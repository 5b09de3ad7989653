import os
from pathlib import Path
from typing import Any, Dict, Optional

from pymicg.exceptions import ValidationError

_TRUTHY = {"1", "true", "yes", "on"}


class MicgConfig:
    """Runtime configuration for logging and the numerical defaults.

    Every value starts from a ``MICG_``-prefixed environment variable and can
    be overridden in code (or through ``Setup.initialize``).
    """
    def __init__(self):
        env_base_format = os.environ.get("MICG_LOG_FORMAT")
        env_console_format = os.environ.get("MICG_CONSOLE_LOG_FORMAT")
        env_file_format = os.environ.get("MICG_FILE_LOG_FORMAT")

        self._explicit: Dict[str, bool] = {
            "format": env_base_format is not None,
            "console_format": env_console_format is not None,
            "file_format": env_file_format is not None,
        }

        self._config: Dict[str, Any] = {
            # Sets both sinks when present; otherwise per-sink defaults apply.
            'format': env_base_format,
            'console_format': env_console_format or 'color',
            'file_format': env_file_format or 'json',
            'log_file': self._get_env('LOG_FILE', 'micg.log'),
            'max_size': int(self._get_env('MAX_SIZE', str(10 * 1024 * 1024))),  # 10MB
            'backup_count': int(self._get_env('BACKUP_COUNT', '5')),
            'log_dir': self._get_env('LOG_DIR', 'logs'),
            'log_level': self._get_env('LOG_LEVEL', 'INFO'),
            'disable_file_logging': self._get_env_bool('DISABLE_FILE_LOGGING', True),
            'seed': self._get_env_int('SEED'),
            'identification_cutoff': float(self._get_env('CUTOFF', repr(1.0 / 3.0))),
            'missing_policy': self._get_env('MISSING_POLICY', 'exclude_child'),
            'pca_tolerance': float(self._get_env('PCA_TOLERANCE', '1e-10')),
            'pca_max_iterations': int(self._get_env('PCA_MAX_ITERATIONS', '10000')),
            'kde_grid_points': int(self._get_env('KDE_GRID_POINTS', '512')),
            'frontier_chains': int(self._get_env('FRONTIER_CHAINS', '4')),
            'frontier_iterations': int(self._get_env('FRONTIER_ITERATIONS', '5000')),
            'frontier_burn_in': int(self._get_env('FRONTIER_BURN_IN', '2000')),
            'frontier_thinning': int(self._get_env('FRONTIER_THINNING', '1')),
            'rhat_threshold': float(self._get_env('RHAT_THRESHOLD', '1.05')),
            'logit_epsilon': float(self._get_env('LOGIT_EPSILON', '1e-3')),
        }

    def _get_env(self, key: str, default: str) -> str:
        """Get environment variable with MICG_ prefix."""
        return os.environ.get(f'MICG_{key}', default)

    def _get_env_bool(self, key: str, default: bool) -> bool:
        value = os.environ.get(f'MICG_{key}')
        if value is None:
            return default
        return value.lower() in _TRUTHY

    def _get_env_int(self, key: str) -> Optional[int]:
        value = os.environ.get(f'MICG_{key}')
        if value is None or not value.strip():
            return None
        return int(value)

    def reload(self) -> None:
        """Re-read every value from the environment."""
        self.__init__()

    @property
    def format(self) -> Optional[str]:
        return self._config['format']

    @format.setter
    def format(self, value: Optional[str]) -> None:
        self._config['format'] = value
        self._explicit["format"] = True

    @property
    def console_format(self) -> str:
        return self._config["console_format"]

    @console_format.setter
    def console_format(self, value: str) -> None:
        self._config["console_format"] = value
        self._explicit["console_format"] = True

    @property
    def file_format(self) -> str:
        return self._config["file_format"]

    @file_format.setter
    def file_format(self, value: str) -> None:
        self._config["file_format"] = value
        self._explicit["file_format"] = True

    @property
    def format_explicit(self) -> bool:
        return self._explicit.get("format", False)

    @property
    def console_format_explicit(self) -> bool:
        return self._explicit.get("console_format", False)

    @property
    def file_format_explicit(self) -> bool:
        return self._explicit.get("file_format", False)

    @property
    def log_file(self) -> str:
        return self._config['log_file']

    @log_file.setter
    def log_file(self, value: str) -> None:
        self._config['log_file'] = value

    @property
    def max_size(self) -> int:
        return self._config['max_size']

    @max_size.setter
    def max_size(self, value: int) -> None:
        self._config['max_size'] = value

    @property
    def backup_count(self) -> int:
        return self._config['backup_count']

    @backup_count.setter
    def backup_count(self, value: int) -> None:
        self._config['backup_count'] = value

    @property
    def log_dir(self) -> str:
        return self._config['log_dir']

    @log_dir.setter
    def log_dir(self, value: str) -> None:
        self._config['log_dir'] = value

    @property
    def log_level(self) -> str:
        return self._config['log_level']

    @log_level.setter
    def log_level(self, value: str) -> None:
        self._config['log_level'] = value.upper()

    @property
    def disable_file_logging(self) -> bool:
        return self._config['disable_file_logging']

    @disable_file_logging.setter
    def disable_file_logging(self, value: bool) -> None:
        self._config['disable_file_logging'] = value

    def get_log_path(self) -> Path:
        """Get the full path to the log file."""
        if os.path.isabs(self.log_file):
            return Path(self.log_file)
        return Path(self.log_dir) / self.log_file

    @property
    def seed(self) -> Optional[int]:
        return self._config['seed']

    @seed.setter
    def seed(self, value: Optional[int]) -> None:
        self._config['seed'] = value

    @property
    def identification_cutoff(self) -> float:
        return self._config['identification_cutoff']

    @identification_cutoff.setter
    def identification_cutoff(self, value: float) -> None:
        value = float(value)
        if not 0.0 < value <= 1.0:
            raise ValidationError(f"identification cutoff must lie in (0, 1], got {value}")
        self._config['identification_cutoff'] = value

    @property
    def missing_policy(self) -> str:
        return self._config['missing_policy']

    @missing_policy.setter
    def missing_policy(self, value: str) -> None:
        self._config['missing_policy'] = value

    @property
    def pca_tolerance(self) -> float:
        return self._config['pca_tolerance']

    @pca_tolerance.setter
    def pca_tolerance(self, value: float) -> None:
        self._config['pca_tolerance'] = float(value)

    @property
    def pca_max_iterations(self) -> int:
        return self._config['pca_max_iterations']

    @pca_max_iterations.setter
    def pca_max_iterations(self, value: int) -> None:
        self._config['pca_max_iterations'] = int(value)

    @property
    def kde_grid_points(self) -> int:
        return self._config['kde_grid_points']

    @kde_grid_points.setter
    def kde_grid_points(self, value: int) -> None:
        self._config['kde_grid_points'] = int(value)

    @property
    def frontier_chains(self) -> int:
        return self._config['frontier_chains']

    @frontier_chains.setter
    def frontier_chains(self, value: int) -> None:
        self._config['frontier_chains'] = int(value)

    @property
    def frontier_iterations(self) -> int:
        return self._config['frontier_iterations']

    @frontier_iterations.setter
    def frontier_iterations(self, value: int) -> None:
        self._config['frontier_iterations'] = int(value)

    @property
    def frontier_burn_in(self) -> int:
        return self._config['frontier_burn_in']

    @frontier_burn_in.setter
    def frontier_burn_in(self, value: int) -> None:
        self._config['frontier_burn_in'] = int(value)

    @property
    def frontier_thinning(self) -> int:
        return self._config['frontier_thinning']

    @frontier_thinning.setter
    def frontier_thinning(self, value: int) -> None:
        self._config['frontier_thinning'] = int(value)

    @property
    def rhat_threshold(self) -> float:
        return self._config['rhat_threshold']

    @rhat_threshold.setter
    def rhat_threshold(self, value: float) -> None:
        self._config['rhat_threshold'] = float(value)

    @property
    def logit_epsilon(self) -> float:
        return self._config['logit_epsilon']

    @logit_epsilon.setter
    def logit_epsilon(self, value: float) -> None:
        self._config['logit_epsilon'] = float(value)

config = MicgConfig()
