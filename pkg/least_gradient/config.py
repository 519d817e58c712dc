"""Configuration module for the least gradient solver.

All defaults live here. A config file (``key = value`` lines, ``#`` comments)
overrides them, and command-line flags override the file.
"""

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from least_gradient.errors import ConfigError

# Application constants
APP_NAME = "least_gradient"

# Logging settings
LOG_FILENAME_FORMAT = "least_gradient_%Y%m%d_%H%M%S.log"
LOG_MAX_BYTES = 10 * 1024 * 1024  # 10MB
LOG_BACKUP_COUNT = 5

# Discretization
DEFAULT_N = 64  # cells per unit length
MIN_N = 4

# Solver settings
DEFAULT_MAX_ITERS = 20000
DEFAULT_GAP_TOL = 1e-5  # relative
DEFAULT_THETA = 1.0
DEFAULT_LOG_EVERY = 100
DEFAULT_CHECK_EVERY = 10  # gap evaluation cadence, independent of logging
DEFAULT_SEED = 0

# Anisotropy: "euclidean" | "weighted:<path>" | "p1" | "p2" | "pinf"
DEFAULT_ANISOTROPY = "euclidean"

# Certification
DEFAULT_EXCLUSION_FACTOR = 4.0  # exclusion radius around boundary singularities, in cells
DEFAULT_JUMP_FRACTION = 0.05  # of the range of f
DEFAULT_TOL_FEAS = 1e-9
DEFAULT_TOL_DIV_FLUX = 0.05  # per cell face: r_div <= DEFAULT_TOL_DIV_FLUX / h
DEFAULT_TOL_PAIR = 0.02
DEFAULT_TOL_SIGN = 0.1

# Level sets and continuity
DEFAULT_HOTSPOT_FRACTION = 0.25  # of the range of f
DEFAULT_SKIP_JUMP_LEVELS = False


@dataclass(frozen=True)
class Settings:
    """Every key a config file may set."""

    n: int = DEFAULT_N
    max_iters: int = DEFAULT_MAX_ITERS
    gap_tol: float = DEFAULT_GAP_TOL
    theta: float = DEFAULT_THETA
    log_every: int = DEFAULT_LOG_EVERY
    seed: int = DEFAULT_SEED
    anisotropy: str = DEFAULT_ANISOTROPY
    exclusion_factor: float = DEFAULT_EXCLUSION_FACTOR
    jump_fraction: float = DEFAULT_JUMP_FRACTION
    tol_feas: float = DEFAULT_TOL_FEAS
    tol_div_flux: float = DEFAULT_TOL_DIV_FLUX
    tol_pair: float = DEFAULT_TOL_PAIR
    tol_sign: float = DEFAULT_TOL_SIGN
    hotspot_fraction: float = DEFAULT_HOTSPOT_FRACTION
    skip_jump_levels: bool = DEFAULT_SKIP_JUMP_LEVELS
    log_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.n < MIN_N:
            raise ConfigError(f"n must be at least {MIN_N}, got {self.n}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be positive, got {self.max_iters}")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be positive, got {self.log_every}")
        for key in ("gap_tol", "exclusion_factor", "tol_div_flux", "tol_pair", "tol_sign"):
            value = getattr(self, key)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{key} must be a positive number, got {value}")
        for key in ("jump_fraction", "hotspot_fraction", "tol_feas"):
            value = getattr(self, key)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{key} must be non-negative, got {value}")


_FIELD_TYPES: Dict[str, Any] = {f.name: f.type for f in dataclasses.fields(Settings)}


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"Config key '{key}' expects a boolean, got '{raw}'")


def _coerce(key: str, raw: Any) -> Any:
    """Convert a config-file string (or a flag value) to the field's type."""
    if key not in _FIELD_TYPES:
        known = ", ".join(sorted(_FIELD_TYPES))
        raise ConfigError(f"Unknown config key '{key}'. Known keys: {known}")
    if raw is None:
        raise ConfigError(f"Config key '{key}' has no value")
    if not isinstance(raw, str):
        return raw
    annotation = str(_FIELD_TYPES[key])
    try:
        if annotation in ("int", "<class 'int'>"):
            return int(raw)
        if annotation in ("float", "<class 'float'>"):
            return float(raw)
        if annotation in ("bool", "<class 'bool'>"):
            return _parse_bool(key, raw)
    except ValueError as e:
        raise ConfigError(f"Config key '{key}' has invalid value '{raw}': {e}") from e
    return raw.strip()


def load_settings(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Settings:
    """Build settings from defaults, an optional config file and overrides.

    Override entries whose value is ``None`` are ignored, so an argparse
    namespace can be passed through without filtering unset flags.
    """
    values: Dict[str, Any] = {}

    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"Config file not found: {config_path}")
        for key, raw in dotenv_values(config_path).items():
            values[key] = _coerce(key, raw)

    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _coerce(key, raw)

    return Settings(**values)
