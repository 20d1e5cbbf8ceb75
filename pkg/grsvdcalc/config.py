"""Configuration management for grsvd experiment campaigns."""

from __future__ import annotations

import logging
import math
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

APP_DIR = "grsvd"
SWEEP_AXES = ("k", "p")
OUTPUT_FORMATS = ("csv", "json")
MAX_SEED = 2**64 - 1


# -------------------------------------------------------------------
# Coercion helpers (YAML reads "1e-3" as a string)
# -------------------------------------------------------------------


def _section(data: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = data.get(key)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be a mapping, got {type(value).__name__}")
    return value


def _as_int(value: Any, where: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if isinstance(value, int):
        result = value
    elif isinstance(value, str) and value.strip().lstrip("+-").isdigit():
        # exact for 64-bit seeds
        result = int(value.strip())
    else:
        try:
            number = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where} must be an integer, got {value!r}") from exc
        if not number.is_integer():
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        result = int(number)
    if minimum is not None and result < minimum:
        raise ConfigError(f"{where} must be >= {minimum}, got {result}")
    return result


def _as_float(value: Any, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must be a number, got {value!r}") from exc
    if not math.isfinite(number):
        raise ConfigError(f"{where} must be finite, got {value!r}")
    return number


def _optional(value: Any, convert, where: str):
    return None if value is None else convert(value, where)


# -------------------------------------------------------------------
# Sections
# -------------------------------------------------------------------


@dataclass
class FormattingConfig:
    """Configuration for report output."""

    digits: int = 6  # significant digits in human-readable reports

    def format_value(self, value: Optional[float]) -> str:
        """Format a real according to config settings."""
        if value is None:
            return "n/a"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return f"{value:.{self.digits}g}"


@dataclass
class ScenarioConfig:
    """Problem definition: a named DA scenario, or an external matrix file."""

    name: str = "LowObs"
    n: Optional[int] = None
    m: Optional[int] = None
    sigma_r: float = 0.1
    gamma: float = 500.0
    matrix: Optional[str] = None  # path to A in the plain-text matrix format
    covariance: Optional[str] = None  # path to an explicit K for case "K"


@dataclass
class SweepConfig:
    """Sweep over the target rank k (fixed p) or the oversampling p (fixed k)."""

    over: str = "k"
    values: Optional[List[int]] = None  # None: the default grid of the axis
    fixed_p: int = 10
    fixed_k: int = 20


@dataclass
class CaseConfig:
    case: str = "B"
    alpha: float = 1.0
    beta: float = 1.0


@dataclass
class OutputConfig:
    path: Optional[str] = None  # None: stdout
    format: str = "csv"


@dataclass
class OracleConfig:
    n_samples: int = 100_000


@dataclass
class ExperimentConfig:
    """Main configuration object for grsvd."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    cases: List[CaseConfig] = field(default_factory=lambda: [CaseConfig("B")])
    n_runs: int = 20
    delta: float = 1e-3
    base_seed: int = 20240
    workers: int = 1
    pilot_p: int = 10
    baseline_q: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)
    formatting: FormattingConfig = field(default_factory=FormattingConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ExperimentConfig:
        """
        Create an ExperimentConfig from a dictionary (typically loaded from YAML or JSON).

        Raises:
            ConfigError: a field has the wrong type or an out-of-range value.
        """
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a mapping, got {type(data).__name__}")
        scenario_data = _section(data, "scenario")
        sweep_data = _section(data, "sweep")
        output_data = _section(data, "output")
        formatting_data = _section(data, "formatting")
        oracle_data = _section(data, "oracle")

        scenario = ScenarioConfig(
            name=str(scenario_data.get("name", "LowObs")),
            n=_optional(scenario_data.get("n"), lambda v, w: _as_int(v, w, 2), "scenario.n"),
            m=_optional(scenario_data.get("m"), lambda v, w: _as_int(v, w, 0), "scenario.m"),
            sigma_r=_as_float(scenario_data.get("sigma_r", 0.1), "scenario.sigma_r"),
            gamma=_as_float(scenario_data.get("gamma", 500.0), "scenario.gamma"),
            matrix=scenario_data.get("matrix"),
            covariance=scenario_data.get("covariance"),
        )
        if scenario.sigma_r <= 0 or scenario.gamma <= 0:
            raise ConfigError("scenario.sigma_r and scenario.gamma must be positive")

        over = str(sweep_data.get("over", "k"))
        if over not in SWEEP_AXES:
            raise ConfigError(f"sweep.over must be one of {SWEEP_AXES}, got {over!r}")
        raw_values = sweep_data.get("values")
        if raw_values is not None and not isinstance(raw_values, list):
            raise ConfigError("sweep.values must be a list of integers")
        sweep = SweepConfig(
            over=over,
            values=None
            if raw_values is None
            else [_as_int(v, "sweep.values", 1) for v in raw_values],
            fixed_p=_as_int(sweep_data.get("fixed_p", 10), "sweep.fixed_p", 1),
            fixed_k=_as_int(sweep_data.get("fixed_k", 20), "sweep.fixed_k", 1),
        )
        if sweep.values == []:
            raise ConfigError("sweep.values must not be empty")

        raw_cases = data.get("cases", [{"case": "B"}])
        if not isinstance(raw_cases, list) or not raw_cases:
            raise ConfigError("cases must be a non-empty list")
        cases = []
        for i, entry in enumerate(raw_cases):
            if isinstance(entry, str):
                entry = {"case": entry}
            if not isinstance(entry, dict) or "case" not in entry:
                raise ConfigError(f"cases[{i}] must be a case id or a mapping with 'case'")
            cases.append(
                CaseConfig(
                    case=str(entry["case"]),
                    alpha=_as_float(entry.get("alpha", 1.0), f"cases[{i}].alpha"),
                    beta=_as_float(entry.get("beta", 1.0), f"cases[{i}].beta"),
                )
            )

        delta = _as_float(data.get("delta", 1e-3), "delta")
        if not 0.0 < delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {delta}")
        base_seed = _as_int(data.get("base_seed", 20240), "base_seed", 0)
        if base_seed > MAX_SEED:
            raise ConfigError(f"base_seed must fit in 64 bits, got {base_seed}")

        output_format = str(output_data.get("format", "csv")).lower()
        if output_format not in OUTPUT_FORMATS:
            raise ConfigError(
                f"output.format must be one of {OUTPUT_FORMATS}, got {output_format!r}"
            )

        return cls(
            scenario=scenario,
            sweep=sweep,
            cases=cases,
            n_runs=_as_int(data.get("n_runs", 20), "n_runs", 1),
            delta=delta,
            base_seed=base_seed,
            workers=_as_int(data.get("workers", 1), "workers", 1),
            pilot_p=_as_int(data.get("pilot_p", 10), "pilot_p", 1),
            baseline_q=_as_int(data.get("baseline_q", 0), "baseline_q", 0),
            output=OutputConfig(path=output_data.get("path"), format=output_format),
            formatting=FormattingConfig(
                digits=_as_int(formatting_data.get("digits", 6), "formatting.digits", 1)
            ),
            oracle=OracleConfig(
                n_samples=_as_int(oracle_data.get("n_samples", 100_000), "oracle.n_samples", 1000)
            ),
        )


# -------------------------------------------------------------------
# Locating and loading config files
# -------------------------------------------------------------------


def _user_config_dir() -> Path:
    config_home = os.environ.get("XDG_CONFIG_HOME")
    if config_home:
        return Path(config_home) / APP_DIR
    return Path.home() / ".config" / APP_DIR


def get_config_paths() -> List[Path]:
    """
    Return a list of config file paths to check, in priority order.

    Priority:
    1. ~/.config/grsvd/config.yaml (user config)
    2. default_config.yaml (bundled with package)
    """
    return [_user_config_dir() / "config.yaml", Path(__file__).parent / "default_config.yaml"]


def _read(path: Path) -> ExperimentConfig:
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data or {})


def load_config(config_path: Optional[Path] = None) -> ExperimentConfig:
    """
    Load configuration from a YAML (or JSON) file.

    Args:
        config_path: Optional explicit path to config file.
                    If not provided, searches standard locations.

    Returns:
        ExperimentConfig with settings from file or defaults.

    Raises:
        ConfigError: an explicit ``config_path`` is missing or invalid.
    """
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigError(f"config file not found: {config_path}")
        return _read(config_path)

    for path in get_config_paths():
        if path.exists():
            try:
                return _read(path)
            except (ConfigError, OSError) as e:
                logger.warning("Failed to load config from %s: %s", path, e)
                continue

    return ExperimentConfig()


def create_user_config() -> Path:
    """
    Create a user config file from the default template.

    Returns:
        Path to the created config file.
    """
    config_dir = _user_config_dir()
    config_dir.mkdir(parents=True, exist_ok=True)
    config_file = config_dir / "config.yaml"

    if not config_file.exists():
        shutil.copy(Path(__file__).parent / "default_config.yaml", config_file)
        logger.info("Created %s", config_file)

    return config_file
