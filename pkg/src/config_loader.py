import logging
import os
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import ConfigError
from .hermitian import TolerancePolicy

DEFAULT_LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
SEED_ENV_VAR = 'STURMFLOW_SEED'


class LoggingSettings(BaseModel):
    level: str = Field('INFO', description="Root logger level name")
    format: str = Field(DEFAULT_LOG_FORMAT, description="logging.basicConfig format string")


class ScanSettings(BaseModel):
    points: int = Field(512, ge=8, description="Grid size of crossing scans")
    refine_xtol: float = Field(1e-12, gt=0, description="Absolute parameter tolerance of minimum refinement")


class EpsilonGuardSettings(BaseModel):
    initial: float = Field(1.0 / 64, gt=0, le=1, description="First epsilon tried by the guard")
    grid_points: int = Field(128, ge=2)
    max_halvings: int = Field(6, ge=0)


class CrossingCheckSettings(BaseModel):
    enabled: bool = Field(True, description="Cross-validate analytic crossing forms geometrically")
    quadrature_nodes: int = Field(64, ge=8)
    fd_step_fraction: float = Field(1e-4, gt=0, lt=0.1)
    entry_tol: float = Field(1e-4, gt=0)


class GalerkinSettings(BaseModel):
    n_start: int = Field(16, ge=2)
    n_step: int = Field(4, ge=1)
    n_max: int = Field(32, ge=2)


class RegularizationSettings(BaseModel):
    delta_min: float = Field(1e-4, gt=0)
    delta_max: float = Field(1e-3, gt=0)
    max_draws: int = Field(5, ge=1)

    @field_validator('delta_max')
    @classmethod
    def _ordered(cls, value, info):
        lower = info.data.get('delta_min')
        if lower is not None and value < lower:
            raise ValueError("delta_max must not be smaller than delta_min")
        return value


class OutputSettings(BaseModel):
    record_file: str = Field('./outputs/run_record.xlsx', description="Excel run record path")
    record_enabled: bool = False


class SweepSettings(BaseModel):
    workers: int = Field(1, ge=1, description="Parallel sweep samples (process pool when > 1)")


class Settings(BaseModel):
    """Validated contents of config.yaml."""
    logging: LoggingSettings = LoggingSettings()
    tolerances: TolerancePolicy = TolerancePolicy()
    scan: ScanSettings = ScanSettings()
    epsilon_guard: EpsilonGuardSettings = EpsilonGuardSettings()
    crossing_check: CrossingCheckSettings = CrossingCheckSettings()
    galerkin: GalerkinSettings = GalerkinSettings()
    regularization: RegularizationSettings = RegularizationSettings()
    output: OutputSettings = OutputSettings()
    sweep: SweepSettings = SweepSettings()
    seed: int = 0


def load_config(config_path: Optional[str] = 'config.yaml') -> Settings:
    """
    Load settings from a YAML file, falling back to defaults when it is absent.

    The environment variable STURMFLOW_SEED overrides the seed of the file.

    Raises:
        ConfigError: if the file is malformed or a value is out of range
    """
    raw: Dict[str, Any] = {}
    if config_path and os.path.isfile(config_path):
        try:
            with open(config_path, 'r', encoding='utf-8') as stream:
                raw = yaml.safe_load(stream) or {}
            logging.info(f"Settings loaded from {config_path}.")
        except yaml.YAMLError as exc:
            logging.error(f"Could not parse settings file {config_path}: {exc}")
            raise ConfigError(f"malformed YAML in {config_path}: {exc}") from exc
    elif config_path:
        logging.info(f"Settings file {config_path} not found, using defaults.")

    if not isinstance(raw, dict):
        raise ConfigError(f"settings file {config_path} must contain a mapping")

    # 环境变量优先于配置文件中的种子
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            raw['seed'] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc

    # 校验并补全默认值
    try:
        return Settings.model_validate(raw)
    except ValidationError as exc:
        logging.error(f"Invalid settings in {config_path}: {exc}")
        raise ConfigError(str(exc)) from exc


def setup_logging(settings: Settings) -> None:
    """Reconfigure the root logger from the logging section."""
    level = getattr(logging, settings.logging.level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=settings.logging.format or DEFAULT_LOG_FORMAT, force=True)
