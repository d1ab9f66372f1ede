"""
DMBN Toolkit - Configuration Management
Environment-driven settings (logging, runtime) plus the JSON run
configuration shared by every command: sampler, generator, prediction, data
and report sections, with defaults matching the reference model setup.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union
import logging
from logging.handlers import RotatingFileHandler

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from utils.helpers import parse_override, set_nested
from utils.validators import ValidationError

# Load environment variables from .env file
load_dotenv()

__version__ = "1.0.0"

# ========== ENVIRONMENT SETTINGS ==========

class LoggingConfig(BaseSettings):
    """Logging configuration"""

    level: str = Field(default="INFO", description="Log level")
    file_path: str = Field(default="logs/dmbn.log", description="Log file path")
    file_max_size: int = Field(default=10485760, description="Log file max size")  # 10MB
    file_backup_count: int = Field(default=5, description="Log file backup count")
    to_console: bool = Field(default=True, description="Log to console")
    to_file: bool = Field(default=False, description="Log to file")

    model_config = {"env_prefix": "LOG_"}

    @field_validator('level')
    @classmethod
    def validate_log_level(cls, v):
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()


class RuntimeConfig(BaseSettings):
    """Execution settings shared by every chain"""

    threads: int = Field(default=1, ge=1, description="Data-parallel width of the augmentation step")
    debug_checks: bool = Field(default=False, description="Assert invariants after every sampler step")

    model_config = {"env_prefix": "DMBN_"}


# ========== RUN CONFIGURATION ==========

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelsConfig(_Section):
    """RBF smoothness per latent group"""

    mu: float = Field(default=0.05, gt=0)
    mu_p: float = Field(default=0.05, gt=0)
    xbar: float = Field(default=0.05, gt=0)
    x: float = Field(default=0.05, gt=0)
    jitter: float = Field(default=1e-8, gt=0)


class ScanConfig(_Section):
    """Annealed random-scan schedule f(i) = max(f_min, exp(-decay i / total))"""

    f_min: float = Field(default=0.1, gt=0, le=1)
    decay: float = Field(default=5.0, ge=0)


class GibbsConfig(_Section):
    """Sampler settings"""

    iterations: int = Field(default=5000, ge=1)
    burnin: float = Field(default=0.2, ge=0, lt=1)
    thin: int = Field(default=1, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    n_blocks: int = Field(default=10, ge=1)
    n_cross: int = Field(default=6, ge=1)
    n_within: int = Field(default=6, ge=1)
    kernels: KernelsConfig = Field(default_factory=KernelsConfig)
    a1: float = Field(default=2.0, gt=0)
    a2: float = Field(default=2.0, gt=0)
    alpha: float = Field(default=1.0, gt=0)
    pg_threshold: int = Field(default=100, ge=1)
    scan: ScanConfig = Field(default_factory=ScanConfig)
    fixed_assignments: bool = False
    init: Literal["random", "given"] = "random"
    initial_z: Optional[List[int]] = Field(default=None, description="1-based assignments for init='given'")
    pair_counting: Literal["ordered", "unordered"] = "ordered"
    store_pi: bool = False
    log_every: int = Field(default=100, ge=1)
    progress: bool = True

    @model_validator(mode="after")
    def check_initial_assignments(self):
        if self.init == "given" and self.initial_z is None:
            raise ValueError("init='given' requires initial_z")
        return self

    @property
    def burnin_iterations(self) -> int:
        return int(math.floor(self.burnin * self.iterations))

    def is_recorded(self, iteration: int) -> bool:
        """Whether the 0-based iteration is kept; floor(kept / thin) records in total"""
        offset = iteration - self.burnin_iterations
        return offset >= 0 and (offset + 1) % self.thin == 0

    @property
    def record_count(self) -> int:
        return (self.iterations - self.burnin_iterations) // self.thin

    def dmn(self, n_nodes: int) -> "GibbsConfig":
        """Per-node baseline: one block per node, identity assignments held fixed"""
        return self.model_copy(update={'n_blocks': n_nodes, 'fixed_assignments': True,
                                       'init': "random", 'initial_z': None})


class PatternMix(_Section):
    """Relative frequency of the three trajectory patterns"""

    constant: float = Field(default=1.0, ge=0)
    seasonal: float = Field(default=1.0, ge=0)
    trend: float = Field(default=1.0, ge=0)

    @model_validator(mode="after")
    def check_total(self):
        if self.constant + self.seasonal + self.trend <= 0:
            raise ValueError("pattern mix must have positive total weight")
        return self

    def probabilities(self) -> List[float]:
        total = self.constant + self.seasonal + self.trend
        return [self.constant / total, self.seasonal / total, self.trend / total]


class SynthConfig(_Section):
    """Synthetic generator settings"""

    n_nodes: int = Field(ge=1)
    n_blocks: int = Field(ge=1)
    n_layers: int = Field(default=4, ge=1)
    n_times: int = Field(default=12, ge=1)
    n_cross: int = Field(default=6, ge=1)
    n_within: int = Field(default=6, ge=1)
    kappa: float = Field(default=0.05, gt=0)
    patterns: PatternMix = Field(default_factory=PatternMix)
    assignment: Literal["balanced", "dirichlet"] = "balanced"
    dirichlet_alpha: float = Field(default=1.0, gt=0)
    no_blocks: bool = False
    amplitude_scale: float = Field(default=1.0, ge=0, description="Multiplier on every pattern level/amplitude")
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_blocks(self):
        if not self.no_blocks and self.n_blocks > self.n_nodes:
            raise ValueError("n_blocks must not exceed n_nodes")
        return self


class PredictionConfig(_Section):
    """Forecast/imputation settings"""

    horizon: Optional[int] = Field(default=None, ge=1)
    stamps: Optional[List[float]] = None
    draws: Optional[int] = Field(default=None, ge=1, description="Use the last `draws` kept draws; all when unset")
    impute: bool = False
    seed: Optional[int] = Field(default=None, ge=0)


class DataConfig(_Section):
    """Input handling"""

    holdout_steps: int = Field(default=0, ge=0)


class ReportConfig(_Section):
    """Posterior summary settings"""

    n_clusters: Optional[int] = Field(default=None, ge=1)
    interval: float = Field(default=0.95, gt=0, lt=1)
    excel: bool = True


class RunConfig(_Section):
    """Complete run configuration document"""

    gibbs: GibbsConfig = Field(default_factory=GibbsConfig)
    synth: Optional[SynthConfig] = None
    prediction: PredictionConfig = Field(default_factory=PredictionConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)

    def echo(self) -> Dict[str, Any]:
        """Fully resolved configuration for output manifests"""
        return self.model_dump(mode="json")


def _field_path(location: Sequence[Union[str, int]]) -> str:
    return ".".join(str(part) for part in location)


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Sequence[str]] = None) -> RunConfig:
    """Read a JSON run configuration, apply 'section.key=value' overrides and validate"""
    payload: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Configuration file {path} is not valid JSON: {e}",
                                  field="config", code="invalid_json") from e
        if not isinstance(payload, dict):
            raise ValidationError("Configuration document must be a JSON object", field="config", code="invalid_type")

    for assignment in overrides or []:
        try:
            key_path, value = parse_override(assignment)
        except ValueError as e:
            raise ValidationError(str(e), field="--set", code="invalid_override") from e
        set_nested(payload, key_path, value)

    try:
        return RunConfig.model_validate(payload)
    except PydanticValidationError as e:
        first = e.errors()[0]
        field_name = _field_path(first['loc'])
        messages = "; ".join(f"{_field_path(err['loc'])}: {err['msg']}" for err in e.errors())
        raise ValidationError(f"Invalid configuration: {messages}", field=field_name,
                              code=first['type'], details={'error_count': e.error_count()}) from e


# ========== GLOBAL SETTINGS ==========

class Config:
    """Main configuration class that combines the environment sections"""

    def __init__(self):
        self.logging = LoggingConfig()
        self.runtime = RuntimeConfig()

    def setup_logging(self, level: Optional[str] = None) -> None:
        """Configure the root logger once for a command-line run"""
        log_level = getattr(logging, (level or self.logging.level).upper())

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

        root_logger = logging.getLogger()
        root_logger.setLevel(log_level)

        for handler in root_logger.handlers[:]:
            root_logger.removeHandler(handler)

        if self.logging.to_console:
            console_handler = logging.StreamHandler()
            console_handler.setLevel(log_level)
            console_handler.setFormatter(formatter)
            root_logger.addHandler(console_handler)

        if self.logging.to_file:
            log_file = Path(self.logging.file_path)
            log_file.parent.mkdir(parents=True, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=self.logging.file_max_size,
                backupCount=self.logging.file_backup_count
            )
            file_handler.setLevel(log_level)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)


# Global configuration instance
config = Config()

# Convenience exports
logging_config = config.logging
runtime_config = config.runtime


def setup_logging(level: Optional[str] = None) -> None:
    config.setup_logging(level)


if __name__ == "__main__":
    try:
        run_config = load_run_config()
        print("✅ Configuration validation passed")
        print(f"🔧 Threads: {runtime_config.threads}")
        print(f"📊 Blocks: {run_config.gibbs.n_blocks}, iterations: {run_config.gibbs.iterations}")
    except Exception as e:
        print(f"❌ Configuration validation failed: {e}")
        exit(1)
