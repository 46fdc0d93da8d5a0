import os
import json
import math
import hashlib
import logging
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..errors import ConfigInvalid

logger = logging.getLogger(__name__)

RUN_CONFIG_PATH = "config/run_config.json"


class Settings(BaseSettings):
    # Storage
    CACHE_DIR: str = ".cache/apnea"
    RUN_CONFIG_PATH: str = RUN_CONFIG_PATH

    # Logging
    LOG_DIR: str = "logs"
    LOG_LEVEL: str = "INFO"

    # Parallel featurisation / reporting
    N_WORKERS: int = 1

    model_config = SettingsConfigDict(env_file=".env", env_prefix="APN_", extra="ignore")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PathsConfig(_Section):
    manifest: str = "data/synthetic/manifest.json"
    # Empty means "use APN_CACHE_DIR"
    cache_dir: str = ""
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"


class FeatureConfig(_Section):
    """Segmentation and log-Mel geometry"""
    sample_rate_hz: int = Field(16000, gt=0)
    duration_s: float = Field(30.0, gt=0)
    shift_s: float = Field(10.0, gt=0)
    window_ms: float = Field(50.0, gt=0)
    shift_ms: float = Field(20.0, gt=0)
    mel_bins: int = Field(64, ge=1, le=256)
    n_fft: int = Field(1024, ge=16)
    log_floor: float = Field(1e-10, gt=0)

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.model_dump()).encode()).hexdigest()

    def frames_per_segment(self) -> int:
        n_samples = int(round(self.duration_s * self.sample_rate_hz))
        hop = int(round(self.shift_ms * self.sample_rate_hz / 1000.0))
        return int(math.ceil(n_samples / hop))

    def trace_points(self, effort_rate_hz: int = 32) -> int:
        return int(round(self.duration_s * effort_rate_hz))


class EffortModelConfig(_Section):
    """CNN-BiLSTM effort regressor geometry"""
    input_frames: int = Field(1500, ge=8)
    mel_bins: int = Field(64, ge=1)
    channels: Tuple[int, ...] = (32, 64, 128)
    pool: Tuple[int, int] = (2, 4)
    kernel_size: int = Field(3, ge=1)
    hidden_size: int = Field(64, ge=1)
    trace_points: int = Field(960, ge=2)
    embedding: Literal["mean", "final"] = "mean"

    @model_validator(mode="after")
    def _check_geometry(self):
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if not self.channels or min(self.channels) < 1 or min(self.pool) < 1:
            raise ValueError("channels and pool sizes must be positive")
        if self.n_steps < 2 or self.freq_out < 1:
            raise ValueError("pooling schedule collapses the input")
        return self

    @property
    def n_steps(self) -> int:
        steps = self.input_frames
        for _ in self.channels:
            steps //= self.pool[0]
        return steps

    @property
    def freq_out(self) -> int:
        bins = self.mel_bins
        for _ in self.channels:
            bins //= self.pool[1]
        return bins


class OsaModelConfig(_Section):
    """Audio-only CNN encoder and fusion head geometry"""
    input_frames: int = Field(1500, ge=8)
    mel_bins: int = Field(64, ge=1)
    channels: Tuple[int, ...] = (16, 32, 64)
    pool: Tuple[int, int] = (4, 4)
    kernel_size: int = Field(3, ge=1)
    embedding_dim: int = Field(512, ge=1)
    fusion_dim: int = Field(256, ge=1)

    @model_validator(mode="after")
    def _check_geometry(self):
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if self.time_out < 1 or self.freq_out < 1:
            raise ValueError("pooling schedule collapses the input")
        return self

    @property
    def time_out(self) -> int:
        frames = self.input_frames
        for _ in self.channels:
            frames //= self.pool[0]
        return frames

    @property
    def freq_out(self) -> int:
        bins = self.mel_bins
        for _ in self.channels:
            bins //= self.pool[1]
        return bins

    @property
    def flat_dim(self) -> int:
        return self.channels[-1] * self.time_out * self.freq_out


class TrainingConfig(_Section):
    lr: float = Field(1e-3, gt=0, le=1.0)
    batch_size: int = Field(32, ge=1)
    max_epochs: int = Field(100, ge=1)
    patience: int = Field(10, ge=1)
    # Hard cap on optimizer steps; None trains full epochs
    max_steps: Optional[int] = Field(None, ge=1)


class ScoringConfig(_Section):
    threshold: float = Field(0.5, gt=0, lt=1)
    gap_s: float = Field(10.0, ge=0)
    min_dur_s: float = Field(10.0, ge=0)
    label_overlap_s: float = Field(10.0, gt=0)
    cutoffs: Tuple[float, ...] = (5.0, 15.0, 30.0)


class FoldConfig(_Section):
    k: int = Field(10, ge=3)
    fold: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_fold(self):
        if self.fold >= self.k:
            raise ValueError(f"fold {self.fold} out of range for k={self.k}")
        return self


class AlignmentConfig(_Section):
    max_lag_s: float = Field(30.0, gt=0)
    rate_hz: int = Field(500, gt=0)


class RunConfig(_Section):
    seed: int = Field(0, ge=0)
    paths: PathsConfig = PathsConfig()
    features: FeatureConfig = FeatureConfig()
    effort_model: EffortModelConfig = EffortModelConfig()
    effort_training: TrainingConfig = TrainingConfig()
    osa_model: OsaModelConfig = OsaModelConfig()
    osa_training: TrainingConfig = TrainingConfig()
    scoring: ScoringConfig = ScoringConfig()
    folds: FoldConfig = FoldConfig()
    alignment: AlignmentConfig = AlignmentConfig()

    @model_validator(mode="after")
    def _check_geometry(self):
        frames = self.features.frames_per_segment()
        for name, model in (("effort_model", self.effort_model), ("osa_model", self.osa_model)):
            if (model.input_frames, model.mel_bins) != (frames, self.features.mel_bins):
                raise ValueError(
                    f"{name} expects {model.input_frames} x {model.mel_bins} log-Mel maps, "
                    f"features produce {frames} x {self.features.mel_bins}"
                )
        if self.effort_model.trace_points != self.features.trace_points():
            raise ValueError(
                f"effort_model.trace_points must be {self.features.trace_points()} for {self.features.duration_s} s segments"
            )
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form"""
        return hashlib.sha256(canonical_json(self.model_dump(mode="json")).encode()).hexdigest()

    def cache_dir(self) -> str:
        return self.paths.cache_dir or settings.CACHE_DIR


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    Load the run configuration from a JSON file

    Args:
        path: Config file path (defaults to settings.RUN_CONFIG_PATH)

    Returns:
        Validated RunConfig; defaults when the file does not exist
    """
    path = path or settings.RUN_CONFIG_PATH
    if not os.path.exists(path):
        logger.warning(f"Run config not found at {path}, using defaults")
        return RunConfig()

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigInvalid(f"cannot read {path}: {e}")

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigInvalid(f"invalid run config {path}: {e}")

    logger.info(f"Run config loaded from {path} (hash {config.config_hash()[:12]})")
    return config


def save_run_config(config: RunConfig, path: str):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.model_dump(mode="json"), f, indent=2, sort_keys=True)
        f.write("\n")


def apply_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """
    Override config values with dotted keys, e.g. {"effort_training.lr": 0.01}

    Args:
        config: Base configuration (not mutated)
        overrides: Mapping of dotted key -> value; None values are skipped

    Returns:
        A new validated RunConfig
    """
    data = config.model_dump(mode="json")
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigInvalid(f"unknown config key: {key}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigInvalid(f"unknown config key: {key}")
        node[parts[-1]] = value

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigInvalid(f"invalid override: {e}")


def parse_override(text: str) -> Tuple[str, Any]:
    """Parse a `key=value` flag; the value is read as JSON when possible."""
    if "=" not in text:
        raise ConfigInvalid(f"override must look like key=value: {text}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


# Global instance
settings = Settings()
