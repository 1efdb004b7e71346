"""Configuration management using pydantic-settings and YAML pipeline files."""
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.utils.exceptions import ConfigError


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Configuration
    ENVIRONMENT: str = Field(default="development")
    LOG_LEVEL: str = Field(default="INFO")
    LOG_DIR: str = Field(default="logs")
    CONFIG_PATH: str = Field(default="config/config.yaml")

    # Reproducibility
    DETERMINISTIC: bool = Field(default=False)
    SEED: int = Field(default=42)

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        """Upper-case the log level name."""
        return str(v).upper()


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance.

    Returns:
        Settings instance
    """
    return Settings()


class PipelineConfig(BaseModel):
    """Startup configuration of the recognition cascade."""

    vehicle_head_path: Path
    plate_head_path: Path
    ocr_net_path: Path
    class_map_path: Path
    word_map_path: Optional[Path] = None

    # Backbone / heads
    provider: Literal["toy", "intensity", "file"] = Field(default="intensity")
    feature_dir: Optional[Path] = None
    vehicle_band: Tuple[float, float] = Field(default=(0.0, 0.3))
    plate_band: Tuple[float, float] = Field(default=(0.75, 1.0))
    vehicle_feature_shape: Tuple[int, int, int] = Field(default=(10, 10, 1056))
    plate_feature_shape: Tuple[int, int, int] = Field(default=(8, 8, 2048))
    backbone_channels: int = Field(default=16, ge=1)
    vehicle_threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    plate_threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    head_dropout: float = Field(default=0.2, ge=0.0, lt=1.0)

    # OCR
    ocr_input_size: int = Field(default=64, ge=4)
    ocr_conv_channels: tuple = Field(default=(16, 32, 64, 128, 256))
    min_chars: int = Field(default=4, ge=1)
    max_retries: int = Field(default=3, ge=0)
    fista_lambda: float = Field(default=2e-3, gt=0.0)
    fista_decay: float = Field(default=0.5, gt=0.0, le=1.0)
    fista_max_iter: int = Field(default=150, ge=1)
    sharpness_threshold: float = Field(default=1e-4, ge=0.0)

    # Stream
    pipelined: bool = Field(default=True)
    queue_depth: int = Field(default=4, ge=1)
    deterministic: bool = Field(default=False)
    seed: int = Field(default=42)

    @field_validator("ocr_conv_channels", mode="before")
    @classmethod
    def parse_channels(cls, v: Union[str, list, tuple]) -> tuple:
        """Parse conv channel list from comma-separated string or sequence."""
        if isinstance(v, str):
            return tuple(int(c.strip()) for c in v.split(",") if c.strip())
        return tuple(int(c) for c in v)


def _resolve(base: Path, value: Any) -> Any:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def load_pipeline_config(path: Union[str, Path], check_files: bool = True) -> PipelineConfig:
    """Load a pipeline configuration from YAML.

    Relative file paths are resolved against the YAML file's directory.

    Args:
        path: Path to the YAML configuration file
        check_files: Verify that referenced model/data files exist

    Returns:
        Validated PipelineConfig

    Raises:
        ConfigError: If the file is missing, malformed or references missing files
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file '{path}' does not exist")

    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file '{path}' is not valid YAML: {e}") from e

    section: Dict[str, Any] = raw.get("pipeline", raw)
    base = path.parent
    for key in ("vehicle_head_path", "plate_head_path", "ocr_net_path", "class_map_path", "word_map_path", "feature_dir"):
        if key in section:
            section[key] = _resolve(base, section[key])

    try:
        config = PipelineConfig(**section)
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid pipeline config '{path}': {e}") from e

    if check_files:
        for key in ("vehicle_head_path", "plate_head_path", "ocr_net_path", "class_map_path", "word_map_path"):
            file_path = getattr(config, key)
            if file_path is not None and not Path(file_path).exists():
                raise ConfigError(f"{key} '{file_path}' does not exist")
        if config.provider == "file" and (config.feature_dir is None or not config.feature_dir.is_dir()):
            raise ConfigError(f"provider 'file' needs an existing feature_dir, got '{config.feature_dir}'")

    return config
