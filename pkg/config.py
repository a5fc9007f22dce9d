from pathlib import Path

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from constants import FormatStrings, PathName


class LogConfig(BaseModel):
    """Configuration for logging."""

    truncate_length: int = Field(default=500)
    level: str = Field(default="INFO")


class AppConfig(BaseSettings):
    """Process-wide settings read from the environment (prefix ``C3_``) or ``.env``."""

    model_config = SettingsConfigDict(
        env_prefix="C3_",
        env_file=".env",
        env_nested_delimiter="__",
        extra="ignore",
    )

    scorer_endpoint: str | None = Field(default=None)
    cache_dir: Path = Field(default_factory=lambda: Path(PathName.CACHE_DIR))
    out_dir: Path = Field(default_factory=lambda: Path(PathName.OUT_DIR))
    tool_version: str = Field(default="0.3.0")
    json_indent: int = Field(default=2)
    csv_float_format: str = Field(default=FormatStrings.CSV_FLOAT)
    log_config: LogConfig = Field(default_factory=LogConfig)


CONFIG = AppConfig()
