"""
Centralized Environment Configuration
Loads and validates the logging environment variables with type safety
"""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load .env file if it exists
load_dotenv()

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


@dataclass
class EnvironmentConfig:
    """Type-safe environment configuration"""

    log_level: str = "WARNING"
    log_format: str = "json"
    log_sink: str = "stderr"
    log_dir: str = "logs"

    @classmethod
    def from_env(cls) -> "EnvironmentConfig":
        """Load configuration from environment variables"""
        return cls(
            log_level=os.getenv("SAMP_LOG", "WARNING").upper(),
            log_format=os.getenv("SAMP_LOG_FORMAT", "json").lower(),
            log_sink=os.getenv("SAMP_LOG_SINK", "stderr").lower(),
            log_dir=os.getenv("SAMP_LOG_DIR", "logs"),
        )

    def validate(self) -> None:
        """Validate configuration values"""
        if self.log_level not in LOG_LEVELS:
            raise ValueError(f"Invalid SAMP_LOG: {self.log_level}")

        if self.log_format not in ["json", "text"]:
            raise ValueError(f"Invalid SAMP_LOG_FORMAT: {self.log_format}")

        if self.log_sink not in ["stderr", "stdout", "file"]:
            raise ValueError(f"Invalid SAMP_LOG_SINK: {self.log_sink}")


def get_config() -> EnvironmentConfig:
    """Load and validate the environment, falling back to defaults on bad values"""
    env_config = EnvironmentConfig.from_env()
    try:
        env_config.validate()
    except ValueError:
        env_config = EnvironmentConfig()
    return env_config
