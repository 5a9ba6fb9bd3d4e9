"""
Centralized structured logging
JSON or text records on stderr, stdout or a log file
"""

import json
import logging
import sys
from datetime import datetime
from pathlib import Path

from src.config.environment import EnvironmentConfig, get_config

LOGGER_NAME = "shapetrack"


class CloudLogger:
    """
    Centralized logging with selectable sink
    Supports: JSON formatting, structured metadata
    """

    def __init__(
        self,
        log_level: str = "WARNING",
        log_format: str = "json",
        sink: str = "stderr",
        log_dir: str = "logs",
    ):
        """
        Initialize logger

        Args:
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
            log_format: Format (json or text)
            sink: Destination (stderr, stdout, file)
            log_dir: Directory for file logs
        """
        self.log_level = getattr(logging, log_level.upper())
        self.log_format = log_format
        self.sink = sink
        self.log_dir = Path(log_dir)

        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(self.log_level)
        self.logger.propagate = False

        # Remove existing handlers
        self.logger.handlers = []
        self._setup_handler()

    @classmethod
    def from_environment(cls, env: EnvironmentConfig) -> "CloudLogger":
        return cls(
            log_level=env.log_level,
            log_format=env.log_format,
            sink=env.log_sink,
            log_dir=env.log_dir,
        )

    def _setup_handler(self):
        """Set up logging handler based on sink configuration"""
        if self.sink == "stdout":
            handler = logging.StreamHandler(sys.stdout)
        elif self.sink == "file":
            self.log_dir.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(self.log_dir / "shapetrack.log")
        else:
            handler = logging.StreamHandler(sys.stderr)

        if self.log_format == "json":
            handler.setFormatter(JSONFormatter())
        else:
            formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
            handler.setFormatter(formatter)

        self.logger.addHandler(handler)

    def log(self, level: str, message: str, **metadata):
        """
        Log a message with structured metadata

        Args:
            level: Log level (debug, info, warning, error, critical)
            message: Log message
            **metadata: Additional structured data
        """
        log_method = getattr(self.logger, level.lower())

        if self.log_format == "json":
            log_method(message, extra={"metadata": metadata})
        else:
            if metadata:
                message = f"{message} | {json.dumps(metadata, default=str)}"
            log_method(message)

    def debug(self, message: str, **metadata):
        self.log("debug", message, **metadata)

    def info(self, message: str, **metadata):
        self.log("info", message, **metadata)

    def warning(self, message: str, **metadata):
        self.log("warning", message, **metadata)

    def error(self, message: str, **metadata):
        self.log("error", message, **metadata)


class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging"""

    def format(self, record):
        log_data = {
            "timestamp": datetime.utcnow().isoformat() + "Z",
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        if hasattr(record, "metadata"):
            log_data["metadata"] = record.metadata

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


_cloud_logger = None


def get_logger() -> CloudLogger:
    """Get the process-wide logger, building it from the environment on first use"""
    global _cloud_logger
    if _cloud_logger is None:
        _cloud_logger = CloudLogger.from_environment(get_config())
    return _cloud_logger
