from typing import Any, Dict, Union

from src.utils.cloud_logger import get_logger


def log_event(component: str, event: Union[str, Dict[str, Any]], level: str = "info", **metadata):
    """Log a structured event attributed to `component`."""
    if isinstance(event, dict):
        payload = dict(event)
        message = str(payload.pop("event", "event"))
        metadata = {**payload, **metadata}
    else:
        message = event
    get_logger().log(level, f"{component}: {message}", component=component, **metadata)
