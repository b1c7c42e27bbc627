"""
Configuration constants and logging setup for conecast.
"""
import os
import logging
from typing import Any, Dict, Optional

# Configure logging
logger = logging.getLogger(__name__)

LOG_ENV_VAR = "CONECAST_LOG"
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

MANIFEST_VERSION = 1

# Engine defaults; invariant checks are switched on by CONECAST_LOG=debug
ENGINE_CONFIG: Dict[str, Any] = {
    "mode": "per_row",
    "event_threshold": 0.0,
    "check_invariants": False,
}

# Relative tolerance; the absolute floor is rtol * abs_floor_ratio
TOLERANCE_CONFIG: Dict[str, float] = {
    "rtol": 1e-6,
    "abs_floor_ratio": 1e-3,
}

CSV_CONFIG: Dict[str, Any] = {
    "trace_tail": ["events", "live_scalars"],
    "bench_header": [
        "H", "W", "peak_live_scalars", "total_events", "wall_time", "traced_peak_bytes"
    ],
    "converge_header": ["t", "mean_distance"],
    "converge_note": "# distance = ||output_t - final||_2 / ||final||_2 (unnormalized when final is zero)",
    "float_format": "{:.10g}",
}

# Generator defaults used by the CLI
GENERATOR_CONFIG: Dict[str, Any] = {
    "depth": 2,
    "width_range": (8, 16),
    "channel_range": (1, 4),
    "head": "global_average",
    "input_density": 1.0,
}


def log_level_from_env() -> Optional[int]:
    """
    Resolve the log level requested through CONECAST_LOG.

    Returns:
        A logging level, or None when the variable is unset or unknown
    """
    value = os.environ.get(LOG_ENV_VAR, "").strip().upper()
    if not value:
        return None
    level = logging.getLevelName(value)
    return level if isinstance(level, int) else None


def debug_enabled() -> bool:
    """True when CONECAST_LOG=debug, which also turns on engine invariant checks."""
    return log_level_from_env() == logging.DEBUG


def setup_logging(default_level: int = logging.INFO) -> None:
    """
    Configure root logging once for command-line use.

    Args:
        default_level: Level used when CONECAST_LOG does not name one
    """
    level = log_level_from_env() or default_level
    logging.basicConfig(level=level, format=LOG_FORMAT)
    if level == logging.DEBUG:
        logger.debug("Debug logging on; engine invariant checks enabled")
