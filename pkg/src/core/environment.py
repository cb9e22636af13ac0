"""Environment variable loading utilities."""

import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values

PREFIX = "OHPHASE_"

# Keys understood by runtime_defaults(), without the prefix
KNOWN_KEYS = ("OUTPUT_DIR", "THREADS", "FORMAT")


def load_environment(env_path: str) -> Dict[str, str]:
    """Load environment variables from a .env file.

    Args:
        env_path: Path to the .env file

    Returns:
        Dictionary of environment variables (keys without a value are dropped)
    """
    values = dotenv_values(env_path)
    return {key: value for key, value in values.items() if value is not None}


def runtime_defaults(env_path: Optional[str] = None) -> Dict[str, str]:
    """Collect OHPHASE_* settings from a .env file and the process environment.

    The process environment wins over the file. Returned keys have the prefix
    stripped and are limited to KNOWN_KEYS.

    Args:
        env_path: Optional .env path; defaults to ./.env when it exists

    Returns:
        Mapping such as {"THREADS": "4", "OUTPUT_DIR": "out"}
    """
    merged: Dict[str, str] = {}

    if env_path is None and Path(".env").is_file():
        env_path = ".env"
    if env_path is not None:
        merged.update(load_environment(env_path))
    merged.update(os.environ)

    defaults = {}
    for key in KNOWN_KEYS:
        value = merged.get(PREFIX + key)
        if value not in (None, ""):
            defaults[key] = value
    return defaults
