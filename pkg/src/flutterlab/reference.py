"""Access to the shipped reference configuration and its frozen values."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .config import RunConfig, load_config

CONFIG_NAME = "reference.json"
VALUES_NAME = "reference_values.json"


def data_path(name: str) -> Path:
    return Path(str(resources.files("flutterlab") / "data" / name))


def reference_config() -> RunConfig:
    """The reference wing with eight feathers and frozen per-law gains."""
    return load_config(data_path(CONFIG_NAME))


def reference_values() -> dict:
    """Numbers frozen by the provisioning script (flutter speed, gains, ...)."""
    return json.loads(data_path(VALUES_NAME).read_text())
