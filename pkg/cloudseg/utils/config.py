"""Configuration management for cloudseg."""
from __future__ import annotations
from typing import Dict, Any, Optional
import copy
import os
import json
import logging

from cloudseg.core.errors import ConfigError
from cloudseg.utils.constants import DEFAULT_LABEL_CODES, DEFAULT_RESOLUTION, DEFAULT_THRESHOLDS

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "CLOUDSEG_CONFIG"

# Default configuration
DEFAULT_CONFIG: Dict[str, Any] = {
    "threshold_low": DEFAULT_THRESHOLDS[0],
    "threshold_high": DEFAULT_THRESHOLDS[1],
    "label_codes": dict(DEFAULT_LABEL_CODES),
    "epochs": 300,
    "batch_size": 4,
    "learning_rate": 1e-3,
    "depth": 3,
    "base_channels": 16,
    "resolution": DEFAULT_RESOLUTION,
    "log_every": 10,
    "profiling_enabled": False,
}


class Config:
    """Settings file merged over DEFAULT_CONFIG."""

    def __init__(self, config_file: Optional[str] = None):
        self.settings: Dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)
        self.config_file = config_file or os.environ.get(CONFIG_ENV_VAR) \
            or os.path.expanduser("~/.cloudseg_config.json")
        self._load_config()

    def _load_config(self) -> None:
        """Load configuration from file if exists."""
        try:
            if os.path.exists(self.config_file):
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    self.settings.update(json.load(f))
        except Exception as e:
            logger.warning("Failed to load config %s: %s", self.config_file, e)

    def save(self) -> None:
        """Save current configuration to file."""
        try:
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(self.settings, f, indent=2, sort_keys=True)
        except Exception as e:
            logger.warning("Failed to save config %s: %s", self.config_file, e)

    def get(self, key: str, default: Any = None) -> Any:
        return self.settings.get(key, default)

    def set(self, key: str, value: Any) -> None:
        self.settings[key] = value

    def label_codes(self) -> Dict[str, int]:
        """Gray code per label from the ``label_codes`` setting; three distinct 8-bit values."""
        codes = self.settings.get("label_codes") or DEFAULT_LABEL_CODES
        try:
            table = {k: int(codes[k]) for k in ("sky", "thin", "thick")}
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"label_codes needs integer sky/thin/thick entries: {e}")
        if len(set(table.values())) != 3 or not all(0 <= v <= 255 for v in table.values()):
            raise ConfigError(f"label_codes must be three distinct values in 0..255, got {table}")
        return table


# Global config instance
config = Config()
