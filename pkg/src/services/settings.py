"""
CapMass 1.0 - Scenario Settings
Loads flat key = value scenario files, applies flag overrides and saves the
resolved configuration with each run.
"""
import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Optional

from dotenv import dotenv_values

from src.core.errors import ConfigError
from src.utils.constants import DEFAULT_SETTINGS, SETTING_CHOICES, SETTING_RANGES

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(key: str, value: Any) -> Any:
    """Convert a raw value to the type of the key's default and validate it."""
    if key not in DEFAULT_SETTINGS:
        raise ConfigError(f"unknown configuration key '{key}'")
    default = DEFAULT_SETTINGS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                result = value
            else:
                text = str(value).strip().lower()
                if text not in _TRUE | _FALSE:
                    raise ValueError(value)
                result = text in _TRUE
        elif isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            result = int(str(value).strip()) if not isinstance(value, (int, float)) else int(value)
        elif isinstance(default, float):
            result = float(value)
        else:
            result = "" if value is None else str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' expects {type(default).__name__}, got '{value}'") from None

    if key in SETTING_RANGES:
        lo, hi = SETTING_RANGES[key]
        if not lo <= result <= hi:
            raise ConfigError(f"'{key}' = {result} is outside [{lo}, {hi}]")
    if key in SETTING_CHOICES and result not in SETTING_CHOICES[key]:
        raise ConfigError(f"'{key}' must be one of {', '.join(SETTING_CHOICES[key])}, got '{result}'")
    return result


class ScenarioSettings:
    """
    Thread-safe scenario configuration seeded from DEFAULT_SETTINGS.
    Values from a config file are applied first, flag overrides after.
    """

    def __init__(self, config_path: Optional[Path] = None, overrides: Optional[dict] = None):
        self._settings: dict = dict(DEFAULT_SETTINGS)
        self._settings_lock = threading.Lock()
        if config_path is not None:
            self.load(config_path)
        if overrides:
            self.update(overrides)

    def load(self, path: Path) -> None:
        """Load a flat key = value scenario file."""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw = dotenv_values(path, interpolate=False)
        parsed = {key: coerce(key, value) for key, value in raw.items()}
        with self._settings_lock:
            self._settings.update(parsed)
        logger.debug("Loaded %d keys from %s", len(parsed), path)

    def update(self, values: dict) -> None:
        parsed = {key: coerce(key, value) for key, value in values.items()}
        with self._settings_lock:
            self._settings.update(parsed)

    def save(self, path: Path) -> Path:
        """Write the resolved configuration as JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
        return path

    def to_json(self) -> str:
        with self._settings_lock:
            payload = dict(self._settings)
        return json.dumps(payload, indent=4, sort_keys=True, ensure_ascii=False)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every key except the output directory."""
        with self._settings_lock:
            payload = {k: v for k, v in self._settings.items() if k != "output.dir"}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def get(self, key: str, default: Any = None) -> Any:
        """Get a setting value."""
        with self._settings_lock:
            return self._settings.get(key, default)

    def set(self, key: str, value: Any) -> None:
        """Set a setting value (validated)."""
        value = coerce(key, value)
        with self._settings_lock:
            self._settings[key] = value

    def get_all(self) -> dict:
        """Get all settings as a dictionary copy."""
        with self._settings_lock:
            return dict(self._settings)

    def reset_to_defaults(self) -> None:
        """Reset all settings to default values."""
        with self._settings_lock:
            self._settings = dict(DEFAULT_SETTINGS)

    def derived(self, key: str, value: Any) -> "ScenarioSettings":
        """Copy with one key changed (one sweep point)."""
        copy = ScenarioSettings()
        copy.update(self.get_all())
        copy.set(key, value)
        return copy
