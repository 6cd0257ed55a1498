"""Configuration loader for wavae runs."""

import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

OUTPUT_ROOT_ENV = "WAVAE_OUTPUT_ROOT"
CONFIG_DIR_ENV = "WAVAE_CONFIG_DIR"
DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ConfigError(ValueError):
    """A configuration value, key or flag combination is invalid."""


class ConfigLoader:
    """Load and cache settings.yaml from the config directory."""

    def __init__(self, config_dir: Optional[Path] = None):
        if config_dir is None:
            config_dir = os.environ.get(CONFIG_DIR_ENV) or Path(__file__).parent.parent / "config"
        self.config_dir = Path(config_dir)
        self._settings: Optional[Dict[str, Any]] = None

    def _load_yaml_optional(self, filename: str) -> Dict[str, Any]:
        """Load a YAML file if it exists, otherwise return empty dict."""
        filepath = self.config_dir / filename
        if not filepath.exists():
            return {}
        with open(filepath, "r") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{filepath}: expected a mapping at the top level")
        return loaded

    @property
    def settings(self) -> Dict[str, Any]:
        """Load and cache settings.yaml."""
        if self._settings is None:
            self._settings = self._load_yaml_optional("settings.yaml")
        return self._settings

    @property
    def train_defaults(self) -> Dict[str, Any]:
        return dict(self.settings.get("train", {}) or {})

    @property
    def output_root(self) -> Path:
        # Environment wins over settings.yaml
        root = os.environ.get(OUTPUT_ROOT_ENV) or self.settings.get("output", {}).get("root", "runs")
        return Path(root)

    @property
    def log_level(self) -> str:
        return self.settings.get("logging", {}).get("level", "INFO")

    @property
    def log_format(self) -> str:
        return self.settings.get("logging", {}).get("format", DEFAULT_LOG_FORMAT)

    @property
    def log_file(self) -> Optional[str]:
        return self.settings.get("logging", {}).get("file")


def load_run_config(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a flat run-config object.

    JSON is a subset of YAML, so ``.json`` and ``.yaml`` files share one parser.
    Values are scalars or lists; a list names the values of a sweep grid.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        with open(path, "r") as f:
            loaded = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: could not parse config ({exc})") from exc
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path}: expected a flat object of training keys")
    nested = [key for key, value in loaded.items() if isinstance(value, dict)]
    if nested:
        raise ConfigError(f"{path}: nested mappings are not supported (keys {', '.join(map(str, nested))})")
    deep = [
        key for key, value in loaded.items() if isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value)
    ]
    if deep:
        raise ConfigError(f"{path}: list values must hold scalars (keys {', '.join(map(str, deep))})")
    return loaded


# Global config instance
_config: Optional[ConfigLoader] = None


def get_config() -> ConfigLoader:
    """Get the global config instance."""
    global _config
    if _config is None:
        _config = ConfigLoader()
    return _config


def reset_config() -> None:
    """Drop the cached global instance (tests switch config dirs)."""
    global _config
    _config = None
