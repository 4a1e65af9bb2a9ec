import copy
import os
import yaml
import logging

_DEFAULTS = {
    'logging': {'level': 'INFO'},
    'quadrature': {'rel_tol': 1.0e-8, 'limit': 200},
    'spectral': {'span': 8.0, 'points': 4097, 'samples_per_t0': 16},
    'fock': {'max_modes': 8, 'max_dimension': 200000, 'capacity_tolerance': 1.0e-8},
    'verify': {'operator_tolerance': 1.0e-8, 'margin_tolerance': 1.0e-9},
    'output': {'format': 'table', 'seed': 1234},
}


def _deep_merge(base, override):
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Settings:
    _instance = None
    _config = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Settings, cls).__new__(cls)
            cls._instance._load_config()
        return cls._instance

    def _load_config(self):
        config_path = os.path.join(os.path.dirname(__file__), 'config.yaml')
        try:
            with open(config_path, 'r') as f:
                self._config = yaml.safe_load(f) or {}
        except FileNotFoundError:
            # Fallback default configuration if file is missing
            self._config = copy.deepcopy(_DEFAULTS)
            logging.warning(f"Config file not found at {config_path}. Using defaults.")

    def load_file(self, path):
        """Merge a user YAML document over the current configuration."""
        with open(path, 'r') as f:
            override = yaml.safe_load(f) or {}
        if not isinstance(override, dict):
            raise ValueError(f"Config file {path} must contain a mapping at top level")
        self.merge(override)

    def merge(self, override):
        self._config = _deep_merge(self._config, override)

    def reset(self):
        """Reload the packaged defaults, dropping any merged overrides."""
        self._load_config()

    def get(self, path, default=None):
        """
        Get a configuration value using dot notation.
        e.g. settings.get('quadrature.rel_tol', 1e-8)
        """
        keys = path.split('.')
        value = self._config
        for key in keys:
            if isinstance(value, dict):
                value = value.get(key)
            else:
                return default
            if value is None:
                return default
        return value

settings = Settings()
