"""
Configuration manager for EventKernel.

Settings are grouped in sections. A JSON config file is merged over the
defaults, generator-aware defaults fill what neither set, and command-line
flags override everything.
"""

import copy
import json
import logging
from typing import Any, Dict, Optional

from error_handling import ConfigError
from utils.constants import (
    DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN, DEFAULT_SMOOTHNESS, CLIP_LOWER, CLIP_UPPER,
    DEFAULT_SOFTPLUS_BETA, LINK_SOFTPLUS, LINK_ELU_PLUS_ONE,
    DEFAULT_SEGMENTS, ESTIMATOR_STRATIFIED, ENGINE_VECTORIZED,
    DEFAULT_LEARNING_RATE, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON, DEFAULT_WEIGHT_DECAY,
    SYNTHETIC_BATCH_SIZE, REAL_STYLE_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_PATIENCE,
    DEFAULT_TRUNCATION_MULTIPLIER, DEFAULT_GRID_POINTS, TYPE_AT_PREDICTED,
    GENERATOR_SUPPLY_CHAIN
)


class ConfigManager:
    """Loads, merges and saves sectioned run settings."""

    # None means "decided by the dataset's generator"
    DEFAULTS = {
        'model': {
            'embedding_dim': DEFAULT_EMBEDDING_DIM,
            'psi_hidden': list(DEFAULT_HIDDEN),
            'phi_hidden': list(DEFAULT_HIDDEN),
            'smoothness': DEFAULT_SMOOTHNESS,
            'clip_bounds': [CLIP_LOWER, CLIP_UPPER],
            'link': None,
            'softplus_beta': DEFAULT_SOFTPLUS_BETA,
        },
        'likelihood': {
            'segments': DEFAULT_SEGMENTS,
            'estimator': ESTIMATOR_STRATIFIED,
            'seed': 0,
            'engine': ENGINE_VECTORIZED,
        },
        'optimizer': {
            'learning_rate': DEFAULT_LEARNING_RATE,
            'beta1': DEFAULT_BETA1,
            'beta2': DEFAULT_BETA2,
            'epsilon': DEFAULT_EPSILON,
            'weight_decay': DEFAULT_WEIGHT_DECAY,
            'batch_size': None,
        },
        'training': {
            'epochs': DEFAULT_EPOCHS,
            'patience': DEFAULT_PATIENCE,
            'seed': 0,
            'shuffle': True,
        },
        'predict': {
            'truncation_multiplier': DEFAULT_TRUNCATION_MULTIPLIER,
            'inner_points': DEFAULT_GRID_POINTS,
            'outer_points': DEFAULT_GRID_POINTS,
            'type_at': TYPE_AT_PREDICTED,
            'mean_gap': None,
        },
        'simulate': {
            'n_train': 6000,
            'n_val': 200,
            'seed': 0,
            'rate': 0.5,
            'num_types': 1,
            'horizon': None,
            't_max': 30.0,
            'initial_inventory': 10,
            'reorder_point': 5,
            'reorder_quantity': 15,
            'lead_mean': 4.0,
            'demand_rate_range': [1.5, 3.5],
        },
    }

    # Per-generator values for keys left at None
    GENERATOR_DEFAULTS = {
        GENERATOR_SUPPLY_CHAIN: {
            'model': {'link': LINK_ELU_PLUS_ONE},
            'optimizer': {'batch_size': REAL_STYLE_BATCH_SIZE},
        },
        '*': {
            'model': {'link': LINK_SOFTPLUS},
            'optimizer': {'batch_size': SYNTHETIC_BATCH_SIZE},
        },
    }

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the configuration manager.

        Args:
            config_path: Optional JSON config file
        """
        self.config_path = config_path

    def get_default_settings(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.DEFAULTS)

    def load_settings(self) -> Dict[str, Dict[str, Any]]:
        """
        Defaults with the config file (if any) merged over them.

        Raises:
            ConfigError: unreadable file, unknown section or key
        """
        settings = self.get_default_settings()
        if not self.config_path:
            return settings
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {self.config_path}", original_error=e)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file is not valid JSON: {self.config_path}", original_error=e)
        if not isinstance(data, dict):
            raise ConfigError(f"Config file must hold a JSON object: {self.config_path}")

        self._merge(settings, data, source=str(self.config_path))
        logging.debug(f"Loaded settings from {self.config_path}")
        return settings

    def apply_overrides(self, settings: Dict[str, Dict[str, Any]],
                        overrides: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        """Merge flag values; None means the flag was not given."""
        cleaned = {section: {k: v for k, v in values.items() if v is not None}
                   for section, values in overrides.items()}
        self._merge(settings, cleaned, source="command line")
        return settings

    def apply_generator_defaults(self, settings: Dict[str, Dict[str, Any]],
                                 generator: Optional[str]) -> Dict[str, Dict[str, Any]]:
        """Fill keys still at None from the dataset generator's defaults."""
        defaults = self.GENERATOR_DEFAULTS.get(generator, self.GENERATOR_DEFAULTS['*'])
        for section, values in defaults.items():
            for key, value in values.items():
                if settings[section].get(key) is None:
                    settings[section][key] = value
        return settings

    def _merge(self, settings, data, source):
        for section, values in data.items():
            if section not in self.DEFAULTS:
                raise ConfigError(f"Unknown config section '{section}' in {source}",
                                  suggestion=f"Sections: {', '.join(self.DEFAULTS)}")
            if not isinstance(values, dict):
                raise ConfigError(f"Config section '{section}' in {source} must be an object")
            for key, value in values.items():
                if key not in self.DEFAULTS[section]:
                    raise ConfigError(f"Unknown setting '{section}.{key}' in {source}",
                                      suggestion=f"Known keys: {', '.join(self.DEFAULTS[section])}")
                settings[section][key] = value
