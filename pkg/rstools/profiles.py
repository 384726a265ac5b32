"""
Experiment settings: JSON profiles, key=value config files and .env defaults.

Precedence, lowest first: built-in defaults, profile, config file, flags.
"""

import os
import json
import logging

from dotenv import load_dotenv

from .errors import ParameterError


def normalize_key(key):
    return key.strip().lstrip("-").replace("-", "_").lower()


class ProfileStore:
    """Named JSON profiles under experiment_profiles/."""

    def __init__(self, profile_path=None):
        load_dotenv()
        self.profile_path = profile_path or os.getenv('RSCLT_PROFILE_DIR', 'experiment_profiles')

    def path_for(self, name):
        return os.path.join(self.profile_path, f"{name}.json")

    def load_profile(self, name):
        """Load a profile; keys are normalized flag names."""
        filepath = self.path_for(name)
        try:
            with open(filepath, 'r') as f:
                values = json.load(f)
        except FileNotFoundError:
            raise ParameterError(f"profile '{name}' not found at {filepath}")
        except json.JSONDecodeError as e:
            raise ParameterError(f"profile {filepath} is not valid JSON: {e}")
        if not isinstance(values, dict):
            raise ParameterError(f"profile {filepath} must hold a JSON object")
        logging.info(f"Loaded profile '{name}' from {filepath}")
        return {normalize_key(k): v for k, v in values.items()}

    def save_profile(self, name, values):
        if not os.path.exists(self.profile_path):
            os.makedirs(self.profile_path)
        filepath = self.path_for(name)
        with open(filepath, 'w') as f:
            json.dump({normalize_key(k): v for k, v in values.items()}, f, indent=4)
        logging.info(f"Profile saved to: {filepath}")
        return filepath


def read_config_file(path):
    """Parse `key=value` lines; `#` starts a comment."""
    values = {}
    try:
        with open(path, 'r') as f:
            lines = f.readlines()
    except FileNotFoundError:
        raise ParameterError(f"config file not found: {path}")
    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}, line {number}: expected key=value, got '{line}'")
        key, value = line.split("=", 1)
        if not key.strip():
            raise ParameterError(f"{path}, line {number}: empty key")
        values[normalize_key(key)] = value.strip()
    return values


def merge_settings(defaults, *layers):
    """Later layers override earlier ones; None values never override."""
    merged = dict(defaults)
    for layer in layers:
        for key, value in layer.items():
            if value is not None:
                merged[normalize_key(key)] = value
    return merged
