# config.py
"""
Central configuration module.

Responsibilities:
- Define default solver tolerances and experiment parameters
- Allow environment variable overrides (RGMUSIC_<KEY>)
- Parse flat `key = value` configuration files
- Provide validation and safe access utilities
- Support dynamic updates at runtime
"""

import os
from typing import Any, Dict, List, Optional

from error_handler import ConfigError


ENV_PREFIX = "RGMUSIC_"


# -----------------------------
# Default configuration values
# -----------------------------
DEFAULTS: Dict[str, Any] = {
    # Weight function u(x) = (1 + alpha) / (alpha + x)
    "alpha": 0.2,

    # Fixed-point scatter solver
    "fp_tol": 1e-9,
    "fp_max_iter": 200,
    "downdate_floor": 1e-12,

    # Spectral solvers
    "root_tol": 1e-13,
    "delta_max_iter": 500,          # blind fixed-point budget for delta
    "quadrature_size": 200000,      # quantile atoms for analytic tau laws
    "sweep_quadrature_size": 20000, # coarser quadrature for the MSE sweep
    "density_eps": 1e-3,
    "density_damping": 0.5,
    "density_max_iter": 5000,
    "density_atoms": 4000,          # quantile-reduced measure for the density grid
    "edge_offset": 1e-8,

    # Detection
    "detection_margin": 0.02,

    # Localization
    "spacing_d": 0.5,               # inter-antenna spacing in wavelengths
    "grid_step_deg": 0.02,
    "search": "full",               # full: [-90, 90) | window: mean angle +- window_deg
    "window_deg": 5.0,
    "refine_tol": 1e-7,

    # Experiments
    "scenario": "mse-sweep",
    "N": 20,
    "n": 100,
    "angles_deg": [10.0, 12.0],
    "powers_db": [5.0, 5.0],
    "power_sweep_db": [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
    "noise": "student",             # gaussian | student | outlier
    "beta": 100.0,
    "outlier_count": 1,
    "outlier_value": 100.0,
    "symbols": "gaussian",          # gaussian | qpsk
    "trials": 1000,
    "seed": 0,
    "workers": 1,
    "out": "out",
    "method": ["music", "robust-music", "gmusic", "gmusic-emp", "robust-gmusic", "robust-gmusic-emp"],
    "grid_start_deg": None,
    "grid_stop_deg": None,
    "histogram_bins": 60,
    "density_points": 400,
    "groups": [],                   # equal-power group label per source, e.g. 1, 1
    "input": None,

    # Logging & debugging
    "log_level": "INFO",
    "log_file": None,
}

_OVERRIDES: Dict[str, Any] = {}

LIST_KEYS = {"angles_deg", "powers_db", "power_sweep_db", "method", "groups"}
INT_KEYS = {"fp_max_iter", "delta_max_iter", "quadrature_size",
            "sweep_quadrature_size", "density_max_iter", "density_atoms", "N", "n",
            "outlier_count", "trials", "seed", "workers", "histogram_bins", "density_points"}
FLOAT_KEYS = {"alpha", "fp_tol", "downdate_floor", "root_tol", "density_eps",
              "density_damping", "edge_offset", "detection_margin", "spacing_d",
              "grid_step_deg", "window_deg", "refine_tol", "beta", "outlier_value",
              "grid_start_deg", "grid_stop_deg"}


# -----------------------------
# Utility functions
# -----------------------------
def get(key: str, default: Optional[Any] = None) -> Any:
    """
    Retrieve a configuration value.
    Priority: environment variable > runtime set() > DEFAULTS > provided default.
    """
    env_key = ENV_PREFIX + key.upper()
    if env_key in os.environ:
        return convert_value(key, os.environ[env_key])
    if key in _OVERRIDES:
        return _OVERRIDES[key]
    return DEFAULTS.get(key, default)


def set(key: str, value: Any) -> None:
    """
    Update a configuration value at runtime.
    """
    _OVERRIDES[key] = value


def reset() -> None:
    """
    Drop all runtime overrides.
    """
    _OVERRIDES.clear()


def all_config() -> Dict[str, Any]:
    """
    Return a snapshot of all configuration values,
    including environment overrides.
    """
    return {k: get(k) for k in DEFAULTS.keys()}


def validate(values: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
    """
    Validate configuration values.
    Returns a dict of errors keyed by config name.
    """
    cfg = dict(all_config())
    if values:
        cfg.update(values)
    errors: Dict[str, str] = {}

    if cfg["alpha"] <= 0:
        errors["alpha"] = f"alpha must be > 0, got {cfg['alpha']}"

    n_ant, n_samp = cfg["N"], cfg["n"]
    if n_ant < 1:
        errors["N"] = f"N must be >= 1, got {n_ant}"
    if n_samp <= n_ant:
        errors["n"] = f"need N < n, got N={n_ant}, n={n_samp}"
    elif cfg["alpha"] > 0 and (n_ant / n_samp) * (1.0 + cfg["alpha"]) >= 1.0:
        errors["n"] = f"c_n * phi_inf = {(n_ant / n_samp) * (1.0 + cfg['alpha']):.4f} must be < 1"

    if cfg["trials"] < 1:
        errors["trials"] = f"trials must be >= 1, got {cfg['trials']}"
    if cfg["workers"] < 1:
        errors["workers"] = f"workers must be >= 1, got {cfg['workers']}"

    if cfg["noise"] not in ("gaussian", "student", "outlier"):
        errors["noise"] = f"unknown noise model '{cfg['noise']}'"
    if cfg["noise"] == "student" and cfg["beta"] <= 2:
        errors["beta"] = f"Student-t requires beta > 2, got {cfg['beta']}"
    if cfg["noise"] == "outlier" and not (0 < cfg["outlier_count"] < n_samp):
        errors["outlier_count"] = f"outlier count must lie in [1, n), got {cfg['outlier_count']}"
    if cfg["symbols"] not in ("gaussian", "qpsk"):
        errors["symbols"] = f"unknown symbol law '{cfg['symbols']}'"

    angles, powers = cfg["angles_deg"], cfg["powers_db"]
    if len(angles) != len(powers):
        errors["powers_db"] = f"{len(powers)} powers for {len(angles)} angles"
    elif any(p2 > p1 for p1, p2 in zip(powers, powers[1:])):
        errors["powers_db"] = "powers must be sorted non-increasing"
    if len(dict.fromkeys(angles)) != len(angles):
        errors["angles_deg"] = "angles must be pairwise distinct"
    if len(angles) >= n_ant:
        errors["angles_deg"] = f"need L < N, got L={len(angles)}, N={n_ant}"
    if cfg["groups"] and len(cfg["groups"]) != len(angles):
        errors["groups"] = f"{len(cfg['groups'])} group labels for {len(angles)} sources"

    if cfg["search"] not in ("full", "window"):
        errors["search"] = f"unknown search range '{cfg['search']}'"
    if cfg["grid_step_deg"] <= 0:
        errors["grid_step_deg"] = f"grid step must be > 0, got {cfg['grid_step_deg']}"
    if not (0.0 < cfg["density_damping"] <= 1.0):
        errors["density_damping"] = f"damping must lie in (0, 1], got {cfg['density_damping']}"

    return errors


# -----------------------------
# Config files
# -----------------------------
def convert_value(key: str, raw: str) -> Any:
    """
    Convert a raw string to the type expected for `key`.
    """
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        # an empty list is meaningful (L = 0 sources)
        return [] if key in LIST_KEYS else None
    try:
        if key in LIST_KEYS:
            items = [item.strip() for item in text.split(",") if item.strip()]
            if key == "method":
                return items
            return [float(item) for item in items]
        if key in INT_KEYS:
            return int(float(text))
        if key in FLOAT_KEYS:
            return float(text)
    except ValueError as e:
        raise ConfigError(f"cannot parse value '{raw}' for key '{key}': {e}", key=key)
    return text


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse the flat `key = value` format. `#` starts a comment.
    """
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected 'key = value', got '{content}'", line=lineno)
        key, raw = (part.strip() for part in content.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key '{key}'", key=key, line=lineno)
        try:
            values[key] = convert_value(key, raw)
        except ConfigError as e:
            raise ConfigError(str(e), key=key, line=lineno)
    return values


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read and parse a configuration file.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_config_text(f.read())
    except OSError as e:
        raise ConfigError(f"cannot read config file '{path}': {e}")


def merge(*layers: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Merge configuration layers left to right on top of all_config();
    None values in a layer do not override.
    """
    merged = all_config()
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if value is not None:
                merged[key] = value
    return merged


def format_config(values: Dict[str, Any], keys: Optional[List[str]] = None) -> str:
    """
    Render values back into the `key = value` format.
    """
    lines = []
    for key in keys or sorted(values):
        value = values[key]
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines)
