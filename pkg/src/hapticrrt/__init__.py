"""Haptic planning on quasi-static equilibrium manifolds."""

from .config import load, shipped
from .geometry import ConfigError
from .potentials import ConfigPoint, DerivativeBundle, build_scenario, evaluate_bundle, model_from_config

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConfigPoint",
    "DerivativeBundle",
    "build_scenario",
    "evaluate_bundle",
    "load",
    "model_from_config",
    "shipped",
]
