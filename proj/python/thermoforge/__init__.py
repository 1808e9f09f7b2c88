"""Python access to the thermoforge benchmark core."""

from ._core import (
    ConfigError,
    ConfigurationError,
    compatible,
    diffusion_analytic,
    flatness,
    geometric_mean,
    integrate,
    l2_relative_error,
    normalized_config,
    param_relative_error,
    system_info,
    systems,
    train,
    validate_config,
)

__all__ = [
    "ConfigError",
    "ConfigurationError",
    "compatible",
    "diffusion_analytic",
    "flatness",
    "geometric_mean",
    "integrate",
    "l2_relative_error",
    "normalized_config",
    "param_relative_error",
    "system_info",
    "systems",
    "train",
    "validate_config",
]
