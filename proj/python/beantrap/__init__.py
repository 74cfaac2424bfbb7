"""Bean critical-state simulation of superconducting atom-chip traps."""

from ._beantrap import (
    Config,
    ConfigError,
    Error,
    FeasibilityError,
    GeometryError,
    RunResult,
    ValidationError,
    characteristic_field_gauss,
    compare_oracle,
    execute,
    load_config,
    parse_config,
    run,
    validate,
)

__all__ = [
    "Config",
    "ConfigError",
    "Error",
    "FeasibilityError",
    "GeometryError",
    "RunResult",
    "ValidationError",
    "characteristic_field_gauss",
    "compare_oracle",
    "execute",
    "load_config",
    "parse_config",
    "run",
    "validate",
]
