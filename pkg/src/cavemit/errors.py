"""Shared exception types."""


class ConfigError(ValueError):
    """A run configuration value is missing, unknown, or invalid."""


class NumericalGuardError(RuntimeError):
    """A runtime numerical guard tripped (divergence, hop-probability overflow, ...)."""


class DegenerateGeometryError(NumericalGuardError):
    """Adiabatic surfaces are degenerate at the current field displacement."""
