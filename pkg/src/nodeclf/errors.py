"""Exception hierarchy shared across the engine.

Config and data problems map to CLI exit code 2, run-time failures to 1.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class InputError(EngineError, ValueError):
    """An operation received inputs violating its preconditions."""


class LeakageError(InputError):
    """Label information would escape the split it belongs to."""


class ConfigError(EngineError):
    """Invalid configuration, model spec, or unknown config key."""


class DataError(ConfigError):
    """Dataset files missing, malformed, or failing validation."""


class RunError(EngineError):
    """A training or evaluation run failed (e.g. divergence)."""


class UndefinedMetricError(RunError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
