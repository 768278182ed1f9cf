"""Error types. Each carries the machine-readable category the CLI reports."""


class ThzReconError(Exception):
    category = "error"


class ConfigError(ThzReconError, ValueError):
    category = "config-invalid"


class UnderResolvedGridError(ThzReconError, ValueError):
    category = "under-resolved-grid"


class CoverageError(ThzReconError, ValueError):
    category = "coverage"


class FitError(ThzReconError, RuntimeError):
    category = "fit-failure"
