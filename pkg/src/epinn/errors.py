"""Exception hierarchy shared across the package."""


class EpinnError(Exception):
    """Base class for all package-specific errors."""


class GraphError(EpinnError):
    """Structural misuse: bad shapes, mismatched jet dimensions, empty batches."""


class NumericalError(EpinnError):
    """Non-finite values or a broken numeric invariant (e.g. alpha <= 1)."""


class ConfigError(EpinnError):
    """Invalid run configuration, preset name, or input file."""


class TrainingError(EpinnError):
    """Training could not produce a usable result (divergence, dead ensemble)."""
