"""Exception types shared across the package."""


class DtnLabError(Exception):
    """Base class for package-specific failures."""


class MeshQualityError(DtnLabError):
    """Triangulation cannot meet the requested quality floor."""


class SolverError(DtnLabError):
    """A linear solve failed or produced an unacceptable residual."""


class ChartError(DtnLabError):
    """A boundary chart cannot represent its piece of the boundary as a graph."""


class ConfigError(DtnLabError):
    """Scenario configuration is missing, malformed, or inconsistent."""
