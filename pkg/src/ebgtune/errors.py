"""Exception types shared across the package."""


class EbgtuneError(Exception):
    """Base class for all package errors."""


class ConfigError(EbgtuneError):
    """Invalid or malformed configuration / scenario document."""


class EmptyMapError(EbgtuneError):
    """Performance map queried before any support was initialized."""


class InsufficientDataError(EbgtuneError):
    """Not enough populated supports to run a numerical check."""


class SimulationDiverged(EbgtuneError):
    """Plant state left the sanity envelope during an episode."""


class NoStableRegionError(EbgtuneError):
    """Action-bounds grid search found no cell with a finite score."""
