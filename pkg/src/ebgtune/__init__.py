"""Event-based game-theoretic self-tuning PID controllers on a surrogate
two-circuit thermal plant."""

from ._loop import backend as kernel_backend  # noqa: F401
from .events import EventRecord, TriggerConfig  # noqa: F401
from .game import (  # noqa: F401
    ActionBounds,
    EventMetrics,
    GainId,
    Player,
    UtilityParams,
    UtilityVariant,
    barrier,
    utility,
)
from .pid import PidGains, PidState  # noqa: F401
from .plant import PlantParams, PlantState, Scenario  # noqa: F401
from .tuner import GameConfig, RunReport  # noqa: F401

__version__ = "0.1.0"
