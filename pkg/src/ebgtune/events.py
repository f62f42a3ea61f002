"""Event lifecycle: trigger on threshold crossing, reset after an
in-envelope dwell, and per-event metric accumulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf

from .game import EventMetrics

DWELL_EPS = 1e-9  # tolerance on the dwell comparison against t_w


@dataclass(frozen=True)
class TriggerConfig:
    theta_h: float  # upper error threshold, K
    theta_l: float  # lower error threshold, K (negative)
    t_w: float  # required in-envelope dwell before reset, s
    sample_dt: float  # controller sampling period, s

    def __post_init__(self):
        if not (self.theta_l < 0.0 < self.theta_h):
            raise ValueError("need theta_l < 0 < theta_h")
        if self.t_w <= 0:
            raise ValueError("t_w must be > 0")
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be > 0")


@dataclass
class EventRecord:
    """One trigger-to-reset window with its running accumulators."""

    t_start: float
    actions_frozen: dict = field(default_factory=dict)
    t_within_since: float | None = None
    t_end: float | None = None
    accum_s1: float = 0.0
    accum_s2: float = 0.0
    peak: float = 0.0
    t_t_min: float = inf  # signed extremes of the controlled temperature,
    t_t_max: float = -inf  # kept for overshoot/undershoot reporting in kelvin
    state_at_open: tuple = ()
    setpoint: float = 0.0
    truncated: bool = False
    utilities: dict = field(default_factory=dict)

    @property
    def closed(self) -> bool:
        return self.t_end is not None


def trigger_check(error: float, config: TriggerConfig, event_open: bool) -> bool:
    """True iff a new event opens: no event pending and the signed error
    left the [theta_l, theta_h] envelope."""
    if event_open:
        return False
    return error > config.theta_h or error < config.theta_l


def reset_check(
    error: float, now: float, event: EventRecord, config: TriggerConfig
) -> bool:
    """Advance the reset state machine; returns True when the event closes.

    The event closes once the error has stayed inside the envelope for a
    full dwell t_w; leaving the envelope restarts the dwell.
    """
    if event.closed:
        raise ValueError("event already closed")
    inside = config.theta_l <= error <= config.theta_h
    if not inside:
        event.t_within_since = None
        return False
    if event.t_within_since is None:
        event.t_within_since = now
    if now - event.t_within_since >= config.t_w - DWELL_EPS:
        event.t_end = now
        return True
    return False


def accumulate(event: EventRecord, s1: float, s2: float, t_t: float | None = None):
    """Add one sample's absolute state values to the running accumulators."""
    if event.closed:
        raise ValueError("cannot accumulate into a closed event")
    s1 = abs(s1)
    s2 = abs(s2)
    event.accum_s1 += s1
    event.accum_s2 += s2
    event.peak = max(event.peak, s1)
    if t_t is not None:
        event.t_t_min = min(event.t_t_min, t_t)
        event.t_t_max = max(event.t_t_max, t_t)


def close_truncated(event: EventRecord, t_end: float):
    """Close an event at episode end, keeping its metrics usable."""
    if event.closed:
        raise ValueError("event already closed")
    if t_end <= event.t_start:
        raise ValueError("t_end must be after t_start")
    event.t_end = t_end
    event.truncated = True


def finalize_metrics(event: EventRecord) -> EventMetrics:
    """Settling time, peak deviation, and L1 norms of a closed event."""
    if not event.closed:
        raise ValueError("cannot finalize an open event")
    return EventMetrics(
        settling_time=event.t_end - event.t_start,
        peak_deviation=event.peak,
        state1_l1=event.accum_s1,
        state2_l1=event.accum_s2,
    )
