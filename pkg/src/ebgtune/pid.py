"""Discrete-time PID controller with output saturation and conditional
anti-windup."""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

U_MIN_DEFAULT = 0.0  # valve control signal range, volts
U_MAX_DEFAULT = 10.0


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float  # per second
    kd: float = 0.0  # seconds

    def __post_init__(self):
        for g in (self.kp, self.ki, self.kd):
            if not isfinite(g) or g < 0:
                raise ValueError("gains must be finite and >= 0")


@dataclass
class PidState:
    integral: float = 0.0  # K*s
    prev_error: float = 0.0  # K
    u_min: float = U_MIN_DEFAULT
    u_max: float = U_MAX_DEFAULT

    def __post_init__(self):
        if self.u_min >= self.u_max:
            raise ValueError("need u_min < u_max")


def pid_step(state: PidState, gains: PidGains, error: float, dt: float) -> float:
    """One controller update; mutates the state, returns the clamped output.

    Anti-windup by conditional integration: the integral update is discarded
    whenever the raw output saturates and the error drives it further into
    saturation.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    integral_new = state.integral + error * dt
    u_raw = (
        gains.kp * error
        + gains.ki * integral_new
        + gains.kd * (error - state.prev_error) / dt
    )
    windup = (u_raw > state.u_max and error > 0.0) or (
        u_raw < state.u_min and error < 0.0
    )
    if not windup:
        state.integral = integral_new
    state.prev_error = error
    return min(max(u_raw, state.u_min), state.u_max)


def reset(state: PidState):
    """Zero the integrator and derivative memory; idempotent."""
    state.integral = 0.0
    state.prev_error = 0.0
