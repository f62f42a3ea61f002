"""Players, action bounds, utility and barrier functions, and the numerical
checks backing the game's convergence conditions.

The players of the game are the PID gains themselves.  Each player gets a
utility computed from the metrics of one closed trigger-to-reset window,
minus a piecewise-linear barrier that penalizes gains outside the admissible
range.  Because all players share the same event metrics and differ only in
scalar weights and their own barrier, the cross-derivative structure needed
for Nash convergence can be verified numerically; that is what
``hessian_symmetry_check`` does.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from math import isfinite

import numpy as np

from .errors import InsufficientDataError


class GainId(enum.Enum):
    """Which PID gain a player controls."""

    P = "P"
    I = "I"
    D = "D"


class UtilityVariant(enum.Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"


@dataclass(frozen=True)
class ActionBounds:
    """Closed interval of admissible values for one gain."""

    min: float
    max: float

    def __post_init__(self):
        if not (isfinite(self.min) and isfinite(self.max)):
            raise ValueError("action bounds must be finite")
        if self.min >= self.max:
            raise ValueError(
                f"action bounds need min < max, got [{self.min}, {self.max}]"
            )

    @property
    def span(self) -> float:
        return self.max - self.min

    def clip(self, a: float) -> float:
        return min(max(a, self.min), self.max)


@dataclass(frozen=True)
class UtilityParams:
    """Weights of the event-metric terms of a player's utility.

    ``gamma`` keeps the deviation denominator away from zero when the
    accumulated state norms are tiny.
    """

    alpha_x: float
    alpha_y: float
    gamma: float = 1.0
    variant: UtilityVariant = UtilityVariant.TYPE1

    def __post_init__(self):
        if self.alpha_x < 0 or self.alpha_y < 0:
            raise ValueError("utility weights must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


@dataclass(frozen=True)
class EventMetrics:
    """Control-quality measurements of one closed event window.

    ``state1_l1`` / ``state2_l1`` are the sums of the per-sample absolute
    state values over the window, so settling_time / (sum + gamma) behaves
    like an inverse mean deviation.
    """

    settling_time: float
    peak_deviation: float
    state1_l1: float
    state2_l1: float

    def __post_init__(self):
        if self.settling_time <= 0:
            raise ValueError("settling_time must be > 0")
        if self.state1_l1 < 0 or self.state2_l1 < 0:
            raise ValueError("L1 norms must be >= 0")


@dataclass
class Player:
    """One gain of the PID controller, acting as a player of the game."""

    id: GainId
    bounds: ActionBounds
    barrier_coeff: float
    map: object | None = None  # PerformanceMap, attached by the tuner

    def __post_init__(self):
        if self.barrier_coeff <= 0:
            raise ValueError("barrier_coeff must be > 0")


def barrier(action: float, bounds: ActionBounds, coeff: float) -> float:
    """Piecewise-linear penalty confining a gain to its admissible range.

    Zero on the open interval, continuous at both boundaries, and growing
    with slope magnitude exactly ``coeff`` outside.
    """
    if coeff <= 0:
        raise ValueError("barrier coefficient must be > 0")
    if action <= bounds.min:
        return -coeff * (action - bounds.min)
    if action >= bounds.max:
        return coeff * (action - bounds.max)
    return 0.0


def utility_core(metrics: EventMetrics, params: UtilityParams) -> float:
    """Barrier-free part of the utility, shared by all players up to weights."""
    if metrics.peak_deviation <= 0:
        raise ValueError("peak_deviation must be > 0 for a triggered event")
    denom = metrics.state1_l1 + metrics.state2_l1 + params.gamma
    ratio = metrics.settling_time / denom
    inv_peak = 1.0 / metrics.peak_deviation
    if params.variant is UtilityVariant.TYPE1:
        return params.alpha_x * ratio * inv_peak + params.alpha_y * inv_peak
    return params.alpha_x * ratio + params.alpha_y * inv_peak


def utility(
    metrics: EventMetrics, action: float, player: Player, params: UtilityParams
) -> float:
    """Utility of one player for one closed event."""
    return utility_core(metrics, params) - barrier(
        action, player.bounds, player.barrier_coeff
    )


@dataclass(frozen=True)
class BarrierCheck:
    ok: bool
    margin: float
    max_slope: float


def _adjacent_pairs(shape: tuple[int, ...]):
    """Yield linear-index pairs of grid-axis neighbours."""
    n_dims = len(shape)
    strides = [1] * n_dims
    for d in range(n_dims - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    for idx in itertools.product(*(range(r) for r in shape)):
        lin = sum(i * s for i, s in zip(idx, strides))
        for d in range(n_dims):
            if idx[d] + 1 < shape[d]:
                yield lin, lin + strides[d]


def validate_barrier_coefficient(
    player: Player, min_action_gap: float | None = None
) -> BarrierCheck:
    """Empirically check that the barrier slope dominates the sampled
    utility gradient.

    Uses finite-difference slopes of stored utility vs stored action across
    adjacent initialized supports of the player's performance map.  Stored
    utilities at different supports come from different events, so a pair
    whose actions nearly coincide divides event-to-event variation by a
    vanishing action gap and yields no usable slope estimate; pairs closer
    than ``min_action_gap`` (default 5% of the action span) are skipped.
    """
    m = player.map
    if min_action_gap is None:
        min_action_gap = 0.05 * player.bounds.span
    if m is None:
        raise InsufficientDataError("player has no performance map")
    init = np.asarray(m.initialized)
    if int(init.sum()) < 2:
        raise InsufficientDataError("need >= 2 populated supports")
    actions = np.asarray(m.actions, dtype=float)
    utilities = np.asarray(m.utilities, dtype=float)
    max_slope = 0.0
    found = False
    for a_idx, b_idx in _adjacent_pairs(tuple(m.resolution)):
        if not (init[a_idx] and init[b_idx]):
            continue
        da = actions[b_idx] - actions[a_idx]
        if abs(da) < min_action_gap:
            continue
        found = True
        slope = abs((utilities[b_idx] - utilities[a_idx]) / da)
        max_slope = max(max_slope, slope)
    if not found:
        raise InsufficientDataError("no adjacent populated support pair")
    return BarrierCheck(
        ok=player.barrier_coeff > max_slope,
        margin=player.barrier_coeff - max_slope,
        max_slope=max_slope,
    )


@dataclass(frozen=True)
class SyntheticMetricModel:
    """Parameterizes event metrics directly by a probe state, keeping the
    plant out of the loop during structural checks."""

    settling_time: float = 50.0
    l1_scale: float = 100.0
    peak_offset: float = 0.5

    def metrics(self, state) -> EventMetrics:
        s1, s2 = abs(float(state[0])), abs(float(state[1]))
        return EventMetrics(
            settling_time=self.settling_time,
            peak_deviation=self.peak_offset + s1,
            state1_l1=self.l1_scale * s1,
            state2_l1=self.l1_scale * s2,
        )


@dataclass(frozen=True)
class SymmetryReport:
    """Max mixed-partial mismatch per convergence condition."""

    residuals: dict = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())


def hessian_symmetry_check(
    players: list[Player],
    utilities_params: list[UtilityParams],
    probe_points: list[tuple],
    step: float = 1e-4,
    tol: float = 1e-6,
    model: SyntheticMetricModel | None = None,
) -> SymmetryReport:
    """Numerically verify the symmetry conditions of the game's Hessian.

    ``probe_points`` is a list of (state, joint_action) pairs; mixed partials
    are approximated by central finite differences of the shipped utility
    evaluated on synthetic metrics parameterized by the state.

    The cross-state condition holds because the players share one
    state-dependent term, each scaled by its own weights; it is therefore
    evaluated on that shared term (the utility with unit weights), so that a
    pure rescaling between players does not register as asymmetry while a
    genuinely different state dependence (e.g. mixed variants) does.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if len(players) != len(utilities_params):
        raise ValueError("one UtilityParams per player required")
    model = model or SyntheticMetricModel()
    n = len(players)
    n_state = 2

    unit_params = [
        UtilityParams(alpha_x=1.0, alpha_y=1.0, gamma=p.gamma, variant=p.variant)
        for p in utilities_params
    ]

    def f(i: int, z: np.ndarray) -> float:
        # z = (s1, s2, a_0, ..., a_{n-1})
        metrics = model.metrics(z[:n_state])
        return utility(metrics, float(z[n_state + i]), players[i], utilities_params[i])

    def f_shared(i: int, z: np.ndarray) -> float:
        # the player's state-dependent term with its weights normalized out
        return utility_core(model.metrics(z[:n_state]), unit_params[i])

    def d2(i: int, z: np.ndarray, p: int, q: int, fn=None) -> float:
        fn = fn or f
        h = step
        zpp = z.copy(); zpp[p] += h; zpp[q] += h
        zpm = z.copy(); zpm[p] += h; zpm[q] -= h
        zmp = z.copy(); zmp[p] -= h; zmp[q] += h
        zmm = z.copy(); zmm[p] -= h; zmm[q] -= h
        return (fn(i, zpp) - fn(i, zpm) - fn(i, zmp) + fn(i, zmm)) / (4.0 * h * h)

    res_as = 0.0  # d2 U / (da ds)
    res_ss = 0.0  # d2 U / (ds ds)
    res_aa = 0.0  # d2 U / (da da)
    for state, joint in probe_points:
        z = np.concatenate([np.asarray(state, float), np.asarray(joint, float)])
        for i, j in itertools.product(range(n), repeat=2):
            for m, nn in itertools.product(range(n_state), repeat=2):
                lhs = d2(i, z, n_state + j, m)
                rhs = d2(j, z, n_state + i, nn)
                res_as = max(res_as, abs(lhs - rhs))
                lhs = d2(i, z, nn, m, fn=f_shared)
                rhs = d2(j, z, m, nn, fn=f_shared)
                res_ss = max(res_ss, abs(lhs - rhs))
            lhs = d2(i, z, n_state + j, n_state + i)
            rhs = d2(j, z, n_state + i, n_state + j)
            res_aa = max(res_aa, abs(lhs - rhs))
    return SymmetryReport(
        residuals={
            "cross_action_state": res_as,
            "cross_state_state": res_ss,
            "cross_action_action": res_aa,
        },
        tol=tol,
    )
