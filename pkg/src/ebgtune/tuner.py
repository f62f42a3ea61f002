"""Closed-loop orchestration: episodes, event-frozen gain selection,
learning updates at event close, action-bound grid search, and baseline
evaluation.

One episode steps the plant and PID at a fixed sample period through the
compiled (or fallback) kernel.  Gains are selected from the performance
maps only when an event opens and stay frozen until after it closes; this
event-frozen property is what distinguishes the event-based game from the
per-timestep variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf, nan

import numpy as np

from . import _loop, events, pid
from .errors import NoStableRegionError, SimulationDiverged
from .game import Player, UtilityParams, UtilityVariant, utility, utility_core
from .perfmap import (
    PerformanceMap,
    explore_action,
    init_map,
    interpolate_action,
    update_best_response,
    update_gradient_based,
)
from .plant import PlantParams, Scenario

GAIN_KEYS = ("kp", "ki", "kd")

# Default state ranges for the performance maps: |T_T - T_set| and
# |T_Z - T_set| in kelvin.
DEFAULT_STATE_RANGES = ((0.0, 5.0), (0.0, 8.0))
DEFAULT_RESOLUTION = (4, 4)

BOUNDS_SCORE_PARAMS = UtilityParams(
    alpha_x=0.3, alpha_y=0.3, gamma=1.0, variant=UtilityVariant.TYPE1
)
BOUNDS_EXCITATION_K = 1.0  # initial offset above set point for cell scoring


@dataclass
class GameConfig:
    players: dict[str, Player]  # keyed by "kp" / "ki" / "kd"
    utilities: dict[str, UtilityParams]
    trigger: events.TriggerConfig
    learner: str = "gb"  # "br" best response | "gb" gradient based
    learning_rate: float = 30.0
    eps0: float = 0.5
    decay: float = 0.9
    episodes: int = 40
    resolution: tuple = DEFAULT_RESOLUTION
    state_ranges: tuple = DEFAULT_STATE_RANGES
    gamma_map: float = 0.01

    def __post_init__(self):
        if not self.players:
            raise ValueError("need at least one player")
        bad = set(self.players) - set(GAIN_KEYS)
        if bad:
            raise ValueError(f"unknown player keys: {sorted(bad)}")
        if set(self.players) != set(self.utilities):
            raise ValueError("players and utilities must use the same keys")
        if self.learner not in ("br", "gb"):
            raise ValueError("learner must be 'br' or 'gb'")
        if self.learner == "gb" and self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0 for gradient learning")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")


@dataclass
class RunReport:
    avg_settling_time: float
    max_overshoot: float  # absolute kelvin, >= event set point
    max_undershoot: float  # absolute kelvin, <= event set point
    events: int
    event_log: list = field(default_factory=list)
    diverged: bool = False
    open_at_end: bool = False
    gains: dict | None = None


def derive_seeds(master_seed: int) -> dict:
    """Fan one master seed out to independent named streams."""
    children = np.random.SeedSequence(master_seed).spawn(6)
    names = ("scenario", "map_kp", "map_ki", "map_kd", "exploration", "baseline")
    return dict(zip(names, children))


def init_maps(game: GameConfig, seeds: dict) -> dict[str, PerformanceMap]:
    """Fresh per-player maps, attached to their players."""
    maps = {}
    for key, player in game.players.items():
        maps[key] = init_map(
            game.state_ranges,
            game.resolution,
            player.bounds,
            seed=seeds[f"map_{key}"],
            gamma_map=game.gamma_map,
        )
        player.map = maps[key]
    return maps


def _plant_array(params: PlantParams) -> np.ndarray:
    return np.array(
        [
            params.c_t,
            params.c_z,
            params.q_max,
            params.cp,
            params.k_amb,
            params.t_ambient,
            params.chiller_gain,
            params.valve_tau,
        ]
    )


def _event_from_ev(record: events.EventRecord, ev: np.ndarray):
    record.t_within_since = None if ev[2] < 0 else float(ev[2])
    record.accum_s1 = float(ev[3])
    record.accum_s2 = float(ev[4])
    record.peak = float(ev[5])
    record.t_t_min = float(ev[6])
    record.t_t_max = float(ev[7])


def _open_ev(ev: np.ndarray, t: float):
    ev[0] = _loop.PHASE_OPEN
    ev[1] = t
    ev[2] = -1.0
    ev[3] = 0.0
    ev[4] = 0.0
    ev[5] = 0.0
    ev[6] = inf
    ev[7] = -inf


def _run_loop(
    scenario: Scenario,
    plant_params: PlantParams,
    trigger: events.TriggerConfig,
    select_gains,
    on_close=None,
    collect_trace: bool = False,
    raise_on_divergence: bool = True,
):
    """Core episode loop shared by learning, evaluation, and baseline runs.

    ``select_gains(state, exploring)`` returns the gain dict; it is called
    once for the initial commitment and once per event open.  ``on_close``
    receives (EventRecord, EventMetrics) for every closed event.

    With ``raise_on_divergence=False`` a sanity-envelope violation ends the
    episode early instead of raising: any open event is closed truncated so
    its (poor) metrics still reach ``on_close`` as a learning signal.
    """
    dt = trigger.sample_dt
    n_total = int(round(scenario.duration / dt))
    seg0 = scenario.segments[0]
    sv = np.array([seg0.setpoint, seg0.t_z_supply, 0.0, 0.0, 0.0])
    pp = _plant_array(plant_params)
    ev = np.zeros(8)
    ev[2] = -1.0
    trace = np.zeros((n_total if collect_trace else 1, 8))
    n_delay = int(round(plant_params.sensor_delay / dt))
    mb = np.full(max(n_delay, 1), sv[0])

    state0 = (abs(sv[0] - seg0.setpoint), abs(sv[1] - seg0.setpoint))
    gains = dict(select_gains(state0, False))
    loads_w = scenario.segment_loads_w()
    bounds_idx = [int(round(s.t_from / dt)) for s in scenario.segments]
    bounds_idx.append(n_total)

    event_log: list[events.EventRecord] = []
    open_event: events.EventRecord | None = None
    diverged_at = None

    for k, seg in enumerate(scenario.segments):
        if diverged_at is not None:
            break
        i = bounds_idx[k]
        i_end = bounds_idx[k + 1]
        while i < i_end:
            reason, i = _loop.run_span(
                sv,
                pp,
                ev,
                trace,
                collect_trace,
                mb,
                n_delay,
                gains.get("kp", 0.0),
                gains.get("ki", 0.0),
                gains.get("kd", 0.0),
                pid.U_MIN_DEFAULT,
                pid.U_MAX_DEFAULT,
                loads_w[k],
                seg.setpoint,
                seg.t_z_supply,
                trigger.theta_h,
                trigger.theta_l,
                trigger.t_w,
                dt,
                i,
                i_end,
            )
            t = i * dt
            if reason == _loop.REASON_TRIGGER:
                state = (abs(sv[0] - seg.setpoint), abs(sv[1] - seg.setpoint))
                gains = dict(select_gains(state, True))
                open_event = events.EventRecord(
                    t_start=t,
                    actions_frozen=dict(gains),
                    state_at_open=state,
                    setpoint=seg.setpoint,
                )
                _open_ev(ev, t)
            elif reason == _loop.REASON_RESET:
                _event_from_ev(open_event, ev)
                open_event.t_end = t
                metrics = events.finalize_metrics(open_event)
                if on_close is not None:
                    on_close(open_event, metrics)
                event_log.append(open_event)
                open_event = None
                ev[0] = _loop.PHASE_IDLE
                ev[2] = -1.0
            elif reason == _loop.REASON_DIVERGED:
                if raise_on_divergence:
                    raise SimulationDiverged(
                        f"plant left the sanity envelope at t={t:.1f} s "
                        f"(gains {gains})"
                    )
                diverged_at = t
                break
            # REASON_END falls through to the next segment

    open_at_end = False
    end_t = n_total * dt if diverged_at is None else diverged_at
    if open_event is not None:
        _event_from_ev(open_event, ev)
        events.close_truncated(open_event, end_t)
        metrics = events.finalize_metrics(open_event)
        if on_close is not None:
            on_close(open_event, metrics)
        event_log.append(open_event)
        open_at_end = True

    return (
        event_log,
        (trace if collect_trace else None),
        open_at_end,
        diverged_at is not None,
    )


def _report_from_log(event_log, open_at_end, gains=None, diverged=False) -> RunReport:
    if event_log:
        avg = float(np.mean([e.t_end - e.t_start for e in event_log]))
        over = max(max(e.t_t_max, e.setpoint) for e in event_log)
        under = min(min(e.t_t_min, e.setpoint) for e in event_log)
    else:
        avg, over, under = nan, nan, nan
    return RunReport(
        avg_settling_time=avg,
        max_overshoot=over,
        max_undershoot=under,
        events=len(event_log),
        event_log=event_log,
        diverged=diverged,
        open_at_end=open_at_end,
        gains=gains,
    )


def run_episode(
    game: GameConfig,
    scenario: Scenario,
    plant_params: PlantParams,
    maps: dict[str, PerformanceMap],
    train: bool,
    episode_index: int = 0,
    rng: np.random.Generator | None = None,
    collect_trace: bool = False,
):
    """One simulation episode; returns (RunReport, trace or None).

    Training episodes explore actions at event open and update the maps at
    event close with the configured learner; evaluation episodes use pure
    interpolation and leave the maps untouched.
    """
    if train and rng is None:
        raise ValueError("training needs an exploration rng")

    def select(state, exploring):
        out = {}
        for key, player in game.players.items():
            m = maps[key]
            if train and exploring:
                a = explore_action(
                    m,
                    state,
                    player.bounds,
                    episode_index,
                    rng,
                    game.eps0,
                    game.decay,
                )
            elif m.initialized.any():
                a = interpolate_action(m, state)
            else:
                # nothing learned yet: fall back to the random init action
                a = float(m.actions[m.nearest_index(state)])
            out[key] = player.bounds.clip(a)
        return out

    def on_close(event, metrics):
        for key, player in game.players.items():
            a = event.actions_frozen[key]
            u = utility(metrics, a, player, game.utilities[key])
            event.utilities[key] = u
            if train:
                if game.learner == "br":
                    update_best_response(maps[key], event.state_at_open, a, u)
                else:
                    # The secant slope scales as 1/span of the action range,
                    # so span^2 makes the step size span-relative and one
                    # learning_rate serves players of very different scales.
                    update_gradient_based(
                        maps[key],
                        event.state_at_open,
                        a,
                        u,
                        game.learning_rate * player.bounds.span**2,
                        trust_decay=game.decay,
                    )

    log, trace, open_at_end, diverged = _run_loop(
        scenario,
        plant_params,
        game.trigger,
        select,
        on_close,
        collect_trace,
        raise_on_divergence=not train,
    )
    return _report_from_log(log, open_at_end, diverged=diverged), trace


def run_fixed_gains(
    gains: dict,
    scenario: Scenario,
    plant_params: PlantParams,
    trigger: events.TriggerConfig,
    collect_trace: bool = False,
):
    """Constant-gain episode without any learning; events are still tracked
    so the same metrics apply."""

    def select(state, exploring):
        return gains

    log, trace, open_at_end, _ = _run_loop(
        scenario, plant_params, trigger, select, None, collect_trace
    )
    return _report_from_log(log, open_at_end, gains=dict(gains)), trace


@dataclass
class TrainResult:
    maps: dict
    reports: list  # one RunReport per training episode (the learning curve)


def train(
    game: GameConfig,
    scenario: Scenario,
    plant_params: PlantParams,
    master_seed: int,
) -> TrainResult:
    """Run the configured number of training episodes with decaying
    exploration; returns the final maps and the per-episode learning curve."""
    seeds = derive_seeds(master_seed)
    maps = init_maps(game, seeds)
    rng = np.random.default_rng(seeds["exploration"])
    reports = []
    for ep in range(game.episodes):
        report, _ = run_episode(
            game, scenario, plant_params, maps, train=True, episode_index=ep, rng=rng
        )
        reports.append(report)
    return TrainResult(maps=maps, reports=reports)


def evaluate_baseline(
    gain_list: list[dict],
    scenario: Scenario,
    plant_params: PlantParams,
    trigger: events.TriggerConfig,
) -> list[RunReport]:
    """Run each constant-gain controller; divergence is recorded per gain
    pair, not fatal."""
    reports = []
    for gains in gain_list:
        try:
            report, _ = run_fixed_gains(gains, scenario, plant_params, trigger)
        except SimulationDiverged:
            report = RunReport(
                avg_settling_time=nan,
                max_overshoot=nan,
                max_undershoot=nan,
                events=0,
                diverged=True,
                gains=dict(gains),
            )
        reports.append(report)
    return reports


@dataclass
class BoundsResult:
    kp_bounds: tuple
    ki_bounds: tuple
    scores: np.ndarray  # (len(kp_nodes), len(ki_nodes)), -inf = unstable
    kp_nodes: np.ndarray
    ki_nodes: np.ndarray

    def area_fraction(self, kp_range, ki_range) -> float:
        """Detected box area relative to the initial search rectangle."""
        full = (kp_range[1] - kp_range[0]) * (ki_range[1] - ki_range[0])
        box = (self.kp_bounds[1] - self.kp_bounds[0]) * (
            self.ki_bounds[1] - self.ki_bounds[0]
        )
        return box / full


def _score_cell(
    kp: float,
    ki: float,
    scenario: Scenario,
    plant_params: PlantParams,
    trigger: events.TriggerConfig,
    dwell: float,
    score_params: UtilityParams,
) -> float:
    """Utility of one frozen-gain cell on a single synthetic event spanning
    the dwell window; -inf when the loop diverges or never settles."""
    dt = trigger.sample_dt
    seg = scenario.segments[0]
    sv = np.array(
        [seg.setpoint + BOUNDS_EXCITATION_K, seg.t_z_supply, 0.0, 0.0, 0.0]
    )
    pp = _plant_array(plant_params)
    ev = np.zeros(8)
    _open_ev(ev, 0.0)
    trace = np.zeros((1, 8))
    n = int(round(dwell / dt))
    n_delay = int(round(plant_params.sensor_delay / dt))
    mb = np.full(max(n_delay, 1), sv[0])
    reason, i = _loop.run_span(
        sv,
        pp,
        ev,
        trace,
        False,
        mb,
        n_delay,
        kp,
        ki,
        0.0,
        pid.U_MIN_DEFAULT,
        pid.U_MAX_DEFAULT,
        seg.load_kw * 1000.0,
        seg.setpoint,
        seg.t_z_supply,
        trigger.theta_h,
        trigger.theta_l,
        trigger.t_w,
        dt,
        0,
        n,
    )
    if reason != _loop.REASON_RESET:
        return -inf
    record = events.EventRecord(t_start=0.0)
    _event_from_ev(record, ev)
    record.t_end = i * dt
    metrics = events.finalize_metrics(record)
    return utility_core(metrics, score_params)


def detect_action_bounds(
    scenario: Scenario,
    plant_params: PlantParams,
    trigger: events.TriggerConfig,
    kp_range: tuple,
    ki_range: tuple,
    resolution: tuple = (12, 12),
    dwell: float = 400.0,
    score_params: UtilityParams = BOUNDS_SCORE_PARAMS,
    percentile: float = 75.0,
) -> BoundsResult:
    """Grid search over frozen (K_P, K_I) cells; returns the bounding box of
    the cells scoring at or above the given percentile of finite scores."""
    if resolution[0] < 2 or resolution[1] < 2:
        raise ValueError("need resolution >= 2 per axis")
    kp_nodes = np.linspace(kp_range[0], kp_range[1], resolution[0])
    ki_nodes = np.linspace(ki_range[0], ki_range[1], resolution[1])
    scores = np.full((resolution[0], resolution[1]), -inf)
    for a, kp in enumerate(kp_nodes):
        for b, ki in enumerate(ki_nodes):
            scores[a, b] = _score_cell(
                kp, ki, scenario, plant_params, trigger, dwell, score_params
            )
    finite = scores[np.isfinite(scores)]
    if finite.size == 0:
        raise NoStableRegionError(
            "every grid cell diverged or failed to settle within the dwell"
        )
    threshold = np.percentile(finite, percentile)
    sel = scores >= threshold

    def _axis_bounds(nodes, mask_1d, step):
        chosen = nodes[mask_1d]
        lo, hi = float(chosen.min()), float(chosen.max())
        if lo == hi:  # degenerate box: widen by one grid step
            lo = max(lo - step, float(nodes[0]))
            hi = min(hi + step, float(nodes[-1]))
        return float(lo), float(hi)

    kp_bounds = _axis_bounds(
        kp_nodes, sel.any(axis=1), kp_nodes[1] - kp_nodes[0]
    )
    ki_bounds = _axis_bounds(
        ki_nodes, sel.any(axis=0), ki_nodes[1] - ki_nodes[0]
    )
    return BoundsResult(
        kp_bounds=kp_bounds,
        ki_bounds=ki_bounds,
        scores=scores,
        kp_nodes=kp_nodes,
        ki_nodes=ki_nodes,
    )
