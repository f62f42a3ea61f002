"""Episode orchestration, training, bounds detection, and baselines."""

import numpy as np
import pytest

from ebgtune.errors import NoStableRegionError
from ebgtune.events import TriggerConfig
from ebgtune.game import ActionBounds, GainId, Player, UtilityParams, UtilityVariant
from ebgtune.plant import PlantParams, Scenario, Segment, make_benchmark_scenario
from ebgtune.tuner import (
    GameConfig,
    derive_seeds,
    detect_action_bounds,
    evaluate_baseline,
    init_maps,
    run_episode,
    run_fixed_gains,
    train,
)

PP = PlantParams()
TRIG = TriggerConfig(theta_h=0.5, theta_l=-0.5, t_w=20.0, sample_dt=0.1)


def _game(**kw):
    defaults = dict(
        players={
            "kp": Player(id=GainId.P, bounds=ActionBounds(0.0, 10.0), barrier_coeff=0.8),
            "ki": Player(id=GainId.I, bounds=ActionBounds(0.0, 0.17), barrier_coeff=10.0),
        },
        utilities={
            "kp": UtilityParams(0.3, 0.3, 1.0, UtilityVariant.TYPE2),
            "ki": UtilityParams(0.1, 0.1, 1.0, UtilityVariant.TYPE2),
        },
        trigger=TRIG,
        learner="gb",
        learning_rate=30.0,
        eps0=0.5,
        decay=0.9,
        episodes=5,
        resolution=(4, 32),
        gamma_map=1.0e-4,
    )
    defaults.update(kw)
    return GameConfig(**defaults)


def _quiet_scenario():
    """Constant mild load: the error never leaves the trigger envelope."""
    return Scenario(
        duration=500.0,
        segments=(Segment(0.0, 0.0, 295.15, 292.65),),
    )


def _step_scenario():
    """A single decisive load step that crosses the upper threshold once."""
    return Scenario(
        duration=1500.0,
        segments=(
            Segment(0.0, 0.0, 298.15, 292.65),
            Segment(200.0, 4.0, 298.15, 292.65),
        ),
    )


def test_game_config_validation():
    with pytest.raises(ValueError):
        _game(players={}, utilities={})
    with pytest.raises(ValueError):
        _game(learner="sgd")
    with pytest.raises(ValueError):
        _game(learner="gb", learning_rate=0.0)
    with pytest.raises(ValueError):
        _game(episodes=-1)
    g = _game()
    with pytest.raises(ValueError):
        GameConfig(
            players=g.players,
            utilities={"kp": g.utilities["kp"]},
            trigger=TRIG,
        )


def test_derive_seeds_stable_and_independent():
    a = derive_seeds(3)
    b = derive_seeds(3)
    assert set(a) == {"scenario", "map_kp", "map_ki", "map_kd",
                      "exploration", "baseline"}
    for name in a:
        ra = np.random.default_rng(a[name]).integers(0, 2**31, 4)
        rb = np.random.default_rng(b[name]).integers(0, 2**31, 4)
        assert np.array_equal(ra, rb)
    c = derive_seeds(4)
    assert not np.array_equal(
        np.random.default_rng(a["scenario"]).integers(0, 2**31, 4),
        np.random.default_rng(c["scenario"]).integers(0, 2**31, 4),
    )


def test_no_trigger_scenario_keeps_gains_constant():
    report, trace = run_fixed_gains(
        {"kp": 5.0, "ki": 0.05}, _quiet_scenario(), PP, TRIG, collect_trace=True
    )
    assert report.events == 0
    assert not report.open_at_end
    assert np.all(trace[:, 5] == 5.0)
    assert np.all(trace[:, 6] == 0.05)


def test_single_step_scenario_has_exactly_one_event():
    report, _ = run_fixed_gains({"kp": 8.0, "ki": 0.1}, _step_scenario(), PP, TRIG)
    assert report.events == 1
    ev = report.event_log[0]
    assert not ev.truncated
    assert ev.t_end - ev.t_start >= TRIG.t_w
    assert ev.peak >= TRIG.theta_h


def test_run_episode_evaluation_is_deterministic_and_pure():
    game = _game()
    maps = init_maps(game, derive_seeds(0))
    scen = _step_scenario()
    snapshot = {k: m.actions.copy() for k, m in maps.items()}
    r1, _ = run_episode(game, scen, PP, maps, train=False)
    r2, _ = run_episode(game, scen, PP, maps, train=False)
    assert r1.avg_settling_time == r2.avg_settling_time
    assert r1.max_overshoot == r2.max_overshoot
    for k, m in maps.items():
        assert np.array_equal(m.actions, snapshot[k])  # evaluation never learns


def test_run_episode_training_requires_rng():
    game = _game()
    maps = init_maps(game, derive_seeds(0))
    with pytest.raises(ValueError):
        run_episode(game, _step_scenario(), PP, maps, train=True)


def test_training_updates_maps_and_freezes_gains_per_event():
    game = _game(episodes=3)
    scen = make_benchmark_scenario("static", seed=1, n_cycles=2)
    result = train(game, scen, PP, master_seed=0)
    assert len(result.reports) == 3
    assert any(m.initialized.any() for m in result.maps.values())
    for report in result.reports:
        for ev in report.event_log:
            assert set(ev.actions_frozen) == {"kp", "ki"}
            assert 0.0 <= ev.actions_frozen["kp"] <= 10.0
            assert 0.0 <= ev.actions_frozen["ki"] <= 0.17


def test_training_zero_episodes_leaves_maps_untouched():
    game = _game(episodes=0)
    result = train(game, make_benchmark_scenario("static", seed=1), PP, master_seed=0)
    assert result.reports == []
    assert not any(m.initialized.any() for m in result.maps.values())


def test_best_response_stored_utilities_monotone():
    game = _game(learner="br", episodes=6)
    scen = make_benchmark_scenario("static", seed=1, n_cycles=2)
    seeds = derive_seeds(0)
    maps = init_maps(game, seeds)
    rng = np.random.default_rng(seeds["exploration"])
    prev = {k: m.utilities.copy() for k, m in maps.items()}
    for ep in range(game.episodes):
        run_episode(game, scen, PP, maps, train=True, episode_index=ep, rng=rng)
        for k, m in maps.items():
            assert np.all(m.utilities >= prev[k])
            prev[k] = m.utilities.copy()


def test_bounds_detection_box_inside_ranges():
    scen = make_benchmark_scenario("static", seed=0, n_cycles=1)
    res = detect_action_bounds(
        scen, PP, TRIG, kp_range=(0.0, 10.0), ki_range=(0.0, 0.17),
        resolution=(6, 6),
    )
    assert 0.0 <= res.kp_bounds[0] < res.kp_bounds[1] <= 10.0
    assert 0.0 <= res.ki_bounds[0] < res.ki_bounds[1] <= 0.17
    assert res.scores.shape == (6, 6)
    assert 0.0 < res.area_fraction((0.0, 10.0), (0.0, 0.17)) <= 1.0


def test_bounds_detection_no_stable_region():
    # an impossible dwell: no cell can hold the error inside the envelope
    scen = make_benchmark_scenario("static", seed=0, n_cycles=1)
    trig = TriggerConfig(theta_h=0.001, theta_l=-0.001, t_w=300.0, sample_dt=0.1)
    with pytest.raises(NoStableRegionError):
        detect_action_bounds(
            scen, PP, trig, kp_range=(0.0, 0.01), ki_range=(0.0, 0.001),
            resolution=(2, 2), dwell=100.0,
        )


def test_bounds_detection_validates_resolution():
    scen = make_benchmark_scenario("static", seed=0)
    with pytest.raises(ValueError):
        detect_action_bounds(scen, PP, TRIG, (0.0, 10.0), (0.0, 0.17),
                             resolution=(1, 5))


def test_baseline_reports_divergence_not_fatal():
    # with a tiny capacitance an uncontrolled 4 kW load leaves the sanity
    # envelope within seconds; the report flags it instead of raising
    plant = PlantParams(c_t=50.0)
    scen = make_benchmark_scenario("static", seed=0, n_cycles=1)
    gains = [{"kp": 0.0, "ki": 0.0}, {"kp": 10.0, "ki": 0.17}]
    reports = evaluate_baseline(gains, scen, plant, TRIG)
    assert len(reports) == 2
    assert all(r.gains is not None for r in reports)
    assert reports[0].diverged


def test_baseline_empty_list():
    assert evaluate_baseline([], make_benchmark_scenario("static"), PP, TRIG) == []
