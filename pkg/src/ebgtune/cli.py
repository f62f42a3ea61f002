"""Command-line front end: bounds / train / validate / baseline.

Every command is a pure function of (config, seed, input files); output
files carry a header embedding the config hash and seed so reruns are
byte-identical and attributable.

Exit codes: 0 success, 2 config error, 3 simulation divergence,
4 no stable region found.
"""

from __future__ import annotations

import functools
import sys
from math import isnan
from pathlib import Path

import click
import numpy as np
import yaml

from . import config as cfgmod
from . import tuner
from .errors import ConfigError, NoStableRegionError, SimulationDiverged
from .perfmap import load_maps, save_maps

EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_NO_STABLE_REGION = 4


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except SimulationDiverged as exc:
            click.echo(f"simulation diverged: {exc}", err=True)
            sys.exit(EXIT_DIVERGED)
        except NoStableRegionError as exc:
            click.echo(f"no stable region: {exc}", err=True)
            sys.exit(EXIT_NO_STABLE_REGION)
        except FileNotFoundError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="YAML config document; defaults apply if omitted.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Master seed override.")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory override.")(fn)
    return fn


def _setup(config_path, seed, out):
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out"] = out
    cfg = cfgmod.load_config(config_path, overrides)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def _header(cfg) -> list[str]:
    return [
        f"# config={cfgmod.config_hash(cfg)} seed={cfg['seed']}",
    ]


def _fmt(v) -> str:
    if isinstance(v, float):
        if isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def _write_csv(path, cfg, columns, rows):
    with open(path, "w") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _scenario_seed(cfg) -> int:
    seeds = tuner.derive_seeds(cfg["seed"])
    return cfgmod.seed_int(seeds["scenario"])


def _event_rows(reports):
    rows = []
    for label, report in reports:
        for e in report.event_log:
            rows.append(
                (
                    label,
                    e.t_start,
                    e.t_end,
                    e.t_end - e.t_start,
                    e.peak,
                    e.accum_s1,
                    e.accum_s2,
                    e.actions_frozen.get("kp", 0.0),
                    e.actions_frozen.get("ki", 0.0),
                    int(e.truncated),
                )
            )
    return rows


EVENT_COLUMNS = (
    "run",
    "t_start",
    "t_end",
    "settling_time",
    "peak_deviation",
    "state1_l1",
    "state2_l1",
    "kp",
    "ki",
    "truncated",
)


@click.group()
def main():
    """Event-based game-theoretic self-tuning of PID controllers."""


@main.command("bounds")
@_common
@click.option("--scenario", "scenario_ref", default=None,
              help="static | random | path to a scenario file.")
@_guarded
def cmd_bounds(config_path, seed, out, scenario_ref):
    """Grid-search the action space and write the detected gain bounds."""
    cfg, out_dir = _setup(config_path, seed, out)
    scenario = cfgmod.build_scenario(cfg, _scenario_seed(cfg), scenario_ref)
    plant_params = cfgmod.build_plant_params(cfg)
    game = cfgmod.build_game(cfg)
    bs = cfg["bounds_search"]
    result = tuner.detect_action_bounds(
        scenario,
        plant_params,
        game.trigger,
        kp_range=tuple(bs["kp_range"]),
        ki_range=tuple(bs["ki_range"]),
        resolution=tuple(bs["resolution"]),
        dwell=float(bs["dwell"]),
    )
    rows = []
    for a, kp in enumerate(result.kp_nodes):
        for b, ki in enumerate(result.ki_nodes):
            rows.append((float(kp), float(ki), float(result.scores[a, b])))
    _write_csv(out_dir / "bounds_grid.csv", cfg, ("kp", "ki", "score"), rows)
    with open(out_dir / "bounds.yaml", "w") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        yaml.safe_dump(
            {
                "kp": [float(v) for v in result.kp_bounds],
                "ki": [float(v) for v in result.ki_bounds],
            },
            fh,
        )
    click.echo(
        f"detected bounds: kp={result.kp_bounds} ki={result.ki_bounds} "
        f"-> {out_dir / 'bounds.yaml'}"
    )


def _load_bounds_override(out_dir, bounds_file):
    """Resolve the detected-bounds document for training, if any."""
    if bounds_file is not None:
        path = Path(bounds_file)
        if not path.exists():
            click.echo(
                f"warning: bounds file {path} not found; using config ranges",
                err=True,
            )
            return None
    else:
        path = out_dir / "bounds.yaml"
        if not path.exists():
            return None
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or not {"kp", "ki"} <= set(doc):
        raise ConfigError(f"bounds file {path} must map kp/ki to [low, high]")
    return {k: doc[k] for k in ("kp", "ki") if k in doc}


@main.command("train")
@_common
@click.option("--utility", "utility_variant",
              type=click.Choice(["type1", "type2"]), default=None)
@click.option("--learner", type=click.Choice(["br", "gb"]), default=None)
@click.option("--scenario", "scenario_ref", default=None)
@click.option("--bounds-file", type=click.Path(), default=None,
              help="Detected bounds from the bounds command.")
@_guarded
def cmd_train(config_path, seed, out, utility_variant, learner, scenario_ref,
              bounds_file):
    """Train the self-tuning game and persist the performance maps."""
    cfg, out_dir = _setup(config_path, seed, out)
    bounds_override = _load_bounds_override(out_dir, bounds_file)
    game = cfgmod.build_game(cfg, utility_variant, learner, bounds_override)
    scenario = cfgmod.build_scenario(cfg, _scenario_seed(cfg), scenario_ref)
    plant_params = cfgmod.build_plant_params(cfg)
    result = tuner.train(game, scenario, plant_params, cfg["seed"])
    save_maps(out_dir / "maps.txt", result.maps)
    rows = [
        (
            ep,
            r.events,
            r.avg_settling_time,
            r.max_overshoot,
            r.max_undershoot,
        )
        for ep, r in enumerate(result.reports)
    ]
    _write_csv(
        out_dir / "learning_curve.csv",
        cfg,
        ("episode", "events", "avg_settling_time", "max_overshoot", "max_undershoot"),
        rows,
    )
    click.echo(f"trained {game.episodes} episodes -> {out_dir / 'maps.txt'}")


@main.command("validate")
@_common
@click.option("--maps", "maps_path", type=click.Path(), default=None,
              help="Performance maps from the train command.")
@click.option("--trace/--no-trace", default=False,
              help="Also write the static-suite trace CSV.")
@_guarded
def cmd_validate(config_path, seed, out, maps_path, trace):
    """Evaluate trained maps on the static suite and the per-setpoint
    random-load suite."""
    cfg, out_dir = _setup(config_path, seed, out)
    path = Path(maps_path) if maps_path else out_dir / "maps.txt"
    if not path.exists():
        raise ConfigError(f"maps file {path} not found; run train first")
    maps = load_maps(path)
    game = cfgmod.build_game(cfg)
    missing = set(game.players) - set(maps)
    if missing:
        raise ConfigError(f"maps file lacks players: {sorted(missing)}")
    plant_params = cfgmod.build_plant_params(cfg)
    seeds = tuner.derive_seeds(cfg["seed"])
    scen_seed = cfgmod.seed_int(seeds["scenario"])
    val = cfg["validation"]

    summary = []
    event_reports = []
    from .plant import STATIC_SETPOINT, make_benchmark_scenario, make_validation_scenario

    static = make_benchmark_scenario(
        "static", seed=scen_seed, n_cycles=int(val["static_cycles"])
    )
    report, trace_arr = tuner.run_episode(
        game, static, plant_params, maps, train=False, collect_trace=trace
    )
    summary.append(
        (
            "static",
            STATIC_SETPOINT,
            report.avg_settling_time,
            report.max_overshoot,
            report.max_undershoot,
            report.events,
            int(report.open_at_end),
        )
    )
    event_reports.append(("static", report))
    if trace and trace_arr is not None:
        _write_csv(
            out_dir / "trace_static.csv",
            cfg,
            ("t", "t_t", "t_z", "t_set", "u", "kp", "ki", "event"),
            [tuple(row) for row in trace_arr],
        )

    for sp in val["setpoints"]:
        scen = make_validation_scenario(
            float(sp), seed=scen_seed, duration=float(val["random_duration"])
        )
        report, _ = tuner.run_episode(
            game, scen, plant_params, maps, train=False
        )
        summary.append(
            (
                "random",
                float(sp),
                report.avg_settling_time,
                report.max_overshoot,
                report.max_undershoot,
                report.events,
                int(report.open_at_end),
            )
        )
        event_reports.append((f"random@{sp}", report))

    _write_csv(
        out_dir / "validation.csv",
        cfg,
        (
            "suite",
            "setpoint",
            "avg_settling_time",
            "max_overshoot",
            "max_undershoot",
            "events",
            "open_at_end",
        ),
        summary,
    )
    _write_csv(out_dir / "events.csv", cfg, EVENT_COLUMNS, _event_rows(event_reports))
    click.echo(f"validation summary -> {out_dir / 'validation.csv'}")


@main.command("baseline")
@_common
@click.option("-n", "count", type=int, default=None,
              help="Number of random constant gain pairs.")
@click.option("--maps", "maps_path", type=click.Path(), default=None,
              help="Optionally compare against trained maps.")
@click.option("--scenario", "scenario_ref", default=None)
@_guarded
def cmd_baseline(config_path, seed, out, count, maps_path, scenario_ref):
    """Evaluate random constant-gain controllers, optionally against the
    tuned controller."""
    cfg, out_dir = _setup(config_path, seed, out)
    game = cfgmod.build_game(cfg)
    scenario = cfgmod.build_scenario(cfg, _scenario_seed(cfg), scenario_ref)
    plant_params = cfgmod.build_plant_params(cfg)
    n = count if count is not None else int(cfg["baseline"]["count"])
    seeds = tuner.derive_seeds(cfg["seed"])
    rng = np.random.default_rng(seeds["baseline"])
    spec_players = cfg["game"]["players"]
    gain_list = [
        {
            key: float(rng.uniform(spec_players[key]["min"], spec_players[key]["max"]))
            for key in game.players
        }
        for _ in range(n)
    ]
    reports = tuner.evaluate_baseline(gain_list, scenario, plant_params, game.trigger)
    rows = [
        (
            "random",
            r.gains.get("kp", 0.0),
            r.gains.get("ki", 0.0),
            r.avg_settling_time,
            r.max_overshoot,
            r.max_undershoot,
            r.events,
            int(r.diverged),
            int(r.open_at_end),
        )
        for r in reports
    ]
    if maps_path:
        path = Path(maps_path)
        if not path.exists():
            raise ConfigError(f"maps file {path} not found")
        maps = load_maps(path)
        report, _ = tuner.run_episode(
            game, scenario, plant_params, maps, train=False
        )
        # the tuned controller has no single constant gain pair
        rows.append(
            (
                "tuned",
                float("nan"),
                float("nan"),
                report.avg_settling_time,
                report.max_overshoot,
                report.max_undershoot,
                report.events,
                int(report.diverged),
                int(report.open_at_end),
            )
        )
    _write_csv(
        out_dir / "baseline.csv",
        cfg,
        (
            "kind",
            "kp",
            "ki",
            "avg_settling_time",
            "max_overshoot",
            "max_undershoot",
            "events",
            "diverged",
            "open_at_end",
        ),
        rows,
    )
    click.echo(f"baseline report -> {out_dir / 'baseline.csv'}")


if __name__ == "__main__":
    main()
