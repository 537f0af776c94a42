"""Experiment driver: presets, multi-seed runs, evaluation and plot-data export.

Results layout, one directory per preset and seed::

    <root>/<preset>/summary.json              mean and std of EE across seeds
    <root>/<preset>/<seed>/summary.json       per-seed evaluation
    <root>/<preset>/<seed>/trace.csv          first evaluation episode
    <root>/<preset>/<seed>/scenario.json
    <root>/<preset>/<seed>/config.json
    <root>/<preset>/<seed>/metrics.csv        learned presets only
    <root>/<preset>/<seed>/checkpoint.bin     learned presets only
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baselines import HeuristicConfig, fixed_heuristic_policy, heuristic_actions, random_policy
from .config import ScenarioConfig, TrainConfig, dump_config, load_config
from .env import LoraUavEnv, TraceRecorder, read_trace, write_rows
from .mappo import Mappo, train, write_metrics
from .scenario import Scenario, generate_scenario, load_scenario, save_scenario

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "LORAUAV_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "results"
DEFAULT_EVAL_EPISODES = 20
PATH_COLUMNS = ("step", "uav", "x", "y", "h")
DEVICE_COLUMNS = ("device", "x", "y", "h", "layer")
ASSOCIATION_COLUMNS = ("device", "uav")


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    overrides: dict = field(default_factory=dict)
    policy: str = "mappo"  # mappo | random | heuristic

    @property
    def learned(self) -> bool:
        return self.policy == "mappo"

    def scenario_config(self, base: ScenarioConfig) -> ScenarioConfig:
        return base.replace(**self.overrides).validate()


PRESETS = {
    "hetero": ExperimentPreset("hetero", {"underground_fraction": 0.5}),
    "ug_only": ExperimentPreset("ug_only", {"underground_fraction": 1.0}),
    "g_only": ExperimentPreset("g_only", {"underground_fraction": 0.0}),
    "random": ExperimentPreset("random", {"underground_fraction": 0.5}, "random"),
    "fixed_heuristic": ExperimentPreset("fixed_heuristic", {"underground_fraction": 0.5}, "heuristic"),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise HarnessError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def output_root(root: str | Path | None = None) -> Path:
    if root is not None:
        return Path(root)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def eval_seed(seed: int) -> int:
    """Seed for evaluation episodes, disjoint from the training streams."""
    return int(np.random.SeedSequence([seed, 0xE7A1]).generate_state(1)[0])


# --- policies -------------------------------------------------------------

Policy = Callable[[list, LoraUavEnv], list]


def greedy_policy(agent: Mappo) -> Policy:
    return lambda obs, env: agent.greedy_actions(obs)


def run_episodes(env: LoraUavEnv, policy: Policy, episodes: int, seed: int,
                 on_reset: Callable[[LoraUavEnv], None] | None = None,
                 recorder: TraceRecorder | None = None) -> list[float]:
    """Mean system EE per episode; ``recorder`` (if any) sees the first episode only."""
    out = []
    for ep in range(episodes):
        env.recorder = recorder if ep == 0 else None
        res = env.reset(seed=seed if ep == 0 else None)
        if on_reset is not None:
            on_reset(env)
            res = env.observe()
        ees = []
        while not res.done:
            res = env.step(policy(res.observations, env))
            ees.append(res.info["global_ee"])
        out.append(float(np.mean(ees)))
    env.recorder = None
    return out


def evaluate_agent(agent: Mappo, scenario: Scenario, episodes: int, seed: int,
                   recorder: TraceRecorder | None = None) -> list[float]:
    env = LoraUavEnv(scenario, seed=seed)
    return run_episodes(env, greedy_policy(agent), episodes, seed, recorder=recorder)


def evaluate_baseline(kind: str, scenario: Scenario, episodes: int, seed: int,
                      recorder: TraceRecorder | None = None,
                      heuristic: HeuristicConfig = HeuristicConfig()) -> list[float]:
    env = LoraUavEnv(scenario, seed=seed)
    if kind == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        return run_episodes(env, lambda obs, e: random_policy(e, rng), episodes, seed, recorder=recorder)
    if kind == "heuristic":
        plan = fixed_heuristic_policy(env, heuristic)
        actions = heuristic_actions(env, plan)
        pin = lambda e: e.set_state(plan.uav_pos, plan.sf_idx, plan.pw_idx)
        return run_episodes(env, lambda obs, e: actions, episodes, seed, on_reset=pin, recorder=recorder)
    raise HarnessError(f"unknown baseline {kind!r}")


def evaluate_checkpoint(run_dir: str | Path, episodes: int = DEFAULT_EVAL_EPISODES,
                        seed: int | None = None, checkpoint: str | Path | None = None) -> list[float]:
    """Re-evaluate a stored policy from its run directory."""
    run_dir = Path(run_dir)
    scenario = load_scenario(run_dir / "scenario.json")
    _, train_cfg = load_config(run_dir / "config.json")
    summary = json.loads((run_dir / "summary.json").read_text())
    seed = summary["seed"] if seed is None else seed
    agent = Mappo(LoraUavEnv(scenario, seed=seed), train_cfg, seed)
    agent.load(checkpoint or run_dir / "checkpoint.bin")
    return evaluate_agent(agent, scenario, episodes, eval_seed(seed))


# --- experiments ----------------------------------------------------------

def _prepare_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise HarnessError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_seed(preset: ExperimentPreset, seed: int, base: ScenarioConfig, train_config: TrainConfig,
             run_dir: Path, eval_episodes: int = DEFAULT_EVAL_EPISODES) -> dict:
    cfg = preset.scenario_config(base)
    scenario = generate_scenario(cfg, seed=seed)
    save_scenario(run_dir / "scenario.json", scenario)
    dump_config(run_dir / "config.json", cfg, train_config)
    recorder = TraceRecorder()
    summary = {"preset": preset.name, "policy": preset.policy, "seed": seed, "eval_episodes": eval_episodes,
               "eval_seed": eval_seed(seed)}
    if preset.learned:
        result = train(scenario, train_config, seed)
        write_metrics(run_dir / "metrics.csv", result.metrics)
        result.agent.save(run_dir / "checkpoint.bin")
        scores = evaluate_agent(result.agent, scenario, eval_episodes, eval_seed(seed), recorder)
        summary["train_steps"] = result.agent.env_steps
    else:
        scores = evaluate_baseline(preset.policy, scenario, eval_episodes, eval_seed(seed), recorder)
    recorder.write(run_dir / "trace.csv")
    last = [r for r in recorder.rows if r[2] == "uav" and r[0] == 0 and r[1] == cfg.max_steps]
    summary.update({
        "episode_ee": scores,
        "mean_ee": float(np.mean(scores)),
        "std_ee": float(np.std(scores)),
        "final_uav_positions": [[float(r[6]), float(r[7]), float(r[8])] for r in last],
    })
    _write_json(run_dir / "summary.json", summary)
    return summary


def run_experiment(preset: str | ExperimentPreset, seeds: Sequence[int], train_config: TrainConfig | None = None,
                   scenario_config: ScenarioConfig | None = None, root: str | Path | None = None,
                   eval_episodes: int = DEFAULT_EVAL_EPISODES) -> Path:
    """Train (or evaluate, for baselines) every seed and write the preset summary.

    Returns the preset's results directory.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    if not seeds:
        raise HarnessError("at least one seed is required")
    if eval_episodes < 1:
        raise HarnessError("eval_episodes must be positive")
    base = scenario_config or ScenarioConfig()
    train_config = (train_config or TrainConfig()).validate()
    preset_dir = _prepare_dir(output_root(root) / preset.name)
    per_seed = []
    for seed in seeds:
        log.info("preset %s seed %d", preset.name, seed)
        run_dir = _prepare_dir(preset_dir / str(seed))
        per_seed.append(run_seed(preset, int(seed), base, train_config, run_dir, eval_episodes))
    means = [s["mean_ee"] for s in per_seed]
    _write_json(preset_dir / "summary.json", {
        "preset": preset.name,
        "seeds": [int(s) for s in seeds],
        "seed_mean_ee": means,
        "mean_ee": float(np.mean(means)),
        "std_ee": float(np.std(means)),
    })
    return preset_dir


# --- plot data ------------------------------------------------------------

def export_trajectories(trace: str | Path, out_dir: str | Path, episode: int = 0) -> dict[str, Path]:
    """Split one traced episode into UAV path, device scatter and association tables."""
    rows = [r for r in read_trace(trace) if int(r["episode"]) == episode]
    if not rows:
        raise HarnessError(f"trace {trace} holds no rows for episode {episode}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    uav = [r for r in rows if r["kind"] == "uav"]
    paths = [(int(r["step"]), int(r["id"]), float(r["x"]), float(r["y"]), float(r["h"])) for r in uav]
    first_step = min(int(r["step"]) for r in rows)
    devs = [r for r in rows if r["kind"] == "device" and int(r["step"]) == first_step]
    devices = [(int(r["id"]), float(r["x"]), float(r["y"]), float(r["h"]), int(r["layer"])) for r in devs]
    assoc = [(int(r["id"]), int(r["cluster"])) for r in devs]
    files = {"paths": out / "uav_paths.csv", "devices": out / "devices.csv", "associations": out / "associations.csv"}
    write_rows(files["paths"], PATH_COLUMNS, sorted(paths))
    write_rows(files["devices"], DEVICE_COLUMNS, devices)
    write_rows(files["associations"], ASSOCIATION_COLUMNS, assoc)
    return files
