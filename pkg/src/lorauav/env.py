"""Multi-agent UAV gateway environment.

One agent per UAV. Each step an agent moves its UAV and assigns an SF and
a transmit power to every device of its cluster; every agent is rewarded
with a blend of the system energy efficiency and its own cluster's.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import channel
from .config import ScenarioConfig
from .metrics import cluster_links, dbm_to_watts, hover_power, local_efficiency
from .scenario import Scenario, draw_uav_positions, make_rng

OBS_FEATURES_PER_DEVICE = 4  # distance, SNR, SF, power


class EnvError(RuntimeError):
    pass


@dataclass
class ActionCommand:
    move_delta: np.ndarray
    sf_choice: np.ndarray
    power_choice: np.ndarray

    def __post_init__(self):
        self.move_delta = np.asarray(self.move_delta, float)
        self.sf_choice = np.asarray(self.sf_choice, int)
        self.power_choice = np.asarray(self.power_choice, int)


@dataclass
class StepResult:
    observations: list[np.ndarray]
    global_state: np.ndarray
    rewards: np.ndarray
    done: bool
    info: dict = field(default_factory=dict)


def minmax(values: np.ndarray) -> np.ndarray:
    """Min-max scale along axis 0; a constant column maps to 0.5."""
    lo, hi = values.min(axis=0), values.max(axis=0)
    span = hi - lo
    flat = span == 0
    return np.where(flat, 0.5, (values - lo) / np.where(flat, 1.0, span))


class LoraUavEnv:
    """Partially observable multi-UAV game over a fixed device deployment.

    ``hover_model(config, altitude)`` gives each UAV's hover draw; the default
    ignores altitude.
    """

    def __init__(self, scenario: Scenario, seed: int | None = None,
                 hover_model: Callable[[ScenarioConfig, float], float] = hover_power):
        self.scenario = scenario
        self.config = cfg = scenario.config
        self.hover_model = hover_model
        self.soil = channel.soil_constants(cfg)
        self.num_agents = cfg.num_uavs
        self.dev_pos = scenario.device_positions
        self.layers = scenario.device_layers
        self.clusters = scenario.device_clusters
        self.members = [np.flatnonzero(self.clusters == u) for u in range(self.num_agents)]
        sizes = {len(m) for m in self.members}
        if len(sizes) != 1:
            raise EnvError("all clusters must hold the same number of devices")
        self.devices_per_agent = sizes.pop()
        self.obs_dim = 3 + OBS_FEATURES_PER_DEVICE * self.devices_per_agent
        self.state_dim = self.num_agents * self.obs_dim + 3 * self.num_agents
        self.sf_values = np.array(cfg.sf_set)
        self.power_values = np.array(cfg.power_set_dbm, float)
        self._sf_thresholds = np.array([cfg.snr_thresholds_db[n] for n in cfg.sf_set])
        self._power_w = dbm_to_watts(self.power_values)
        self._seed = cfg.rng_seed if seed is None else seed
        self.rng = make_rng(self._seed)
        self.recorder: "TraceRecorder | None" = None
        self.t = 0
        self.done = True
        # initial state comes from the scenario itself until the first reset
        self.uav_pos = scenario.uav_positions.copy()
        self.sf_idx = np.zeros(len(self.dev_pos), dtype=int)
        self.pw_idx = np.zeros(len(self.dev_pos), dtype=int)
        self._build_state_scaling()
        self._evaluate()

    # --- state evaluation -------------------------------------------------

    def _evaluate(self) -> None:
        cfg = self.config
        serving = self.uav_pos[self.clusters]
        self.distance = channel.link_distance(self.dev_pos, serving)
        self.loss_db = channel.path_loss_db(self.layers, self.distance, serving[:, 2], self.soil, cfg)
        self.gain = channel.db_to_gain(self.loss_db)
        power_dbm = self.power_values[self.pw_idx]
        self.snr_db, self.sinr, self.rate, self.feasible = cluster_links(
            self.sf_values[self.sf_idx], power_dbm, self.gain, cfg,
            groups=self.clusters, thresholds=self._sf_thresholds[self.sf_idx])
        dev_power = self._power_w[self.pw_idx] + cfg.circuit_power
        u = self.num_agents
        rate_sum = np.bincount(self.clusters, weights=self.rate, minlength=u)
        power_sum = np.bincount(self.clusters, weights=dev_power, minlength=u)
        self.hover = np.array([self.hover_model(cfg, h) for h in self.uav_pos[:, 2]])
        self.local_ee = local_efficiency(rate_sum, power_sum, self.hover)
        self.global_ee = float(self.local_ee.sum())

    def rewards(self) -> np.ndarray:
        w = self.config.reward_weight
        return w * self.global_ee + (1.0 - w) * self.local_ee

    # --- observations -----------------------------------------------------

    def raw_observation(self, u: int) -> np.ndarray:
        idx = self.members[u]
        per_dev = np.stack([
            self.distance[idx], self.snr_db[idx],
            self.sf_values[self.sf_idx[idx]].astype(float), self.power_values[self.pw_idx[idx]],
        ], axis=1)
        return np.concatenate([self.uav_pos[u], per_dev.ravel()])

    def build_observation(self, u: int) -> np.ndarray:
        cfg = self.config
        idx = self.members[u]
        x, y, h = self.uav_pos[u]
        pos = [x / cfg.area_x_max, y / cfg.area_y_max, (h - cfg.h_min) / (cfg.h_max - cfg.h_min)]
        per_dev = np.stack([
            self.distance[idx], self.snr_db[idx], self.sf_values[self.sf_idx[idx]], self.power_values[self.pw_idx[idx]],
        ], axis=1)
        return np.concatenate([pos, minmax(per_dev).ravel()])

    def global_state(self) -> np.ndarray:
        raw = [self.raw_observation(u) for u in range(self.num_agents)]
        return np.concatenate(raw + [self.uav_pos.ravel()])

    def critic_input(self, global_state: np.ndarray) -> np.ndarray:
        """Fixed affine rescaling of raw global states (any leading batch dims)."""
        return global_state * self._state_scale + self._state_shift

    def _build_state_scaling(self) -> None:
        cfg = self.config
        pos_scale = np.array([1.0 / cfg.area_x_max, 1.0 / cfg.area_y_max, 1.0 / (cfg.h_max - cfg.h_min)])
        pos_shift = np.array([0.0, 0.0, -cfg.h_min / (cfg.h_max - cfg.h_min)])
        sf0, sf1 = self.sf_values[0], self.sf_values[-1]
        p0, p1 = self.power_values[0], self.power_values[-1]
        dev_scale = np.array([1e-3, 1e-2, 1.0 / max(sf1 - sf0, 1), 1.0 / max(p1 - p0, 1.0)])
        dev_shift = np.array([0.0, 0.0, -sf0 / max(sf1 - sf0, 1), -p0 / max(p1 - p0, 1.0)])
        obs_scale = np.concatenate([pos_scale, np.tile(dev_scale, self.devices_per_agent)])
        obs_shift = np.concatenate([pos_shift, np.tile(dev_shift, self.devices_per_agent)])
        self._state_scale = np.concatenate([np.tile(obs_scale, self.num_agents), np.tile(pos_scale, self.num_agents)])
        self._state_shift = np.concatenate([np.tile(obs_shift, self.num_agents), np.tile(pos_shift, self.num_agents)])

    def _result(self) -> StepResult:
        info = {
            "global_ee": self.global_ee,
            "local_ee": self.local_ee.copy(),
            "feasible": np.bincount(self.clusters, weights=self.feasible, minlength=self.num_agents).astype(int),
            "step": self.t,
        }
        obs = [self.build_observation(u) for u in range(self.num_agents)]
        return StepResult(obs, self.global_state(), self.rewards(), self.done, info)

    def observe(self) -> StepResult:
        """Current observations and state without advancing time."""
        return self._result()

    # --- episode control --------------------------------------------------

    def reset(self, seed: int | None = None) -> StepResult:
        if seed is not None:
            self.rng = make_rng(seed)
        self.uav_pos = draw_uav_positions(self.config, self.rng)
        self.sf_idx[:] = 0
        self.pw_idx[:] = 0
        self.t = 0
        self.done = False
        self._evaluate()
        if self.recorder is not None:
            self.recorder.start(self)
        return self._result()

    def set_state(self, uav_pos, sf_idx, pw_idx) -> None:
        """Overwrite positions and per-device choices (for baselines and tests)."""
        self.uav_pos = self.clamp(np.asarray(uav_pos, float).reshape(self.num_agents, 3))
        self.sf_idx[:] = sf_idx
        self.pw_idx[:] = pw_idx
        self._evaluate()

    def clamp(self, pos: np.ndarray) -> np.ndarray:
        cfg = self.config
        lo = np.array([0.0, 0.0, cfg.h_min])
        hi = np.array([cfg.area_x_max, cfg.area_y_max, cfg.h_max])
        return np.clip(pos, lo, hi)

    def step(self, actions: Sequence[ActionCommand]) -> StepResult:
        if self.done:
            raise EnvError("step() called on a finished episode; call reset()")
        if len(actions) != self.num_agents:
            raise EnvError(f"expected {self.num_agents} actions, got {len(actions)}")
        n_sf, n_pw = len(self.sf_values), len(self.power_values)
        for u, a in enumerate(actions):
            if a.move_delta.shape != (3,):
                raise EnvError(f"agent {u}: move_delta must have 3 entries")
            if a.sf_choice.shape != (self.devices_per_agent,) or a.power_choice.shape != (self.devices_per_agent,):
                raise EnvError(f"agent {u}: need one SF and one power choice per device")
            if a.sf_choice.min() < 0 or a.sf_choice.max() >= n_sf or a.power_choice.min() < 0 or a.power_choice.max() >= n_pw:
                raise EnvError(f"agent {u}: choice index out of range")
            delta = np.clip(a.move_delta, -1.0, 1.0) * self.config.step_size
            self.uav_pos[u] = self.uav_pos[u] + delta
            idx = self.members[u]
            self.sf_idx[idx] = a.sf_choice
            self.pw_idx[idx] = a.power_choice
        self.uav_pos = self.clamp(self.uav_pos)
        self.t += 1
        self.done = self.t >= self.config.max_steps
        self._evaluate()
        result = self._result()
        if self.recorder is not None:
            self.recorder.record(self, result)
        return result


class TraceRecorder:
    """Collects per-step rows of one or more episodes for CSV export."""

    COLUMNS = ("episode", "step", "kind", "id", "cluster", "layer", "x", "y", "h", "sf", "tx_power_dbm", "rate",
               "reward", "ee")

    def __init__(self):
        self.rows: list[tuple] = []
        self.episode = -1

    def start(self, env: LoraUavEnv) -> None:
        self.episode += 1

    def record(self, env: LoraUavEnv, result: StepResult) -> None:
        ep, t = self.episode, env.t
        for u in range(env.num_agents):
            x, y, h = env.uav_pos[u]
            self.rows.append((ep, t, "uav", u, u, "", x, y, h, "", "", "", result.rewards[u], env.local_ee[u]))
        for v in range(len(env.dev_pos)):
            x, y, h = env.dev_pos[v]
            self.rows.append((ep, t, "device", v, int(env.clusters[v]), int(env.layers[v]), x, y, h,
                              int(env.sf_values[env.sf_idx[v]]),
                              env.power_values[env.pw_idx[v]], env.rate[v], "", ""))
        self.rows.append((ep, t, "system", -1, "", "", "", "", "", "", "", "", float(result.rewards.mean()),
                          env.global_ee))

    def write(self, path: str | Path) -> None:
        write_rows(path, self.COLUMNS, self.rows)


def write_rows(path: str | Path, columns: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])


def read_trace(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
