"""Non-learning reference policies: uniform random and fixed-position heuristic."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ActionCommand, LoraUavEnv
from .metrics import dbm_to_watts


@dataclass(frozen=True)
class HeuristicConfig:
    fixed_altitude: float | None = None  # None -> middle of the altitude range

    def altitude(self, config) -> float:
        h = 0.5 * (config.h_min + config.h_max) if self.fixed_altitude is None else self.fixed_altitude
        if not config.h_min <= h <= config.h_max:
            raise ValueError(f"fixed altitude {h} outside [{config.h_min}, {config.h_max}]")
        return h


@dataclass(frozen=True)
class HeuristicAssignment:
    uav_pos: np.ndarray  # (U, 3)
    sf_idx: np.ndarray  # (V,) index into sf_set
    pw_idx: np.ndarray  # (V,) index into power_set_dbm


def random_policy(env: LoraUavEnv, rng: np.random.Generator) -> list[ActionCommand]:
    n, n_sf, n_pw = env.devices_per_agent, len(env.sf_values), len(env.power_values)
    return [
        ActionCommand(rng.uniform(-1.0, 1.0, 3), rng.integers(0, n_sf, n), rng.integers(0, n_pw, n))
        for _ in range(env.num_agents)
    ]


def quantile_bins(n: int, n_bins: int) -> np.ndarray:
    """Equal-mass bin index for each rank 0..n-1."""
    return (np.arange(n) * n_bins) // n


def fixed_heuristic_policy(env: LoraUavEnv, heuristic: HeuristicConfig = HeuristicConfig()) -> HeuristicAssignment:
    """UAVs over their cluster centroids; SF by distance rank, least power meeting the SF threshold.

    Positions and devices are static, so one assignment serves every step.
    """
    cfg = env.config
    h = heuristic.altitude(cfg)
    uav_pos = np.array([[x, y, h] for x, y in cfg.cluster_centroids])
    env.set_state(uav_pos, 0, 0)  # evaluates distances and gains at the pinned positions
    sf_idx = np.zeros(len(env.dev_pos), int)
    pw_idx = np.zeros(len(env.dev_pos), int)
    thresholds = np.array([cfg.snr_thresholds_db[n] for n in cfg.sf_set])
    power_w = dbm_to_watts(env.power_values)
    for members in env.members:
        order = members[np.argsort(env.distance[members], kind="stable")]
        sf_idx[order] = quantile_bins(len(order), len(cfg.sf_set))
        snr_db = 10.0 * np.log10(np.outer(env.gain[members], power_w) / cfg.noise_power_w)
        ok = snr_db >= thresholds[sf_idx[members], None]
        pw_idx[members] = np.where(ok.any(axis=1), ok.argmax(axis=1), len(power_w) - 1)
    env.set_state(uav_pos, sf_idx, pw_idx)
    return HeuristicAssignment(uav_pos, sf_idx, pw_idx)


def heuristic_actions(env: LoraUavEnv, assignment: HeuristicAssignment) -> list[ActionCommand]:
    return [
        ActionCommand(np.zeros(3), assignment.sf_idx[m], assignment.pw_idx[m]) for m in env.members
    ]


def run_random(env: LoraUavEnv, episodes: int, seed: int) -> list[float]:
    """Mean system EE per episode under the uniform random policy."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for ep in range(episodes):
        res = env.reset(seed=seed if ep == 0 else None)
        ees = []
        while not res.done:
            res = env.step(random_policy(env, rng))
            ees.append(res.info["global_ee"])
        out.append(float(np.mean(ees)))
    return out


def run_heuristic(env: LoraUavEnv, episodes: int, seed: int, heuristic: HeuristicConfig = HeuristicConfig()) -> list[float]:
    """Mean system EE per episode with UAVs pinned at the centroids."""
    assignment = fixed_heuristic_policy(env, heuristic)
    out = []
    for ep in range(episodes):
        env.reset(seed=seed if ep == 0 else None)
        env.set_state(assignment.uav_pos, assignment.sf_idx, assignment.pw_idx)
        ees = []
        actions = heuristic_actions(env, assignment)
        while not env.done:
            res = env.step(actions)
            ees.append(res.info["global_ee"])
        out.append(float(np.mean(ees)))
    return out
