"""Scenario and training parameters.

Every physical constant of the simulator lives on :class:`ScenarioConfig`;
learning hyper-parameters live on :class:`TrainConfig`. Both round-trip
through flat JSON objects whose keys are the field names below.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

DEFAULT_CENTROIDS = ((500.0, 500.0), (1500.0, 500.0), (500.0, 1500.0), (1500.0, 1500.0))
DEFAULT_SNR_THRESHOLDS = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}
DEFAULT_SEEDS = (0, 44, 182, 235)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    # deployment geometry
    area_x_max: float = 2000.0
    area_y_max: float = 2000.0
    num_uavs: int = 4
    devices_per_cluster: int = 20
    underground_fraction: float = 0.5
    cluster_centroids: tuple[tuple[float, float], ...] = DEFAULT_CENTROIDS
    cluster_stddev: float = 150.0
    burial_depth: float = 0.4
    h_min: float = 70.0
    h_max: float = 150.0
    # radio
    carrier_freq: float = 868e6
    bandwidth: float = 125e3
    noise_power_dbm: float = -120.0
    speed_of_light: float = 3e8
    sf_set: tuple[int, ...] = (7, 8, 9, 10, 11, 12)
    power_set_dbm: tuple[float, ...] = (2.0, 5.0, 8.0, 11.0, 14.0)
    snr_thresholds_db: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_SNR_THRESHOLDS))
    # soil (moisture / clay / sand are metadata only)
    eps_real: float = 18.2030
    eps_imag: float = 0.16287
    mu_r: float = 1.0
    mu_0: float = 4e-7 * math.pi
    eps_0: float = 8.854e-12
    pathloss_exp_ug: float = 2.0
    soil_moisture: float = 0.20
    clay_fraction: float = 0.10
    sand_fraction: float = 0.90
    # ground-to-air logistic LoS model, angle in degrees
    los_a: float = 4.88
    los_b: float = 0.43
    eta_los_db: float = 0.1
    eta_nlos_db: float = 21.0
    # multirotor hover
    k_ind: float = 0.11
    uav_weight: float = 20.0
    num_rotors: int = 4
    air_density: float = 1.168
    rotor_area: float = 0.214
    # device / episode
    circuit_power: float = 0.01
    step_size: float = 30.0
    reward_weight: float = 0.3
    max_steps: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        # JSON gives lists and string keys; normalise to hashable tuples / int keys
        object.__setattr__(self, "cluster_centroids",
                           tuple((float(x), float(y)) for x, y in self.cluster_centroids))
        object.__setattr__(self, "sf_set", tuple(int(n) for n in self.sf_set))
        object.__setattr__(self, "power_set_dbm", tuple(float(p) for p in self.power_set_dbm))
        object.__setattr__(self, "snr_thresholds_db",
                           {int(k): float(v) for k, v in self.snr_thresholds_db.items()})

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** ((self.noise_power_dbm - 30.0) / 10.0)

    @property
    def num_devices(self) -> int:
        return self.num_uavs * self.devices_per_cluster

    def validate(self) -> "ScenarioConfig":
        if self.devices_per_cluster <= 0:
            raise ConfigError("devices_per_cluster must be positive")
        if len(self.cluster_centroids) != self.num_uavs:
            raise ConfigError(
                f"need one centroid per UAV: {len(self.cluster_centroids)} centroids, {self.num_uavs} UAVs")
        for x, y in self.cluster_centroids:
            if not (0.0 <= x <= self.area_x_max and 0.0 <= y <= self.area_y_max):
                raise ConfigError(f"centroid ({x}, {y}) outside the area")
        if not self.h_min < self.h_max:
            raise ConfigError("h_min must be below h_max")
        if self.cluster_stddev < 0 or self.burial_depth <= 0:
            raise ConfigError("cluster_stddev must be >= 0 and burial_depth > 0")
        if not 0.0 <= self.underground_fraction <= 1.0:
            raise ConfigError("underground_fraction must lie in [0, 1]")
        for name in ("sf_set", "power_set_dbm"):
            seq = getattr(self, name)
            if len(seq) == 0 or any(b <= a for a, b in zip(seq, seq[1:])):
                raise ConfigError(f"{name} must be non-empty and strictly increasing")
        missing = set(self.sf_set) - set(self.snr_thresholds_db)
        if missing:
            raise ConfigError(f"no SNR threshold for SF {sorted(missing)}")
        if not 0.0 <= self.reward_weight <= 1.0:
            raise ConfigError("reward_weight must lie in [0, 1]")
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be positive")
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["cluster_centroids"] = [list(c) for c in self.cluster_centroids]
        d["sf_set"] = list(self.sf_set)
        d["power_set_dbm"] = list(self.power_set_dbm)
        d["snr_thresholds_db"] = {str(k): v for k, v in self.snr_thresholds_db.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        return cls(**_checked_kwargs(cls, d))


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 3_000_000
    rollout_length: int = 50
    epochs: int = 4
    minibatches: int = 4
    clip: float = 0.2
    gamma: float = 0.95
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    lr_actor: float = 3e-4
    lr_critic: float = 5e-4
    value_loss_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: int = 128
    # rewards are O(1e5) bits/J; scaled before GAE so the critic regresses O(1) targets
    reward_scale: float = 1e-5
    log_std_init: float = -0.5
    checkpoint_every: int = 0

    def validate(self) -> "TrainConfig":
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip must lie in (0, 1)")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if self.rollout_length <= 0 or self.total_steps < self.rollout_length:
            raise ConfigError("total_steps must cover at least one rollout")
        if self.minibatches <= 0 or self.minibatches > self.rollout_length or self.epochs <= 0:
            raise ConfigError("bad epochs/minibatches")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        return cls(**_checked_kwargs(cls, d))


def _checked_kwargs(cls, d: dict[str, Any]) -> dict[str, Any]:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(d)


def desk_scenario(**overrides) -> ScenarioConfig:
    """Reduced two-cluster deployment used for fast training checks."""
    base = ScenarioConfig(
        num_uavs=2,
        devices_per_cluster=10,
        cluster_centroids=((500.0, 1000.0), (1500.0, 1000.0)),
    )
    return base.replace(**overrides) if overrides else base


def load_config(path: str | Path) -> tuple[ScenarioConfig, TrainConfig]:
    """Read ``{"scenario": {...}, "train": {...}}``; either block may be omitted."""
    data = json.loads(Path(path).read_text())
    unknown = set(data) - {"scenario", "train"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    scen = ScenarioConfig.from_dict(data.get("scenario", {})).validate()
    train = TrainConfig.from_dict(data.get("train", {})).validate()
    return scen, train


def dump_config(path: str | Path, scenario: ScenarioConfig, train: TrainConfig | None = None) -> None:
    data: dict[str, Any] = {"scenario": scenario.to_dict()}
    if train is not None:
        data["train"] = train.to_dict()
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
