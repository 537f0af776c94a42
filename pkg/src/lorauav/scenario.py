"""Static deployment: clustered ground/underground devices and their UAV gateways.

Randomness comes from numpy's PCG64 bit generator (``np.random.Generator``),
seeded from ``ScenarioConfig.rng_seed`` unless a seed is passed explicitly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .metrics import hover_power

UNDERGROUND = 0
GROUND = 1

SCENARIO_FORMAT = "lorauav-scenario/1"
DEVICE_COLUMNS = ("id", "cluster", "layer", "x", "y", "h", "sf", "tx_power_dbm")
UAV_COLUMNS = ("id", "x", "y", "h", "hover_power")


@dataclass(frozen=True)
class EndDevice:
    id: int
    cluster: int
    layer: int
    position: tuple[float, float, float]
    sf: int
    tx_power_dbm: float


@dataclass(frozen=True)
class UavState:
    id: int
    position: tuple[float, float, float]
    hover_power: float


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    devices: tuple[EndDevice, ...]
    uavs: tuple[UavState, ...]

    @property
    def device_positions(self) -> np.ndarray:
        return np.array([d.position for d in self.devices], dtype=float).reshape(-1, 3)

    @property
    def device_layers(self) -> np.ndarray:
        return np.array([d.layer for d in self.devices], dtype=int)

    @property
    def device_clusters(self) -> np.ndarray:
        return np.array([d.cluster for d in self.devices], dtype=int)

    @property
    def uav_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.uavs], dtype=float).reshape(-1, 3)

    def cluster_devices(self, u: int) -> list[EndDevice]:
        return [d for d in self.devices if d.cluster == u]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def draw_uav_positions(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """One start position per cluster: (x, y) uniform in centroid +- 2 sigma, h uniform."""
    out = np.empty((config.num_uavs, 3))
    box = 2.0 * config.cluster_stddev
    for u, (cx, cy) in enumerate(config.cluster_centroids):
        x, y = rng.uniform([cx - box, cy - box], [cx + box, cy + box])
        out[u, 0] = min(max(x, 0.0), config.area_x_max)
        out[u, 1] = min(max(y, 0.0), config.area_y_max)
        out[u, 2] = rng.uniform(config.h_min, config.h_max)
    return out


def generate_scenario(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    config.validate()
    rng = make_rng(config.rng_seed if seed is None else seed)
    n = config.devices_per_cluster
    n_under = math.floor(config.underground_fraction * n + 0.5)
    sf0, p0 = config.sf_set[0], config.power_set_dbm[0]

    devices: list[EndDevice] = []
    for u, centroid in enumerate(config.cluster_centroids):
        xy = rng.normal(loc=centroid, scale=config.cluster_stddev, size=(n, 2))
        xy[:, 0] = np.clip(xy[:, 0], 0.0, config.area_x_max)
        xy[:, 1] = np.clip(xy[:, 1], 0.0, config.area_y_max)
        layers = np.full(n, GROUND)
        layers[rng.permutation(n)[:n_under]] = UNDERGROUND
        for i in range(n):
            h = -config.burial_depth if layers[i] == UNDERGROUND else 0.0
            devices.append(EndDevice(
                id=len(devices), cluster=u, layer=int(layers[i]),
                position=(float(xy[i, 0]), float(xy[i, 1]), h),
                sf=sf0, tx_power_dbm=p0,
            ))

    p_hover = hover_power(config)
    uav_pos = draw_uav_positions(config, rng)
    uavs = tuple(UavState(u, tuple(float(c) for c in uav_pos[u]), p_hover) for u in range(config.num_uavs))
    return Scenario(config, tuple(devices), uavs)


def save_scenario(path: str | Path, scenario: Scenario) -> None:
    doc = {
        "format": SCENARIO_FORMAT,
        "config": scenario.config.to_dict(),
        "device_columns": list(DEVICE_COLUMNS),
        "devices": [[d.id, d.cluster, d.layer, *d.position, d.sf, d.tx_power_dbm] for d in scenario.devices],
        "uav_columns": list(UAV_COLUMNS),
        "uavs": [[u.id, *u.position, u.hover_power] for u in scenario.uavs],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"{path}: not a {SCENARIO_FORMAT} file")
    config = ScenarioConfig.from_dict(doc["config"]).validate()
    devices = tuple(
        EndDevice(int(i), int(c), int(k), (float(x), float(y), float(h)), int(sf), float(p))
        for i, c, k, x, y, h, sf, p in doc["devices"]
    )
    uavs = tuple(UavState(int(i), (float(x), float(y), float(h)), float(hp)) for i, x, y, h, hp in doc["uavs"])
    return Scenario(config, devices, uavs)
