"""Link budget, power draw and energy efficiency.

Infeasible links (SNR under the sensitivity threshold of their SF) deliver
zero rate; they are never rejected, so an exploring policy can visit them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ScenarioConfig


@dataclass(frozen=True)
class LinkReport:
    snr_db: float
    sinr_linear: float
    rate: float
    feasible: bool


def dbm_to_watts(p_dbm):
    return np.power(10.0, (np.asarray(p_dbm, float) - 30.0) / 10.0)


def device_power_watts(dev, config: ScenarioConfig) -> float:
    return float(dbm_to_watts(dev.tx_power_dbm)) + config.circuit_power


def hover_power(config: ScenarioConfig, altitude: float | None = None) -> float:
    """Induced hover power of a multirotor.

    ``altitude`` is accepted so an altitude-dependent model can be swapped in
    with the same signature; this model ignores it.
    """
    if config.rotor_area <= 0 or config.air_density <= 0 or config.num_rotors <= 0:
        raise ValueError("rotor area, air density and rotor count must be positive")
    w = config.uav_weight
    return (1.0 + config.k_ind) * w * math.sqrt(w / (2.0 * config.air_density * config.num_rotors * config.rotor_area))


def threshold_array(sf, config: ScenarioConfig) -> np.ndarray:
    table = config.snr_thresholds_db
    return np.array([table[int(n)] for n in np.ravel(sf)]).reshape(np.shape(sf))


def cluster_links(sf, power_dbm, gains, config: ScenarioConfig, groups=None, thresholds=None):
    """Vectorised co-SF SINR.

    All devices interfere with each other when ``groups`` is None (one
    cluster); otherwise only devices sharing a group id do. ``thresholds``
    may carry precomputed per-device sensitivities. Returns
    ``(snr_db, sinr, rate, feasible)`` arrays aligned with the inputs.
    """
    sf = np.asarray(sf)
    rx = dbm_to_watts(power_dbm) * np.asarray(gains, float)
    noise = config.noise_power_w
    co_sf = (sf[:, None] == sf[None, :]) & ~np.eye(len(sf), dtype=bool)
    if groups is not None:
        groups = np.asarray(groups)
        co_sf &= groups[:, None] == groups[None, :]
    interference = np.where(co_sf, rx[None, :], 0.0).sum(axis=1)
    sinr = rx / (interference + noise)
    snr_db = 10.0 * np.log10(rx / noise)
    if thresholds is None:
        thresholds = threshold_array(sf, config)
    feasible = snr_db >= thresholds
    rate = np.where(feasible, config.bandwidth * np.log2(1.0 + sinr), 0.0)
    return snr_db, sinr, rate, feasible


def sinr(dev, cluster_devices: Sequence, gains: Sequence[float], config: ScenarioConfig) -> LinkReport:
    ids = [d.id for d in cluster_devices]
    if dev.id not in ids:
        raise ValueError(f"device {dev.id} is not in the given cluster")
    snr_db, s, rate, feasible = cluster_links(
        [d.sf for d in cluster_devices], [d.tx_power_dbm for d in cluster_devices], gains, config)
    i = ids.index(dev.id)
    return LinkReport(float(snr_db[i]), float(s[i]), float(rate[i]), bool(feasible[i]))


def local_efficiency(rate_sum, device_power_sum, hover):
    return rate_sum / (device_power_sum + hover)


def energy_efficiency(clusters, uavs, config: ScenarioConfig) -> tuple[float, list[float]]:
    """System EE (sum of per-UAV efficiencies) and the per-UAV terms.

    ``clusters[u]`` is a ``(devices, gains)`` pair for UAV ``u``.
    """
    per_uav = []
    for (devices, gains), uav in zip(clusters, uavs):
        if devices:
            _, _, rate, _ = cluster_links([d.sf for d in devices], [d.tx_power_dbm for d in devices], gains, config)
            p_dev = sum(device_power_watts(d, config) for d in devices)
            r = float(rate.sum())
        else:
            r, p_dev = 0.0, 0.0
        per_uav.append(local_efficiency(r, p_dev, uav.hover_power))
    return float(sum(per_uav)), per_uav
