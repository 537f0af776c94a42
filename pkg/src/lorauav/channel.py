"""Mean path loss for underground-to-air and ground-to-air uplinks.

Array functions (``*_db``) broadcast over device arrays and are what the
environment uses; the dataclass wrappers operate on single links.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class SoilAttenuation:
    alpha: float  # Np/m
    beta: float  # rad/m
    d_p: float  # m, oblique in-soil path
    l_soil_linear: float

    @property
    def l_soil_db(self) -> float:
        return 10.0 * math.log10(self.l_soil_linear)


@dataclass(frozen=True)
class LinkLoss:
    loss_db: float
    gain_linear: float

    @classmethod
    def from_db(cls, loss_db: float) -> "LinkLoss":
        return cls(float(loss_db), 10.0 ** (-float(loss_db) / 10.0))


def soil_constants(config: ScenarioConfig) -> SoilAttenuation:
    eps_r, eps_i = config.eps_real, config.eps_imag
    if eps_r <= 1.0:
        raise ChannelError(f"eps_real={eps_r} <= 1 has no refraction angle")
    w = 2.0 * math.pi * config.carrier_freq
    base = config.mu_r * config.mu_0 * eps_r * config.eps_0 / 2.0
    root = math.sqrt(1.0 + (eps_i / eps_r) ** 2)
    alpha = w * math.sqrt(base * (root - 1.0))
    beta = w * math.sqrt(base * (root + 1.0))
    d_p = config.burial_depth / math.cos(math.asin(1.0 / math.sqrt(eps_r)))
    l_soil = (2.0 * beta * d_p * math.exp(alpha * d_p)) ** 2
    return SoilAttenuation(alpha, beta, d_p, l_soil)


def _check_distance(d):
    if np.any(np.asarray(d) <= 0.0):
        raise ChannelError("zero link distance")


def link_distance(dev_pos, uav_pos) -> np.ndarray:
    return np.linalg.norm(np.asarray(dev_pos, float) - np.asarray(uav_pos, float), axis=-1)


def ug2a_loss_db(distance, soil: SoilAttenuation, config: ScenarioConfig):
    """Soil attenuation times air spreading, evaluated in linear units then converted once."""
    _check_distance(distance)
    air = (4.0 * math.pi * config.carrier_freq / config.speed_of_light) ** 2 * np.power(
        distance, config.pathloss_exp_ug)
    return 10.0 * np.log10(soil.l_soil_linear * air)


def los_prob(distance, uav_height, config: ScenarioConfig):
    _check_distance(distance)
    theta = np.degrees(np.arcsin(np.clip(uav_height / distance, -1.0, 1.0)))
    return 1.0 / (1.0 + config.los_a * np.exp(-config.los_b * (theta - config.los_a)))


def g2a_loss_db(distance, uav_height, config: ScenarioConfig):
    p_los = los_prob(distance, uav_height, config)
    fspl = 20.0 * np.log10(4.0 * math.pi * config.carrier_freq * distance / config.speed_of_light)
    return fspl + p_los * config.eta_los_db + (1.0 - p_los) * config.eta_nlos_db


def path_loss_db(layers, distance, uav_height, soil: SoilAttenuation, config: ScenarioConfig) -> np.ndarray:
    """Per-device loss in dB; ``layers`` selects UG2A (0) or G2A (1) per entry."""
    layers = np.asarray(layers)
    distance = np.asarray(distance, float)
    uav_height = np.broadcast_to(np.asarray(uav_height, float), distance.shape)
    out = np.empty(distance.shape)
    under = layers == 0
    if under.any():
        out[under] = ug2a_loss_db(distance[under], soil, config)
    if (~under).any():
        out[~under] = g2a_loss_db(distance[~under], uav_height[~under], config)
    return out


def db_to_gain(loss_db):
    return np.power(10.0, -np.asarray(loss_db) / 10.0)


# single-link wrappers -------------------------------------------------------

def ug2a_loss(dev, uav, soil: SoilAttenuation, config: ScenarioConfig) -> LinkLoss:
    if dev.layer != 0:
        raise ChannelError(f"device {dev.id} is not underground")
    return LinkLoss.from_db(ug2a_loss_db(float(link_distance(dev.position, uav.position)), soil, config))


def los_probability(dev, uav, config: ScenarioConfig) -> float:
    d = float(link_distance(dev.position, uav.position))
    return float(los_prob(d, uav.position[2], config))


def g2a_loss(dev, uav, config: ScenarioConfig) -> LinkLoss:
    if dev.layer != 1:
        raise ChannelError(f"device {dev.id} is not a ground device")
    d = float(link_distance(dev.position, uav.position))
    return LinkLoss.from_db(g2a_loss_db(d, uav.position[2], config))


def channel_gain(dev, uav, soil: SoilAttenuation, config: ScenarioConfig) -> LinkLoss:
    if dev.layer == 0:
        return ug2a_loss(dev, uav, soil, config)
    return g2a_loss(dev, uav, config)
