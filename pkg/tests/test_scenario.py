import json

import numpy as np
import pytest

from lorauav.config import ConfigError, ScenarioConfig, TrainConfig, desk_scenario, dump_config, load_config
from lorauav.scenario import GROUND, UNDERGROUND, draw_uav_positions, generate_scenario, load_scenario, \
    make_rng, save_scenario


def test_table_config_population():
    sc = generate_scenario(ScenarioConfig())
    assert len(sc.devices) == 80 and len(sc.uavs) == 4
    layers = sc.device_layers
    assert np.sum(layers == UNDERGROUND) == 40 and np.sum(layers == GROUND) == 40
    for u in range(4):
        members = sc.cluster_devices(u)
        assert len(members) == 20
        assert sum(d.layer == UNDERGROUND for d in members) == 10


def test_zero_spread_puts_devices_on_centroid():
    cfg = ScenarioConfig(cluster_stddev=0.0)
    sc = generate_scenario(cfg, seed=3)
    for d in sc.devices:
        assert d.position[:2] == cfg.cluster_centroids[d.cluster]


def test_same_seed_same_scenario():
    a = generate_scenario(ScenarioConfig(), seed=42)
    b = generate_scenario(ScenarioConfig(), seed=42)
    assert a == b
    assert generate_scenario(ScenarioConfig(), seed=43) != a


def test_device_heights_by_layer():
    sc = generate_scenario(ScenarioConfig(), seed=1)
    for d in sc.devices:
        assert d.position[2] == (-0.4 if d.layer == UNDERGROUND else 0.0)
        assert d.sf == 7 and d.tx_power_dbm == 2.0


def test_devices_and_uavs_inside_bounds():
    cfg = ScenarioConfig(cluster_stddev=900.0)
    sc = generate_scenario(cfg, seed=2)
    pos = sc.device_positions
    assert pos[:, 0].min() >= 0 and pos[:, 0].max() <= cfg.area_x_max
    assert pos[:, 1].min() >= 0 and pos[:, 1].max() <= cfg.area_y_max
    uav = sc.uav_positions
    assert np.all((uav[:, 2] >= cfg.h_min) & (uav[:, 2] <= cfg.h_max))
    assert np.all((uav[:, :2] >= 0) & (uav[:, :2] <= 2000))


def test_uav_start_near_centroid():
    cfg = ScenarioConfig()
    pos = draw_uav_positions(cfg, make_rng(0))
    for (cx, cy), p in zip(cfg.cluster_centroids, pos):
        assert abs(p[0] - cx) <= 300 and abs(p[1] - cy) <= 300


@pytest.mark.parametrize("frac,n_under", [(0.0, 0), (1.0, 10), (0.25, 3), (0.5, 5)])
def test_layer_fraction(frac, n_under):
    sc = generate_scenario(desk_scenario(underground_fraction=frac), seed=0)
    for u in range(2):
        assert sum(d.layer == UNDERGROUND for d in sc.cluster_devices(u)) == n_under


def test_ablation_keeps_positions():
    a = generate_scenario(desk_scenario(underground_fraction=0.0), seed=9)
    b = generate_scenario(desk_scenario(underground_fraction=1.0), seed=9)
    assert np.array_equal(a.device_positions[:, :2], b.device_positions[:, :2])
    assert np.array_equal(a.uav_positions, b.uav_positions)


def test_scenario_file_roundtrip(tmp_path):
    sc = generate_scenario(desk_scenario(), seed=4)
    save_scenario(tmp_path / "s.json", sc)
    assert load_scenario(tmp_path / "s.json") == sc
    doc = json.loads((tmp_path / "s.json").read_text())
    doc["format"] = "other"
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_scenario(tmp_path / "bad.json")


@pytest.mark.parametrize("change", [
    {"num_uavs": 3},
    {"h_min": 200.0},
    {"underground_fraction": 1.5},
    {"devices_per_cluster": 0},
    {"power_set_dbm": (2.0, 2.0)},
    {"sf_set": (7, 13)},
    {"cluster_centroids": ((500.0, 500.0), (1500.0, 500.0), (500.0, 1500.0), (2500.0, 1500.0))},
])
def test_invalid_configs_rejected(change):
    with pytest.raises(ConfigError):
        generate_scenario(ScenarioConfig().replace(**change))


def test_table_defaults():
    cfg = ScenarioConfig()
    assert cfg.power_set_dbm == (2.0, 5.0, 8.0, 11.0, 14.0)
    assert cfg.sf_set == (7, 8, 9, 10, 11, 12)
    assert cfg.reward_weight == 0.3 and cfg.noise_power_w == pytest.approx(1e-15)
    t = TrainConfig()
    assert (t.clip, t.gamma, t.gae_lambda, t.max_grad_norm) == (0.2, 0.95, 0.95, 0.5)
    assert (t.lr_actor, t.lr_critic, t.entropy_coef, t.rollout_length) == (3e-4, 5e-4, 0.01, 50)


def test_config_file_roundtrip(tmp_path):
    scen = desk_scenario(underground_fraction=0.25)
    train = TrainConfig(total_steps=1000, hidden=32)
    dump_config(tmp_path / "c.json", scen, train)
    assert load_config(tmp_path / "c.json") == (scen, train)


def test_config_rejects_unknown_keys(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"scenario": {"no_such_key": 1}}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
    (tmp_path / "d.json").write_text(json.dumps({"scenery": {}}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "d.json")
