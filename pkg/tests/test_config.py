import math

import pytest

from swarmnav import config as C
from swarmnav.errors import ConfigError

YAML = """
scenario:
  arena: [8.0, 8.0]
  n_obstacles: 5
  n_agents: 1
  lidar: {n_laser: 32, sigma_z: 0.02}
  sigma_slip: 0.05
net:
  variant: lstp
  d_h: 64
  heads: 4
  actor_hidden: [64, 32]
  critic_hidden: [64, 32]
reward:
  mode: hs
  k_c: 0.25
train:
  iterations: 3
  t_max: 100
  seed: 11
  stages:
    - {overrides: {n_obstacles: 5}, sr_threshold: 0.9, name: sparse}
    - {overrides: {n_obstacles: 30}, sr_threshold: 0.95, name: dense}
eval:
  n_trials: 10
  seed: 77
"""


def test_load_from_text_and_dict_agree(tmp_path):
    spec1 = C.load_config(YAML)
    path = tmp_path / "cfg.yaml"
    path.write_text(YAML)
    spec2 = C.load_config(str(path))
    assert spec1.raw == spec2.raw
    spec3 = C.load_config(spec1.raw)
    assert spec3.raw == spec1.raw


def test_net_inherits_scenario_lidar():
    spec = C.load_config(YAML)
    assert spec.net.n_laser == 32
    assert spec.net.stack == spec.scenario.stack == 5
    assert spec.reward.z_max == spec.scenario.lidar.z_max
    assert spec.reward.dt == spec.scenario.dt
    assert spec.net.d_h == 64


def test_conflicting_inherit_rejected():
    bad = YAML.replace("variant: lstp", "variant: lstp\n  n_laser: 99")
    with pytest.raises(ConfigError, match="n_laser"):
        C.load_config(bad)


def test_unknown_keys_named():
    with pytest.raises(ConfigError, match="bogus"):
        C.load_config({"scenario": {"bogus": 1}})
    with pytest.raises(ConfigError, match="nope"):
        C.load_config({"net": {"nope": 2}})
    with pytest.raises(ConfigError, match="wat"):
        C.load_config({"wat": {}})
    with pytest.raises(ConfigError, match="lidar"):
        C.load_config({"scenario": {"lidar": {"beams": 12}}})


def test_stages_parsed():
    spec = C.load_config(YAML)
    assert len(spec.stages) == 2
    assert spec.stages[0].name == "sparse"
    assert spec.stages[1].overrides == {"n_obstacles": 30}
    assert spec.raw["train"]["stages"][1]["sr_threshold"] == 0.95


def test_defaults_fill_in():
    spec = C.load_config({})
    assert spec.scenario.n_agents == 10
    assert spec.scenario.lidar.n_laser == 130
    assert spec.net.d_h == 256
    assert spec.net.heads == 4
    assert abs(spec.scenario.lidar.fov - 0.8 * math.pi) < 1e-12
    assert spec.train.gamma == 0.99
    assert spec.eval.n_trials == 100
    assert len(spec.stages) == 1


def test_missing_file_is_config_error():
    with pytest.raises(ConfigError):
        C.load_config("/definitely/not/a/file.yaml")
