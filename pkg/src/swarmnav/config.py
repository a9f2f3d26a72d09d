"""Run configuration: one YAML file drives scenario + net + reward + train.

Sections map 1:1 onto the module dataclasses; unknown keys anywhere are
ConfigErrors naming the key. The net/reward sections inherit the LiDAR beam
count, frame stack, range cap, and control period from the scenario section;
stating a conflicting value is an error rather than a silent override.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .policy import NetConfig
from .rewards import RewardConfig
from .trainer import StageConfig, TrainConfig
from .world import ScenarioConfig


@dataclass
class EvalConfig:
    n_trials: int = 100
    seed: int = 1234
    deterministic: bool = True
    horizon: int | None = None
    save_trajectories: int = 1

    @classmethod
    def from_dict(cls, d):
        _check_keys(d, cls.__dataclass_fields__, "eval")
        return cls(**d)


@dataclass
class RunSpec:
    scenario: ScenarioConfig
    net: NetConfig
    reward: RewardConfig
    train: TrainConfig
    stages: list
    eval: EvalConfig
    raw: dict = field(default_factory=dict)


def _check_keys(d, allowed, section):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r} section: {sorted(unknown)}")


def _inherit(section, key, value, source):
    """Insert a scenario-derived value; reject explicit conflicts."""
    if key in section and section[key] != value:
        raise ConfigError(
            f"{source}: {key}={section[key]!r} conflicts with scenario value {value!r}")
    section[key] = value


def load_config(source) -> RunSpec:
    """Build a RunSpec from a YAML path, YAML text, or a plain dict."""
    if isinstance(source, dict):
        data = dict(source)
    else:
        text = source
        if "\n" not in str(source):
            try:
                with open(source) as f:
                    text = f.read()
            except OSError as e:
                raise ConfigError(f"cannot read config file {source!r}: {e}")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML: {e}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(data, {"scenario", "net", "reward", "train", "eval"}, "top-level")

    scenario = ScenarioConfig.from_dict(data.get("scenario", {}) or {})

    net_d = dict(data.get("net", {}) or {})
    _check_keys(net_d, NetConfig.__dataclass_fields__, "net")
    _inherit(net_d, "n_laser", scenario.lidar.n_laser, "net")
    _inherit(net_d, "stack", scenario.stack, "net")
    net = NetConfig.from_dict(net_d)

    reward_d = dict(data.get("reward", {}) or {})
    _check_keys(reward_d, RewardConfig.__dataclass_fields__, "reward")
    _inherit(reward_d, "z_max", scenario.lidar.z_max, "reward")
    _inherit(reward_d, "dt", scenario.dt, "reward")
    _inherit(reward_d, "arrival_threshold", scenario.arrival_threshold, "reward")
    reward = RewardConfig(**reward_d)

    train_d = dict(data.get("train", {}) or {})
    stages_d = train_d.pop("stages", None)
    _check_keys(train_d, TrainConfig.__dataclass_fields__, "train")
    train = TrainConfig(**train_d)

    stages = []
    for i, sd in enumerate(stages_d or [{}]):
        sd = dict(sd)
        _check_keys(sd, {"overrides", "sr_threshold", "name"}, f"train.stages[{i}]")
        stages.append(StageConfig(**sd))

    eval_cfg = EvalConfig.from_dict(dict(data.get("eval", {}) or {}))

    resolved = {
        "scenario": scenario.to_dict(),
        "net": net.to_dict(),
        "reward": {k: getattr(reward, k) for k in RewardConfig.__dataclass_fields__},
        "train": {k: getattr(train, k) for k in TrainConfig.__dataclass_fields__},
        "eval": {k: getattr(eval_cfg, k) for k in EvalConfig.__dataclass_fields__},
    }
    resolved["train"]["stages"] = [
        {"overrides": s.overrides, "sr_threshold": s.sr_threshold, "name": s.name}
        for s in stages
    ]
    return RunSpec(scenario=scenario, net=net, reward=reward, train=train,
                   stages=stages, eval=eval_cfg, raw=resolved)
