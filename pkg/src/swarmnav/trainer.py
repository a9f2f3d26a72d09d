"""Clipped-surrogate policy optimization over collected rollouts.

Each iteration: collect one fixed-horizon rollout batch from fresh random
worlds against a frozen parameter snapshot, compute GAE, then run K epochs of
shuffled minibatch updates on the clipped policy loss, clipped value loss,
and entropy term. A staged curriculum swaps in denser scenarios once the
rolling evaluation success rate clears a threshold.
"""

from __future__ import annotations

import copy
import json
import math
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import evaluate as evaluate_mod
from . import policy as policy_mod
from . import rollout as rollout_mod
from . import world as world_mod
from .autodiff import AdamState, Graph, adam_step
from .errors import ConfigError, ContractError, NumericError


@dataclass
class TrainConfig:
    iterations: int = 100
    t_max: int = 2500
    epochs: int = 4
    minibatch: int = 1024
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    value_clip: float | None = None      # defaults to `clip`
    value_coef: float = 0.5              # alpha
    entropy_coef: float = -0.01          # beta; negative = entropy bonus
    adv_norm: bool = True
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_worlds: int = 4
    seed: int = 0
    eval_episodes: int = 10              # per-iteration SR probe; 0 disables
    eval_every: int = 1
    eval_horizon: int | None = None      # defaults to scenario t_episode
    sr_window: int = 100
    checkpoint_every: int = 10

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError("gamma must be in [0, 1)")
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError("lam must be in [0, 1]")
        if self.clip <= 0 or self.epochs < 1:
            raise ConfigError("need clip > 0 and epochs >= 1")


@dataclass
class StageConfig:
    """One curriculum stage: scenario field overrides + advance threshold."""
    overrides: dict = field(default_factory=dict)
    sr_threshold: float = 0.9
    name: str = ""


def ppo_losses(g: Graph, params, net_cfg, batch, clip_eps, value_clip_eps,
               value_coef, entropy_coef):
    """Build the loss graph for one minibatch; returns tensors.

    batch carries collection-time log-probs and values; advantages are
    expected to be pre-normalized by the caller when enabled.
    """
    o_s = g.constant(batch["o_s"])
    o_gv = g.constant(batch["o_gv"])
    mu, value, log_sigma = policy_mod.forward(g, params, net_cfg, o_s, o_gv)

    new_logp = g.gaussian_logp(mu, log_sigma, batch["actions"])
    ratio = g.exp(g.sub(new_logp, g.constant(batch["logp"])))
    adv = g.constant(batch["advantages"])
    surrogate = g.minimum(g.mul(ratio, adv),
                          g.mul(g.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv))
    l_p = g.scalar_mul(g.reduce_mean(surrogate), -1.0)

    ret = g.constant(batch["returns"])
    old_v = g.constant(batch["values"])
    err = g.sub(value, ret)
    clipped_v = g.add(old_v, g.clip(g.sub(value, old_v), -value_clip_eps, value_clip_eps))
    l_v = g.reduce_mean(g.maximum(g.square(err), g.square(g.sub(clipped_v, ret))))

    l_e = g.gaussian_entropy(log_sigma)

    total = g.add(g.add(l_p, g.scalar_mul(l_v, value_coef)),
                  g.scalar_mul(l_e, entropy_coef))
    for name, t in (("policy", l_p), ("value", l_v), ("entropy", l_e)):
        if not np.all(np.isfinite(t.value)):
            raise NumericError(f"non-finite {name} loss")
    return {"l_p": l_p, "l_v": l_v, "l_e": l_e, "total": total}


def update(buf: rollout_mod.RolloutBuffer, params, opt_state: AdamState,
           net_cfg, cfg: TrainConfig, rng):
    """K epochs of shuffled minibatch steps over a finalized buffer."""
    if buf.advantages is None:
        raise ContractError("buffer must be finalized before update()")
    theta_old = {k: v.copy() for k, v in params.items()}

    flat = buf.flat()
    adv = flat["advantages"].astype(np.float64)
    if cfg.adv_norm:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    dtype = params["log_sigma"].dtype
    value_clip = cfg.clip if cfg.value_clip is None else cfg.value_clip

    n = len(adv)
    stats = {"l_p": 0.0, "l_v": 0.0, "l_e": 0.0, "n_minibatches": 0}
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            batch = {
                "o_s": flat["o_s"][idx].astype(dtype),
                "o_gv": flat["o_gv"][idx].astype(dtype),
                "actions": flat["actions"][idx].astype(dtype),
                "logp": flat["logp"][idx].astype(dtype),
                "values": flat["values"][idx].astype(dtype),
                "advantages": adv[idx].astype(dtype),
                "returns": flat["returns"][idx].astype(dtype),
            }
            g = Graph(dtype=dtype)
            try:
                losses = ppo_losses(g, params, net_cfg, batch, cfg.clip, value_clip,
                                    cfg.value_coef, cfg.entropy_coef)
                grads = g.backward(losses["total"])
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, minibatch {start // cfg.minibatch}: {e}")
            adam_step(params, grads, opt_state)
            policy_mod.clamp_log_sigma(params, net_cfg)
            stats["l_p"] += float(losses["l_p"].value)
            stats["l_v"] += float(losses["l_v"].value)
            stats["l_e"] += float(losses["l_e"].value)
            stats["n_minibatches"] += 1

    k = max(stats["n_minibatches"], 1)
    stats["l_p"] /= k
    stats["l_v"] /= k
    stats["l_e"] /= k
    stats["theta_old"] = theta_old
    return stats


@dataclass
class TrainResult:
    checkpoints: list
    curves_path: str
    final_sr: float | None
    best_mean_reward: float
    first_mean_reward: float
    iterations_run: int
    stage_reached: int


def _stage_scenario(base: world_mod.ScenarioConfig, stage: StageConfig):
    d = base.to_dict()
    for key, val in stage.overrides.items():
        if key == "lidar":
            d["lidar"] = {**d["lidar"], **val}
        elif key not in d:
            raise ConfigError(f"unknown scenario override {key!r} in stage")
        else:
            d[key] = val
    return world_mod.ScenarioConfig.from_dict(d)


def train(scenario: world_mod.ScenarioConfig, net_cfg, reward_cfg,
          cfg: TrainConfig, stages=None, out_dir=".", progress=None):
    """Full training loop; writes checkpoints and a JSONL curve log.

    Returns a TrainResult. With iterations=0 only the initial checkpoint is
    written (useful for wiring tests).
    """
    os.makedirs(out_dir, exist_ok=True)
    stages = list(stages) if stages else [StageConfig()]
    stage_scens = [_stage_scenario(scenario, s) for s in stages]

    root = np.random.SeedSequence(cfg.seed)
    init_seq, world_seq, act_seq, shuffle_seq, eval_seq = root.spawn(5)
    init_rng = np.random.default_rng(init_seq)
    world_rng = np.random.default_rng(world_seq)
    act_rng = np.random.default_rng(act_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)

    params = policy_mod.init_params(net_cfg, init_rng, dtype=np.float32)
    opt = AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1,
                               beta2=cfg.beta2, eps=cfg.eps)

    checkpoints = []

    def save(tag, iteration):
        path = os.path.join(out_dir, f"checkpoint_{tag}.ckpt")
        policy_mod.save_policy(path, params, net_cfg,
                               extra_meta={"iteration": iteration, "seed": cfg.seed})
        checkpoints.append(path)
        return path

    save("init", 0)
    curves_path = os.path.join(out_dir, "curves.jsonl")
    curve_f = open(curves_path, "w")

    stage_idx = 0
    window = deque(maxlen=cfg.sr_window)
    sr = None
    first_reward = None
    best_reward = -math.inf
    eval_tick = 0

    try:
        for it in range(1, cfg.iterations + 1):
            scen = stage_scens[stage_idx]
            worlds = [world_mod.generate_world(scen, np.random.default_rng(w_seq),
                                               training=True)
                      for w_seq in world_seq.spawn(cfg.n_worlds)]
            for w in worlds:
                world_mod.reset_collision_counts(w)

            buf, roll = rollout_mod.collect_rollouts(
                params, net_cfg, reward_cfg, worlds, cfg.t_max, act_rng)
            buf.finalize(cfg.gamma, cfg.lam)
            stats = update(buf, params, opt, net_cfg, cfg, shuffle_rng)

            if first_reward is None:
                first_reward = roll.mean_episode_reward
            best_reward = max(best_reward, roll.mean_episode_reward)

            sr_now = None
            if cfg.eval_episodes > 0 and it % cfg.eval_every == 0:
                eval_tick += 1
                horizon = cfg.eval_horizon or scen.t_episode
                metrics = evaluate_mod.run_trials(
                    (params, net_cfg), scen, reward_cfg,
                    n=cfg.eval_episodes, seed=_spawn_int(eval_seq, eval_tick),
                    deterministic=True, horizon=horizon)
                for rec in metrics.records:
                    window.append(1.0 if rec.outcome == "arrived" else 0.0)
                sr = sr_now = sum(window) / len(window)
                if (stage_idx < len(stages) - 1 and len(window) == cfg.sr_window
                        and sr >= stages[stage_idx].sr_threshold):
                    stage_idx += 1
                    window.clear()

            record = {
                "iteration": it,
                "stage": stage_idx,
                "mean_reward": roll.mean_episode_reward,
                "l_p": stats["l_p"],
                "l_v": stats["l_v"],
                "l_e": stats["l_e"],
                "sr": sr_now,
                "arrivals": roll.arrivals,
                "collisions": roll.collisions,
            }
            curve_f.write(json.dumps(record) + "\n")
            curve_f.flush()
            if progress:
                progress(record)
            if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                save(f"{it:05d}", it)
    finally:
        curve_f.close()

    save("final", cfg.iterations)
    return TrainResult(
        checkpoints=checkpoints,
        curves_path=curves_path,
        final_sr=sr,
        best_mean_reward=best_reward if best_reward > -math.inf else 0.0,
        first_mean_reward=first_reward if first_reward is not None else 0.0,
        iterations_run=cfg.iterations,
        stage_reached=stage_idx,
    )


def _spawn_int(seed_seq, tick):
    """Stable per-tick evaluation seed derived from the training seed."""
    return int(np.random.SeedSequence(entropy=seed_seq.entropy,
                                      spawn_key=(977, tick)).generate_state(1)[0])
