"""Rollout collection and generalized advantage estimation.

One buffer per training iteration. Transitions are laid out as
[sequence, time] where a sequence is one (world, agent) pair over the full
horizon; GAE runs along the time axis with done flags cutting the bootstrap,
then everything is flattened for minibatch updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import policy as policy_mod
from . import rewards as rewards_mod
from . import world as world_mod
from .errors import ContractError, NumericError


def compute_gae(rewards, values, dones, bootstrap, gamma, lam):
    """Reverse-recursion GAE.

    delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t
    A_t     = delta_t + gamma*lam*(1-done_t)*A_{t+1}
    returns = A + V

    Accepts [T] or [S, T] arrays; `bootstrap` is V of the post-horizon
    observation, scalar or [S].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values, dones = rewards[None], values[None], dones[None]
        bootstrap = np.asarray([bootstrap], dtype=np.float64)
    else:
        bootstrap = np.asarray(bootstrap, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ContractError(
            f"length mismatch: rewards {rewards.shape}, values {values.shape}, "
            f"dones {dones.shape}")
    s, t = rewards.shape
    adv = np.zeros((s, t))
    next_value = bootstrap
    next_adv = np.zeros(s)
    for k in range(t - 1, -1, -1):
        mask = 1.0 - dones[:, k]
        delta = rewards[:, k] + gamma * mask * next_value - values[:, k]
        next_adv = delta + gamma * lam * mask * next_adv
        adv[:, k] = next_adv
        next_value = values[:, k]
    ret = adv + values
    if squeeze:
        return adv[0], ret[0]
    return adv, ret


@dataclass
class RolloutBuffer:
    o_s: np.ndarray        # [S, T, stack, n_laser]
    o_gv: np.ndarray       # [S, T, 4]
    actions: np.ndarray    # [S, T, 2]
    logp: np.ndarray       # [S, T]
    rewards: np.ndarray    # [S, T]
    dones: np.ndarray      # [S, T]
    values: np.ndarray     # [S, T]
    bootstrap: np.ndarray  # [S]
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n_transitions(self):
        return int(self.rewards.size)

    def finalize(self, gamma, lam):
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, self.bootstrap, gamma, lam)
        return self

    def flat(self):
        """Flatten [S, T, ...] -> [S*T, ...] for shuffling into minibatches."""
        if self.advantages is None:
            raise ContractError("finalize() must run before flat()")
        n = self.n_transitions
        return {
            "o_s": self.o_s.reshape(n, *self.o_s.shape[2:]),
            "o_gv": self.o_gv.reshape(n, 4),
            "actions": self.actions.reshape(n, 2),
            "logp": self.logp.reshape(n),
            "values": self.values.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
        }


@dataclass
class RolloutStats:
    mean_episode_reward: float
    arrivals: int = 0
    collisions: int = 0
    respawns: int = 0


def collect_rollouts(params, net_cfg, reward_cfg, worlds, t_max, rng,
                     deterministic=False):
    """Run the frozen policy in every world for t_max steps.

    Training-mode semantics: a collision stores done=1 with the collision
    reward, then rewinds the agent via local replay; an arrival stores done=1
    with the arrival reward, then draws that agent a fresh goal. The buffer
    always ends up with (sum of agents) x t_max transitions.
    """
    pairs = [(w, a) for w, wd in enumerate(worlds) for a in range(len(wd.agents))]
    n_seq = len(pairs)
    scen = worlds[0].cfg
    beam_angles = scen.lidar.beam_angles()
    stack, n_laser = scen.stack, scen.lidar.n_laser

    dtype = params["log_sigma"].dtype
    buf = RolloutBuffer(
        o_s=np.zeros((n_seq, t_max, stack, n_laser), dtype=dtype),
        o_gv=np.zeros((n_seq, t_max, 4), dtype=dtype),
        actions=np.zeros((n_seq, t_max, 2), dtype=dtype),
        logp=np.zeros((n_seq, t_max), dtype=np.float64),
        rewards=np.zeros((n_seq, t_max)),
        dones=np.zeros((n_seq, t_max)),
        values=np.zeros((n_seq, t_max)),
        bootstrap=np.zeros(n_seq),
    )
    stats = RolloutStats(mean_episode_reward=0.0)

    def batch_obs():
        o_s = np.empty((n_seq, stack, n_laser), dtype=dtype)
        o_gv = np.empty((n_seq, 4), dtype=dtype)
        for row, (w, a) in enumerate(pairs):
            ob = world_mod.observe(worlds[w], a)
            o_s[row] = ob.o_s
            o_gv[row] = ob.o_gv
        return o_s, o_gv

    for t in range(t_max):
        o_s_b, o_gv_b = batch_obs()
        out = policy_mod.policy_outputs(params, net_cfg, o_s_b, o_gv_b)
        actions, logp = policy_mod.sample_action(out, rng, deterministic=deterministic)
        if not np.all(np.isfinite(actions)):
            raise NumericError(f"non-finite action at rollout step {t}")

        row = 0
        for w, wd in enumerate(worlds):
            n_a = len(wd.agents)
            acts = actions[row:row + n_a]
            prev = [(ag.x, ag.y, ag.goal.copy()) for ag in wd.agents]
            events = world_mod.step(wd, acts)
            for a, ev in enumerate(events):
                ag = wd.agents[a]
                px, py, goal = prev[a]
                scan = ag.scans[-1]
                _, _, r = rewards_mod.step_reward(
                    (px, py), (ag.x, ag.y), goal, scan, acts[a, 1], beam_angles,
                    reward_cfg, collided=ev.collided)
                done = ev.collided or ev.arrived
                s = row + a
                buf.o_s[s, t] = o_s_b[s]
                buf.o_gv[s, t] = o_gv_b[s]
                buf.actions[s, t] = actions[s]
                buf.logp[s, t] = logp[s]
                buf.rewards[s, t] = r
                buf.dones[s, t] = float(done)
                buf.values[s, t] = out.value[s]
                if ev.collided:
                    stats.collisions += 1
                    before = ag.collision_count
                    world_mod.apply_replay(wd, a)
                    if ag.collision_count < before + 1:
                        stats.respawns += 1
                elif ev.arrived:
                    stats.arrivals += 1
                    world_mod.resample_goal(wd, a)
            row += n_a

    o_s_b, o_gv_b = batch_obs()
    out = policy_mod.policy_outputs(params, net_cfg, o_s_b, o_gv_b)
    buf.bootstrap = out.value.astype(np.float64)
    stats.mean_episode_reward = float(buf.rewards.sum(axis=1).mean())
    return buf, stats
