"""Batch evaluation: seeded trials, SR/CR/TR/AS metrics, paired comparisons.

Worlds are generated purely from (scenario config, evaluation seed, trial
index), never from the policy, so different policies evaluated with the same
seed see byte-identical worlds (paired evaluation). Collisions are terminal
here; there is no replay. Outcomes are per agent-trial: arrived within the
horizon without contact = success, any contact = collision, horizon without
either = trap.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import policy as policy_mod
from . import rewards as rewards_mod
from . import world as world_mod
from .errors import ContractError


@dataclass
class TrialRecord:
    trial: int
    agent: int
    outcome: str          # arrived | collided | timed_out
    steps: int
    world_hash: str


@dataclass
class Metrics:
    sr: float
    cr: float
    tr: float
    avg_steps: float | None   # mean steps over successes; None if none succeeded
    n_trials: int
    n_agents: int
    records: list = field(default_factory=list)

    def to_dict(self):
        return {"sr": self.sr, "cr": self.cr, "tr": self.tr,
                "avg_steps": self.avg_steps, "n_trials": self.n_trials,
                "n_agents": self.n_agents}


def _policy_fn(policy, deterministic, rng):
    """Normalize the policy argument: (params, net_cfg) or a callable
    (o_s, o_gv) -> actions."""
    if callable(policy):
        return policy
    params, net_cfg = policy

    def fn(o_s, o_gv):
        out = policy_mod.policy_outputs(params, net_cfg, o_s, o_gv)
        actions, _ = policy_mod.sample_action(out, rng, deterministic=deterministic)
        return actions

    return fn


def trial_seed(seed, k):
    return np.random.SeedSequence(entropy=seed, spawn_key=(k,))


def run_trial(policy, scenario, reward_cfg, seed, k, deterministic=True,
              horizon=None, trajectory=None):
    """One seeded world, run to completion; returns (records, world dict)."""
    wrng = np.random.default_rng(trial_seed(seed, k))
    w = world_mod.generate_world(scenario, wrng, training=False)
    whash = world_mod.world_hash(w)
    horizon = horizon or scenario.t_episode
    act_rng = np.random.default_rng(trial_seed(seed, k).spawn(1)[0])
    fn = _policy_fn(policy, deterministic, act_rng)
    beam_angles = scenario.lidar.beam_angles()

    if trajectory is not None:
        for i, ag in enumerate(w.agents):
            trajectory.append({"step": 0, "agent": i, "x": ag.x, "y": ag.y,
                               "theta": ag.theta, "v": 0.0, "omega": 0.0,
                               "reward": 0.0, "event": "start"})

    while True:
        active = w.active_indices()
        if not active:
            break
        o_s = np.stack([world_mod.observe(w, i).o_s for i in active])
        o_gv = np.stack([world_mod.observe(w, i).o_gv for i in active])
        prev = [(w.agents[i].x, w.agents[i].y) for i in active]
        actions = fn(o_s.astype(np.float32), o_gv.astype(np.float32))
        events = world_mod.step(w, actions)
        for row, ev in enumerate(events):
            i = ev.agent
            ag = w.agents[i]
            event = None
            if ev.collided:
                world_mod.mark_done(w, i, "collided")
                ag.pending_collision = False
                event = "collided"
            elif ev.arrived:
                world_mod.mark_done(w, i, "arrived")
                event = "arrived"
            if trajectory is not None:
                _, _, r = rewards_mod.step_reward(
                    prev[row], (ag.x, ag.y), ag.goal, ag.scans[-1],
                    float(actions[row][1]), beam_angles, reward_cfg,
                    collided=ev.collided)
                trajectory.append({"step": w.step_count, "agent": i,
                                   "x": ag.x, "y": ag.y, "theta": ag.theta,
                                   "v": float(actions[row][0]),
                                   "omega": float(actions[row][1]),
                                   "reward": r, "event": event})
        if w.step_count >= horizon:
            for i in w.active_indices():
                world_mod.mark_done(w, i, "timed_out")
                if trajectory is not None:
                    trajectory.append({"step": w.step_count, "agent": i,
                                       "x": w.agents[i].x, "y": w.agents[i].y,
                                       "theta": w.agents[i].theta, "v": 0.0,
                                       "omega": 0.0, "reward": 0.0,
                                       "event": "timed_out"})
            break

    records = [TrialRecord(trial=k, agent=i, outcome=ag.status,
                           steps=ag.done_step if ag.done_step is not None else horizon,
                           world_hash=whash)
               for i, ag in enumerate(w.agents)]
    return records, w.to_dict()


def _trial_worker(args):
    params, net_cfg_dict, scen_dict, reward_dict, seed, k, deterministic, horizon = args
    scenario = world_mod.ScenarioConfig.from_dict(scen_dict)
    reward_cfg = rewards_mod.RewardConfig(**reward_dict)
    net_cfg = policy_mod.NetConfig.from_dict(net_cfg_dict)
    records, _ = run_trial((params, net_cfg), scenario, reward_cfg, seed, k,
                           deterministic=deterministic, horizon=horizon)
    return records


def run_trials(policy, scenario, reward_cfg, n, seed, deterministic=True,
               horizon=None, workers=1, traj_dir=None, save_trajectories=0):
    """n independent seeded trials; aggregates per agent-trial outcomes.

    With traj_dir set, the first `save_trajectories` trials write a world
    JSON and a JSONL trajectory log for later plotting.
    """
    records = []
    if workers > 1 and not callable(policy):
        params, net_cfg = policy
        args = [(params, net_cfg.to_dict(), scenario.to_dict(),
                 _reward_dict(reward_cfg), seed, k, deterministic, horizon)
                for k in range(n)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_trial_worker, args, chunksize=max(1, n // (4 * workers))):
                records.extend(recs)
    else:
        for k in range(n):
            trajectory = [] if (traj_dir and k < save_trajectories) else None
            recs, wdict = run_trial(policy, scenario, reward_cfg, seed, k,
                                    deterministic=deterministic, horizon=horizon,
                                    trajectory=trajectory)
            records.extend(recs)
            if trajectory is not None:
                os.makedirs(traj_dir, exist_ok=True)
                with open(os.path.join(traj_dir, f"trial_{k:04d}_world.json"), "w") as f:
                    json.dump(wdict, f, indent=1)
                with open(os.path.join(traj_dir, f"trial_{k:04d}_traj.jsonl"), "w") as f:
                    for rec in trajectory:
                        f.write(json.dumps(rec) + "\n")
    records.sort(key=lambda r: (r.trial, r.agent))
    return aggregate(records, n)


def aggregate(records, n_trials):
    total = len(records)
    if total == 0:
        raise ContractError("no trial records to aggregate")
    n_s = sum(1 for r in records if r.outcome == "arrived")
    n_c = sum(1 for r in records if r.outcome == "collided")
    n_t = sum(1 for r in records if r.outcome == "timed_out")
    if n_s + n_c + n_t != total:
        raise ContractError("trial outcomes are not mutually exclusive/exhaustive")
    avg = (sum(r.steps for r in records if r.outcome == "arrived") / n_s
           if n_s else None)
    return Metrics(sr=n_s / total, cr=n_c / total, tr=n_t / total,
                   avg_steps=avg, n_trials=n_trials,
                   n_agents=total // max(n_trials, 1), records=records)


def _reward_dict(cfg: rewards_mod.RewardConfig):
    return {k: getattr(cfg, k) for k in rewards_mod.RewardConfig.__dataclass_fields__}


@dataclass
class CompareResult:
    rows: list                      # [(label, Metrics)]
    world_hashes_equal: bool

    def table(self):
        lines = [f"{'policy':<24} {'SR':>8} {'CR':>8} {'TR':>8} {'AS':>10}"]
        for label, m in self.rows:
            as_txt = f"{m.avg_steps:10.2f}" if m.avg_steps is not None else f"{'-':>10}"
            lines.append(f"{label:<24} {m.sr:8.4f} {m.cr:8.4f} {m.tr:8.4f} {as_txt}")
        return "\n".join(lines)


def compare_policies(policies, scenario, reward_cfg, n, seed, deterministic=True,
                     horizon=None, workers=1):
    """Evaluate several (label, policy) pairs on identical world seeds."""
    rows = []
    hash_sets = []
    for label, pol in policies:
        m = run_trials(pol, scenario, reward_cfg, n, seed,
                       deterministic=deterministic, horizon=horizon, workers=workers)
        rows.append((label, m))
        hash_sets.append([r.world_hash for r in m.records])
    equal = all(h == hash_sets[0] for h in hash_sets[1:])
    return CompareResult(rows=rows, world_hashes_equal=equal)
