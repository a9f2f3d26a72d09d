"""Run orchestration shared by the HTTP service and the CLI.

Every command writes only inside its out directory and drops a manifest.json
there with the exact resolved config and seeds, so any run can be reproduced
from its manifest alone (timestamps live only in the manifest).
"""

from __future__ import annotations

import datetime
import json
import os

import numpy as np

from . import config as config_mod
from . import evaluate as evaluate_mod
from . import policy as policy_mod
from . import render as render_mod
from . import rollout as rollout_mod
from . import trainer as trainer_mod
from . import world as world_mod
from .errors import ConfigError, ContractError

ARTIFACT_VERSION = "0.1.0"


def _load_config_source(config=None, config_path=None):
    if config is not None and config_path is not None:
        raise ConfigError("give either an inline config or a config path, not both")
    if config is None and config_path is None:
        raise ConfigError("a config (inline or path) is required")
    return config_mod.load_config(config if config is not None else config_path)


def _apply_overrides(raw, seed=None, variant=None, reward_mode=None):
    raw = json.loads(json.dumps(raw))  # deep copy
    if seed is not None:
        raw["train"]["seed"] = int(seed)
        raw["eval"]["seed"] = int(seed)
    if variant is not None:
        raw["net"]["variant"] = variant
    if reward_mode is not None:
        raw["reward"]["mode"] = reward_mode
    return raw


def write_manifest(out_dir, command, cfg_raw, extra):
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg_raw,
    }
    manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1)
    return path


def run_train(config=None, config_path=None, out_dir="run", seed=None,
              variant=None, reward_mode=None, progress=None):
    spec = _load_config_source(config, config_path)
    raw = _apply_overrides(spec.raw, seed=seed, variant=variant, reward_mode=reward_mode)
    spec = config_mod.load_config({k: raw[k] for k in ("scenario", "net", "reward",
                                                       "train", "eval")})
    os.makedirs(out_dir, exist_ok=True)
    result = trainer_mod.train(spec.scenario, spec.net, spec.reward, spec.train,
                               stages=spec.stages, out_dir=out_dir, progress=progress)
    summary = {
        "out_dir": out_dir,
        "checkpoints": result.checkpoints,
        "curves_path": result.curves_path,
        "final_sr": result.final_sr,
        "first_mean_reward": result.first_mean_reward,
        "best_mean_reward": result.best_mean_reward,
        "iterations_run": result.iterations_run,
        "stage_reached": result.stage_reached,
    }
    manifest_path = write_manifest(out_dir, "train", spec.raw,
                                   {"seed": spec.train.seed, **summary})
    summary["manifest_path"] = manifest_path
    return summary


def _scenario_for_eval(spec: config_mod.RunSpec, stage_index=None):
    """Evaluation runs on the (optionally staged) scenario of the config."""
    stages = spec.stages or []
    if stage_index is None:
        stage_index = len(stages) - 1 if stages else 0
    if stages:
        return trainer_mod._stage_scenario(spec.scenario, stages[stage_index])
    return spec.scenario


def run_eval(checkpoint, config=None, config_path=None, out_dir=None, n_trials=None,
             seed=None, deterministic=None, workers=1, save_trajectories=None,
             stage_index=None):
    params, net_cfg = policy_mod.load_policy(checkpoint)
    spec = _load_config_source(config, config_path)
    if net_cfg.to_dict() != spec.net.to_dict():
        # the checkpoint is authoritative for the net; the scenario must agree
        if (net_cfg.n_laser != spec.scenario.lidar.n_laser
                or net_cfg.stack != spec.scenario.stack):
            raise ConfigError(
                f"checkpoint expects n_laser={net_cfg.n_laser}/stack={net_cfg.stack}, "
                f"scenario provides {spec.scenario.lidar.n_laser}/{spec.scenario.stack}")
    scenario = _scenario_for_eval(spec, stage_index)
    ev = spec.eval
    n = n_trials if n_trials is not None else ev.n_trials
    seed = seed if seed is not None else ev.seed
    deterministic = ev.deterministic if deterministic is None else deterministic
    save_n = ev.save_trajectories if save_trajectories is None else save_trajectories

    traj_dir = os.path.join(out_dir, "trajectories") if out_dir else None
    metrics = evaluate_mod.run_trials(
        (params, net_cfg), scenario, spec.reward, n=n, seed=seed,
        deterministic=deterministic, horizon=ev.horizon, workers=workers,
        traj_dir=traj_dir, save_trajectories=save_n if traj_dir else 0)

    summary = {"metrics": metrics.to_dict(), "checkpoint": checkpoint,
               "n_trials": n, "seed": seed, "deterministic": deterministic}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.jsonl"), "w") as f:
            for r in metrics.records:
                f.write(json.dumps({"trial": r.trial, "agent": r.agent,
                                    "outcome": r.outcome, "steps": r.steps,
                                    "world_hash": r.world_hash}) + "\n")
        with open(os.path.join(out_dir, "metrics.txt"), "w") as f:
            f.write(evaluate_mod.CompareResult(
                rows=[(os.path.basename(checkpoint), metrics)],
                world_hashes_equal=True).table() + "\n")
        summary["manifest_path"] = write_manifest(
            out_dir, "eval", spec.raw,
            {"seed": seed, "checkpoint": checkpoint, "metrics": metrics.to_dict()})
    return summary


def run_compare(checkpoints, config=None, config_path=None, out_dir=None,
                n_trials=None, seed=None, deterministic=None, workers=1,
                labels=None, stage_index=None):
    spec = _load_config_source(config, config_path)
    scenario = _scenario_for_eval(spec, stage_index)
    ev = spec.eval
    n = n_trials if n_trials is not None else ev.n_trials
    seed = seed if seed is not None else ev.seed
    deterministic = ev.deterministic if deterministic is None else deterministic

    policies = []
    for i, path in enumerate(checkpoints):
        params, net_cfg = policy_mod.load_policy(path)
        label = labels[i] if labels and i < len(labels) else os.path.basename(path)
        policies.append((label, (params, net_cfg)))

    result = evaluate_mod.compare_policies(policies, scenario, spec.reward,
                                           n=n, seed=seed,
                                           deterministic=deterministic,
                                           horizon=ev.horizon, workers=workers)
    rows = [{"label": label, **m.to_dict()} for label, m in result.rows]
    summary = {"rows": rows, "world_hashes_equal": result.world_hashes_equal,
               "table": result.table()}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "compare.jsonl"), "w") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        with open(os.path.join(out_dir, "compare.txt"), "w") as f:
            f.write(result.table() + "\n")
        summary["manifest_path"] = write_manifest(
            out_dir, "compare", spec.raw,
            {"seed": seed, "checkpoints": list(checkpoints), "rows": rows})
    return summary


def run_plot(trajectory_path, world_path, out_path=None):
    try:
        with open(world_path) as f:
            world_dict = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ContractError(f"cannot read world file {world_path!r}: {e}")
    records = []
    try:
        with open(trajectory_path) as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
    except (OSError, json.JSONDecodeError) as e:
        raise ContractError(f"cannot read trajectory log {trajectory_path!r}: {e}")
    for rec in records:
        if int(rec.get("agent", -1)) >= len(world_dict.get("agents", [])):
            raise ContractError(
                f"trajectory references agent {rec.get('agent')} not present in world file")
    svg = render_mod.render_svg(world_dict, records)
    if out_path:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        with open(out_path, "w") as f:
            f.write(svg)
    return svg


def inspect_replay(checkpoint, config=None, config_path=None, seed=0,
                   max_steps=2000, post_steps=10):
    """Drive a training-mode rollout until the first collision and dump the
    history ring around the replay: ring contents before, the restored
    snapshot, and a few post-replay states."""
    params, net_cfg = policy_mod.load_policy(checkpoint)
    spec = _load_config_source(config, config_path)
    scenario = spec.scenario
    w = world_mod.generate_world(scenario, np.random.default_rng(seed), training=True)
    act_rng = np.random.default_rng(seed + 1)

    def snap_dict(s):
        return {"step": s.step, "x": s.x, "y": s.y, "theta": s.theta,
                "v_cmd": s.v_cmd, "w_cmd": s.w_cmd,
                "v_eff": s.v_eff, "w_eff": s.w_eff}

    for t in range(max_steps):
        active = w.active_indices()
        o_s = np.stack([world_mod.observe(w, i).o_s for i in active]).astype(np.float32)
        o_gv = np.stack([world_mod.observe(w, i).o_gv for i in active]).astype(np.float32)
        out = policy_mod.policy_outputs(params, net_cfg, o_s, o_gv)
        actions, _ = policy_mod.sample_action(out, act_rng)
        events = world_mod.step(w, actions)
        for ev in events:
            if not ev.collided:
                continue
            agent = w.agents[ev.agent]
            ring_before = [snap_dict(s) for s in agent.history]
            world_mod.apply_replay(w, ev.agent)
            report = {
                "collision_step": w.step_count,
                "agent": ev.agent,
                "hit": ev.hit,
                "n_replay": scenario.n_replay,
                "c_max": scenario.c_max,
                "ring_before": ring_before,
                # after the rewind the ring ends at the restored snapshot
                "restored": snap_dict(agent.history[-1]),
                "post_replay": [],
            }
            for _ in range(post_steps):
                active = w.active_indices()
                o_s = np.stack([world_mod.observe(w, i).o_s
                                for i in active]).astype(np.float32)
                o_gv = np.stack([world_mod.observe(w, i).o_gv
                                 for i in active]).astype(np.float32)
                out = policy_mod.policy_outputs(params, net_cfg, o_s, o_gv)
                actions, _ = policy_mod.sample_action(out, act_rng)
                world_mod.step(w, actions)
                a = w.agents[ev.agent]
                report["post_replay"].append(
                    {"step": w.step_count, "x": a.x, "y": a.y, "theta": a.theta})
            return report
        for ev in events:
            if ev.arrived:
                world_mod.resample_goal(w, ev.agent)
    return {"collision_step": None, "agent": None,
            "note": f"no collision within {max_steps} steps"}
