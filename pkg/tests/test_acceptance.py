"""Acceptance suite: one test per criterion, printing a PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
The training-smoke criterion (6) trains two small policies from scratch and
is the long pole (minutes, not seconds); everything else is fast.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from swarmnav import evaluate as E
from swarmnav import policy
from swarmnav import rewards as R
from swarmnav import trainer as T
from swarmnav import world as W
from swarmnav.autodiff import Graph
from swarmnav.rollout import compute_gae

from conftest import check_grads
from test_trainer import gae_oracle, make_batch, params64, NET as TINY_NET
from test_world import raymarch_scan, inside_obstacle, quiet


@contextmanager
def criterion(num, name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num} {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {num} {name}: PASS")


# -- 1: gradient integrity ------------------------------------------------------


def test_criterion_1_gradient_integrity(rng):
    with criterion(1, "gradient integrity"):
        t0 = time.time()
        cfg = TINY_NET
        params = params64(seed=1)

        def component_case(op):
            probe = Graph(dtype=np.float64)
            proj = rng.normal(size=op(probe, params).value.shape)

            def build(p):
                g = Graph(dtype=np.float64)
                return float(g.reduce_sum(g.mul(op(g, p), g.constant(proj))).value)

            g = Graph(dtype=np.float64)
            loss = g.reduce_sum(g.mul(op(g, params), g.constant(proj)))
            grads = g.backward(loss)
            check_grads(build, grads, params, rng, n_points=20, rel_tol=1e-3)

        seq = rng.uniform(0, 1, size=(2, cfg.stack, cfg.n_laser))
        ogv = rng.normal(size=(2, 4))
        component_case(lambda g, p: policy.gru_forward(g, p, cfg, g.constant(seq)))
        h_fixed = rng.normal(size=(2, cfg.stack, cfg.d_h))
        component_case(lambda g, p: policy.attention(g, p, cfg, g.constant(h_fixed)))
        component_case(lambda g, p: policy.encode_state(g, p, cfg, g.constant(ogv)))

        batch = make_batch(rng, params, n=6)

        def build_loss(p):
            g = Graph(dtype=np.float64)
            losses = T.ppo_losses(g, p, cfg, batch, clip_eps=0.2, value_clip_eps=0.2,
                                  value_coef=0.5, entropy_coef=-0.01)
            return float(losses["total"].value)

        g = Graph(dtype=np.float64)
        losses = T.ppo_losses(g, params, cfg, batch, clip_eps=0.2, value_clip_eps=0.2,
                              value_coef=0.5, entropy_coef=-0.01)
        grads = g.backward(losses["total"])
        check_grads(build_loss, grads, params, rng, n_points=20, rel_tol=1e-3)

        assert time.time() - t0 < 60.0


# -- 2: GAE oracle ----------------------------------------------------------------


def test_criterion_2_gae_oracle(rng):
    with criterion(2, "GAE recursion vs direct double sum"):
        t0 = time.time()
        for _ in range(1000):
            t_len = int(rng.integers(1, 65))
            r = rng.normal(size=t_len)
            v = rng.normal(size=t_len)
            done = (rng.random(t_len) < 0.2).astype(float)
            boot = float(rng.normal())
            gamma = float(rng.uniform(0.9, 0.999))
            lam = float(rng.uniform(0.8, 1.0))
            adv, ret = compute_gae(r, v, done, boot, gamma, lam)
            oadv, oret = gae_oracle(r, v, done, boot, gamma, lam)
            assert np.max(np.abs(adv - oadv)) < 1e-10
            assert np.max(np.abs(ret - oret)) < 1e-10
        assert time.time() - t0 < 10.0


# -- 3: PPO loss anchors ------------------------------------------------------------


def test_criterion_3_ppo_loss_anchors(rng):
    with criterion(3, "PPO loss anchors"):
        params = params64(seed=2)
        eps = 0.2

        batch = make_batch(rng, params)
        g = Graph(dtype=np.float64)
        losses = T.ppo_losses(g, params, TINY_NET, batch, clip_eps=eps,
                              value_clip_eps=eps, value_coef=0.5, entropy_coef=-0.01)
        assert float(losses["l_p"].value) == -float(np.mean(batch["advantages"]))

        batch = make_batch(rng, params)
        batch["advantages"] = np.ones_like(batch["advantages"])
        batch["logp"] = batch["logp"] - math.log(1.0 + 2.0 * eps)
        g = Graph(dtype=np.float64)
        losses = T.ppo_losses(g, params, TINY_NET, batch, clip_eps=eps,
                              value_clip_eps=eps, value_coef=0.5, entropy_coef=0.0)
        assert abs(float(losses["l_p"].value) - (-(1.0 + eps))) < 1e-12

        batch["advantages"] = -np.ones_like(batch["advantages"])
        g = Graph(dtype=np.float64)
        losses = T.ppo_losses(g, params, TINY_NET, batch, clip_eps=eps,
                              value_clip_eps=eps, value_coef=0.5, entropy_coef=0.0)
        assert abs(float(losses["l_p"].value) - (1.0 + 2.0 * eps)) < 1e-12

        params["log_sigma"] = np.zeros(2)
        batch = make_batch(rng, params)
        g = Graph(dtype=np.float64)
        losses = T.ppo_losses(g, params, TINY_NET, batch, clip_eps=eps,
                              value_clip_eps=eps, value_coef=0.5, entropy_coef=-0.01)
        assert abs(float(losses["l_e"].value) - math.log(2 * math.pi * math.e)) < 1e-9


# -- 4: reward properties ----------------------------------------------------------


def test_criterion_4_reward_properties(rng):
    with criterion(4, "reward properties"):
        cfg = R.RewardConfig()
        angles = W.LidarConfig(n_laser=61, fov=2 * math.pi).beam_angles()

        for omega in np.linspace(-2.5, 2.5, 21):
            w = R.hs_weights(float(omega), angles, cfg)
            assert abs(w.sum() - 1.0) < 1e-9
            center = omega * cfg.dt
            idx = int(np.argmax(w))
            spacing = angles[1] - angles[0]
            assert abs(angles[idx] - center) <= spacing / 2 + 1e-12
            nearest = int(np.argmin(np.abs(angles - center)))
            for k in range(1, 5):
                if 0 <= nearest - k and nearest + k < len(angles):
                    lo = R.gaussian_pdf(angles[nearest - k], center, cfg.sigma_hs)
                    hi = R.gaussian_pdf(angles[nearest + k], center, cfg.sigma_hs)
                    d_lo = abs(angles[nearest - k] - center)
                    d_hi = abs(angles[nearest + k] - center)
                    if abs(d_lo - d_hi) < 1e-12:
                        assert abs(lo - hi) < 1e-9

        scan = rng.uniform(0.5, 4.0, size=61)
        base = R.obstacle_reward(scan, 0.4, angles, cfg)
        for _ in range(50):
            j = rng.integers(61)
            closer = scan.copy()
            closer[j] -= 0.3
            assert R.obstacle_reward(closer, 0.4, angles, cfg) <= base + 1e-12

        # scalar substitution anchors
        assert R.goal_reward((2.0, 0.0), (1.5, 0.0), (0.0, 0.0),
                             R.RewardConfig(w_g=2.5)) == pytest.approx(1.25, abs=1e-12)
        assert abs(R.gaussian_pdf(0.0, 0.0, 1.0) - 1.0 / math.sqrt(2 * math.pi)) < 1e-12
        assert abs(R.gaussian_pdf(0.6, 0.1, 0.5) - 0.48394144903828673) < 1e-10
        c = R.RewardConfig(k_c=0.5, sigma_hs=0.05)
        got = R.obstacle_reward(np.array([4.0, 3.0, 4.0]), 0.0,
                                np.array([-2.0, 0.0, 2.0]), c)
        assert abs(got - (-0.5)) < 1e-9
        assert R.conventional_obstacle_reward(np.array([4.0, 1.0, 3.0]),
                                              R.RewardConfig(k_c=0.5)) == \
            pytest.approx(-1.5, abs=1e-12)
        assert R.total_reward(1.25, -0.5) == 0.75


# -- 5: simulator fidelity -----------------------------------------------------------


def test_criterion_5_simulator_fidelity(rng):
    with criterion(5, "simulator fidelity"):
        t0 = time.time()

        # LiDAR vs raymarch over 100 random worlds
        worst = 0.0
        for seed in range(100):
            cfg = quiet(W.ScenarioConfig(arena=(8, 8), n_obstacles=6, n_agents=2,
                                         lidar=W.LidarConfig(n_laser=12, sigma_z=0.0)))
            w = W.generate_world(cfg, seed, training=False)
            scan = W.lidar_scan(w, 0)
            ref = raymarch_scan(w, 0)
            worst = max(worst, float(np.max(np.abs(scan - ref))))
        assert worst < 2e-4, f"lidar max err {worst}"

        # unicycle arc vs 1000-substep Euler
        for _ in range(100):
            x, y = rng.uniform(-1, 1, 2)
            theta = rng.uniform(-math.pi, math.pi)
            v = rng.uniform(0, 1)
            om = rng.uniform(-math.pi, math.pi)
            gx, gy, _ = W.integrate_unicycle(x, y, theta, v, om, 1 / 60)
            ex, ey, et = x, y, theta
            h = (1 / 60) / 1000
            for _ in range(1000):
                ex += v * math.cos(et) * h
                ey += v * math.sin(et) * h
                et += om * h
            assert math.hypot(gx - ex, gy - ey) < 1e-6

        # replay restores the exact n_replay-prior state
        cfg = quiet(W.ScenarioConfig(
            arena=(16, 6), n_obstacles=1, n_agents=1,
            lidar=W.LidarConfig(n_laser=5, sigma_z=0.0),
            obstacles=[{"kind": "circle", "x": 0.2, "y": 0.0, "r": 0.5}],
            agents=[{"start": [-7.0, 0.0, 0.0], "goal": [-5.0, 1.5]}]))
        w = W.generate_world(cfg, 0, training=True)
        log = {}
        collided_at = None
        for _ in range(2000):
            events = W.step(w, np.array([[1.0, 0.0]]))
            a = w.agents[0]
            log[w.step_count] = (a.x, a.y, a.theta, a.v_cmd, a.w_cmd, a.v_eff, a.w_eff)
            if events[0].collided:
                collided_at = w.step_count
                break
        assert collided_at is not None and collided_at > cfg.n_replay
        W.apply_replay(w, 0)
        a = w.agents[0]
        assert (a.x, a.y, a.theta, a.v_cmd, a.w_cmd, a.v_eff, a.w_eff) == \
            log[collided_at - cfg.n_replay]

        # no tunneling across 10,000 adversarial steps
        cfg = quiet(W.ScenarioConfig(
            arena=(8, 8), n_obstacles=1, n_agents=1,
            lidar=W.LidarConfig(n_laser=3, sigma_z=0.0),
            obstacles=[{"kind": "square", "x": 0.0, "y": 0.0, "theta": 0.3}],
            agents=[{"start": [-2.0, 0.0, 0.0], "goal": [3.0, 0.0]}]))
        w = W.generate_world(cfg, 0, training=True)
        ob = w.obstacles[0]
        arng = np.random.default_rng(7)
        overlaps = 0
        for i in range(10000):
            events = W.step(w, np.array([[arng.uniform(0.5, 1.0),
                                          arng.uniform(-0.5, 0.5)]]))
            a = w.agents[0]
            if inside_obstacle(ob, a.x, a.y, inflate=a.radius):
                overlaps += 1
                assert events[0].collided, f"undetected overlap at step {i}"
            if events[0].collided:
                W.apply_replay(w, 0)
            if abs(a.x) > 2.5 or abs(a.y) > 2.5:
                a.x, a.y, a.theta = -2.0, arng.uniform(-0.4, 0.4), arng.uniform(-0.5, 0.5)
        assert overlaps > 0

        assert time.time() - t0 < 120.0


# -- 6: desk-scale training smoke ----------------------------------------------------

SMOKE_SCENARIO = dict(
    arena=(8.0, 8.0), n_obstacles=5, n_agents=1, stack=5,
    lidar=W.LidarConfig(n_laser=32, z_max=4.0, sigma_z=0.02),
    sigma_slip=0.05)
SMOKE_NET = policy.NetConfig(n_laser=32, stack=5, d_h=64, heads=4, gru_layers=2,
                             actor_hidden=(64, 64), critic_hidden=(64, 64))
SMOKE_TRAIN = dict(iterations=40, t_max=600, n_worlds=8, epochs=4, minibatch=1024,
                   seed=0, lr=3e-4, eval_episodes=0, checkpoint_every=0)
SMOKE_KC = 0.25
SMOKE_EVAL_N = 100
SMOKE_EVAL_SEED = 20339
SMOKE_EVAL_HORIZON = 1500


def _smoke_run(mode, out_dir):
    scen = W.ScenarioConfig(**SMOKE_SCENARIO)
    rcfg = R.RewardConfig(mode=mode, k_c=SMOKE_KC, dt=scen.dt,
                          z_max=scen.lidar.z_max)
    tcfg = T.TrainConfig(**SMOKE_TRAIN)
    result = T.train(scen, SMOKE_NET, rcfg, tcfg, out_dir=str(out_dir))
    params, net_cfg = policy.load_policy(result.checkpoints[-1])
    metrics = E.run_trials((params, net_cfg), scen, rcfg, n=SMOKE_EVAL_N,
                           seed=SMOKE_EVAL_SEED, deterministic=True,
                           horizon=SMOKE_EVAL_HORIZON)
    return result, metrics


def test_criterion_6_training_smoke(tmp_path):
    with criterion(6, "desk-scale training smoke (stage 1 + ablation)"):
        t0 = time.time()
        hs_result, hs_metrics = _smoke_run("hs", tmp_path / "hs")
        conv_result, conv_metrics = _smoke_run("conventional", tmp_path / "conv")
        elapsed = (time.time() - t0) / 60.0
        print(f"\n  hs: first reward {hs_result.first_mean_reward:.1f}, "
              f"best {hs_result.best_mean_reward:.1f}, SR {hs_metrics.sr:.2f}")
        print(f"  conventional: first reward {conv_result.first_mean_reward:.1f}, "
              f"best {conv_result.best_mean_reward:.1f}, SR {conv_metrics.sr:.2f}")
        print(f"  wall time {elapsed:.1f} min")
        assert hs_result.best_mean_reward > hs_result.first_mean_reward
        assert hs_metrics.sr >= 0.6, f"HS SR {hs_metrics.sr}"
        assert hs_metrics.sr >= conv_metrics.sr - 0.05, \
            f"HS {hs_metrics.sr} vs conventional {conv_metrics.sr}"
        assert elapsed <= 30.0


# -- 7: throughput ---------------------------------------------------------------------


def test_criterion_7_forward_throughput(rng):
    with criterion(7, "single-observation forward throughput"):
        cfg = policy.NetConfig()  # full-size network
        params = policy.init_params(cfg, np.random.default_rng(0), dtype=np.float32)
        o_s = rng.uniform(0, 1, size=(1, cfg.stack, cfg.n_laser)).astype(np.float32)
        o_gv = rng.normal(size=(1, 4)).astype(np.float32)
        for _ in range(20):
            policy.policy_outputs(params, cfg, o_s, o_gv)
        times = []
        for _ in range(200):
            t0 = time.perf_counter()
            policy.policy_outputs(params, cfg, o_s, o_gv)
            times.append(time.perf_counter() - t0)
        median = sorted(times)[len(times) // 2]
        mean = sum(times) / len(times)
        print(f"\n  forward latency: median {median * 1e3:.2f} ms, "
              f"mean {mean * 1e3:.2f} ms, throughput {1.0 / mean:.0f}/s")
        assert median < 0.010
        assert 1.0 / mean >= 300.0


# -- 8: parameter count ------------------------------------------------------------------


def test_criterion_8_parameter_count():
    with criterion(8, "default parameter count"):
        n = policy.param_count(policy.NetConfig())
        print(f"\n  default config parameter count: {n}")
        assert 1.0e6 <= n <= 1.5e6
        assert n == 1349765  # documented derivation in README


# -- 9: metrics algebra --------------------------------------------------------------------


def test_criterion_9_metrics_algebra():
    with criterion(9, "metrics algebra and paired worlds"):
        scen = quiet(W.ScenarioConfig(arena=(6, 6), n_obstacles=4, n_agents=3,
                                      stack=TINY_NET.stack,
                                      lidar=W.LidarConfig(n_laser=TINY_NET.n_laser,
                                                          sigma_z=0.0)))
        p1 = policy.init_params(TINY_NET, np.random.default_rng(0), dtype=np.float32)
        p2 = policy.init_params(TINY_NET, np.random.default_rng(9), dtype=np.float32)
        res = E.compare_policies([("a", (p1, TINY_NET)), ("b", (p2, TINY_NET))],
                                 scen, R.RewardConfig(), n=6, seed=100, horizon=80)
        assert res.world_hashes_equal
        for _, m in res.rows:
            assert abs(m.sr + m.cr + m.tr - 1.0) < 1e-9
        hashes_a = [r.world_hash for r in res.rows[0][1].records]
        hashes_b = [r.world_hash for r in res.rows[1][1].records]
        assert hashes_a == hashes_b
