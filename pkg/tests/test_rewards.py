import math

import numpy as np
import pytest

from swarmnav import rewards as R
from swarmnav.errors import ConfigError, ContractError


def cfg(**kw):
    return R.RewardConfig(**kw)


# -- goal reward ----------------------------------------------------------------


def test_goal_arrival_bonus():
    c = cfg()
    assert R.goal_reward((1.0, 0.0), (0.05, 0.0), (0.0, 0.0), c) == c.r_arrival


def test_goal_zero_progress():
    assert R.goal_reward((2.0, 0.0), (2.0, 0.0), (0.0, 0.0), cfg()) == 0.0


def test_goal_progress_scalar_substitution():
    # w_g = 2.5, distance 2.0 -> 1.5 gives 2.5 * 0.5 = 1.25
    c = cfg(w_g=2.5)
    got = R.goal_reward((2.0, 0.0), (1.5, 0.0), (0.0, 0.0), c)
    assert abs(got - 1.25) < 1e-12


def test_goal_retreat_negative():
    assert R.goal_reward((1.0, 0.0), (1.5, 0.0), (0.0, 0.0), cfg()) < 0.0


# -- heading-stability weights -----------------------------------------------------


def beam_angles(n, fov=0.8 * math.pi):
    step = fov / n
    return -fov / 2 + step * (np.arange(n) + 0.5)


def test_hs_weights_centered_at_zero():
    angles = beam_angles(31)
    w = R.hs_weights(0.0, angles, cfg())
    assert abs(w.sum() - 1.0) < 1e-9
    center = np.argmin(np.abs(angles))
    assert np.argmax(w) == center
    # even about the center beam
    for k in range(1, 10):
        assert abs(w[center + k] - w[center - k]) < 1e-9


def test_hs_raw_peak_standard_normal():
    # raw pdf value at the center with sigma = 1 is 1/sqrt(2*pi)
    assert abs(R.gaussian_pdf(0.3, 0.3, 1.0) - 0.3989422804014327) < 1e-12


def test_hs_raw_scalar_substitution():
    # sigma=0.5, center=0.1, angle=0.6 -> 0.79788 * exp(-0.5) ~ 0.48394
    got = R.gaussian_pdf(0.6, 0.1, 0.5)
    assert abs(got - 0.7978845608028654 * math.exp(-0.5)) < 1e-12
    assert abs(got - 0.48394144903828673) < 1e-10


def test_hs_argmax_tracks_center(rng):
    angles = beam_angles(61, fov=2 * math.pi)
    c = cfg(dt=1.0)  # center = omega directly
    prev_idx = None
    for omega in np.linspace(-2.0, 2.0, 41):
        w = R.hs_weights(float(omega), angles, c)
        idx = int(np.argmax(w))
        assert abs(angles[idx] - omega) <= (angles[1] - angles[0]) / 2 + 1e-12
        if prev_idx is not None:
            assert idx >= prev_idx  # monotone drift with the center
        prev_idx = idx


def test_hs_weights_sum_to_one_random(rng):
    angles = beam_angles(130)
    for _ in range(50):
        omega = rng.uniform(-math.pi, math.pi)
        w = R.hs_weights(omega, angles, cfg())
        assert abs(w.sum() - 1.0) < 1e-9
        assert np.all(w >= 0)


# -- obstacle reward -----------------------------------------------------------------


def test_obstacle_zero_when_clear():
    angles = beam_angles(11)
    scan = np.full(11, 4.0)
    assert R.obstacle_reward(scan, 0.0, angles, cfg()) == 0.0


def test_obstacle_collision_branch():
    angles = beam_angles(11)
    scan = np.full(11, 4.0)
    c = cfg()
    assert R.obstacle_reward(scan, 0.0, angles, c, collided=True) == c.r_collision
    assert R.conventional_obstacle_reward(scan, c, collided=True) == c.r_collision


def test_obstacle_single_beam_substitution():
    # one beam carrying all the weight, z = 3.0, k_c = 0.5 -> -0.5 * (4 - 3)
    c = cfg(k_c=0.5, sigma_hs=0.05)
    angles = np.array([-2.0, 0.0, 2.0])   # distant side beams get ~zero weight
    scan = np.array([4.0, 3.0, 4.0])
    got = R.obstacle_reward(scan, 0.0, angles, c)
    assert abs(got - (-0.5)) < 1e-9


def test_obstacle_monotone_in_ranges(rng):
    angles = beam_angles(33)
    c = cfg()
    scan = rng.uniform(0.5, 4.0, size=33)
    base = R.obstacle_reward(scan, 0.3, angles, c)
    for _ in range(30):
        j = rng.integers(33)
        closer = scan.copy()
        closer[j] = max(0.0, closer[j] - rng.uniform(0.1, 0.5))
        assert R.obstacle_reward(closer, 0.3, angles, c) <= base + 1e-12


def test_obstacle_shape_contract():
    with pytest.raises(ContractError):
        R.obstacle_reward(np.zeros(5), 0.0, np.zeros(7), cfg())


def test_conventional_substitution():
    c = cfg(k_c=0.5)
    scan = np.array([4.0, 1.0, 3.0])
    assert abs(R.conventional_obstacle_reward(scan, c) - (-1.5)) < 1e-12
    assert R.conventional_obstacle_reward(np.full(9, 4.0), c) == 0.0


# -- total ---------------------------------------------------------------------------


def test_total_reward_is_exact_sum():
    assert R.total_reward(0.0, 0.0) == 0.0
    assert R.total_reward(1.25, -0.5) == 0.75
    c = cfg()
    assert R.total_reward(c.r_arrival, 0.0) == c.r_arrival


def test_step_reward_modes():
    angles = beam_angles(5)
    scan = np.array([4.0, 4.0, 2.0, 4.0, 4.0])
    hs = R.step_reward((1, 0), (0.9, 0), (0, 0), scan, 0.0, angles, cfg(mode="hs"))
    conv = R.step_reward((1, 0), (0.9, 0), (0, 0), scan, 0.0, angles,
                         cfg(mode="conventional"))
    assert hs[2] == hs[0] + hs[1]
    assert conv[2] == conv[0] + conv[1]
    assert conv[1] <= hs[1]  # nearest-beam penalty is at least as harsh


def test_config_validation():
    with pytest.raises(ConfigError):
        cfg(mode="bogus")
    with pytest.raises(ConfigError):
        cfg(sigma_hs=0.0)
    with pytest.raises(ConfigError):
        cfg(r_collision=5.0)
