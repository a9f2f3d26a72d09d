"""Reward terms: dense goal progress plus a heading-weighted obstacle penalty.

The obstacle penalty weights each beam's range shortfall (z_max - z) by a
Gaussian over beam angle centered at the commanded angular displacement
omega*dt, so obstacles along the predicted heading dominate. Weights are
normalized to sum to 1, making the penalty scale independent of beam count.
A uniform nearest-beam variant ("conventional") is kept as an ablation.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

MODES = ("hs", "conventional")


@dataclass
class RewardConfig:
    r_arrival: float = 20.0
    r_collision: float = -20.0
    w_g: float = 2.5            # goal-progress weight
    k_c: float = 0.5            # obstacle-penalty scale
    sigma_hs: float = 0.5       # rad, spread of the heading Gaussian
    z_max: float = 4.0
    dt: float = 1.0 / 60.0
    mode: str = "hs"
    arrival_threshold: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown reward mode {self.mode!r}, expected one of {MODES}")
        if self.sigma_hs <= 0 or self.z_max <= 0:
            raise ConfigError("sigma_hs and z_max must be positive")
        if not (self.r_arrival > 0 > self.r_collision):
            raise ConfigError("need r_arrival > 0 > r_collision")


def goal_reward(prev_pos, pos, goal, cfg: RewardConfig) -> float:
    """Arrival bonus inside the goal radius, otherwise weighted reduction of
    the Euclidean goal distance between consecutive steps."""
    prev_pos = np.asarray(prev_pos, dtype=float)
    pos = np.asarray(pos, dtype=float)
    goal = np.asarray(goal, dtype=float)
    d = float(np.hypot(*(pos - goal)))
    if d < cfg.arrival_threshold:
        return cfg.r_arrival
    d_prev = float(np.hypot(*(prev_pos - goal)))
    return cfg.w_g * (d_prev - d)


def hs_weights(omega: float, beam_angles, cfg: RewardConfig) -> np.ndarray:
    """Per-beam weights: Gaussian pdf over beam angle centered at omega*dt,
    normalized to sum to 1."""
    beam_angles = np.asarray(beam_angles, dtype=float)
    center = omega * cfg.dt
    raw = gaussian_pdf(beam_angles, center, cfg.sigma_hs)
    return raw / raw.sum()


def gaussian_pdf(x, mean, sigma):
    return np.exp(-0.5 * ((x - mean) / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)


def obstacle_reward(scan, omega, beam_angles, cfg: RewardConfig, collided=False) -> float:
    """Heading-weighted proximity penalty; the collision flag short-circuits
    to the terminal collision reward."""
    if collided:
        return cfg.r_collision
    scan = np.asarray(scan, dtype=float)
    beam_angles = np.asarray(beam_angles, dtype=float)
    if scan.shape != beam_angles.shape:
        raise ContractError(f"scan shape {scan.shape} vs beam angles {beam_angles.shape}")
    w = hs_weights(omega, beam_angles, cfg)
    return -cfg.k_c * float(np.dot(w, cfg.z_max - scan))


def conventional_obstacle_reward(scan, cfg: RewardConfig, collided=False) -> float:
    """Ablation baseline: uniform penalty on the single nearest beam."""
    if collided:
        return cfg.r_collision
    scan = np.asarray(scan, dtype=float)
    return -cfg.k_c * float(cfg.z_max - scan.min())


def total_reward(goal_r: float, obstacle_r: float) -> float:
    return goal_r + obstacle_r


def step_reward(prev_pos, pos, goal, scan, omega, beam_angles, cfg: RewardConfig,
                collided=False):
    """Convenience wrapper: (goal term, obstacle term, total) for one step."""
    r_g = goal_reward(prev_pos, pos, goal, cfg)
    if cfg.mode == "hs":
        r_c = obstacle_reward(scan, omega, beam_angles, cfg, collided=collided)
    else:
        r_c = conventional_obstacle_reward(scan, cfg, collided=collided)
    return r_g, r_c, total_reward(r_g, r_c)
