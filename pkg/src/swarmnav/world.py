"""Perturbed 2D multi-agent world with LiDAR and local replay.

Differential-drive agents move by exact unicycle arcs at a fixed control rate;
training mode injects multiplicative actuation noise ("wheel slip") and
Gaussian LiDAR noise. On a training-mode collision the agent is rewound to its
state a configurable number of steps earlier (local replay); agents that keep
colliding are respawned at a random collision-free pose.

Obstacle footprints are the orthographic projections of the generated solids:
spheres and cylinders -> circles (r=0.5), cubes -> oriented unit squares,
capsules -> stadiums (2 m core segment inflated by 0.5 m).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ConfigError, ContractError, InfeasibleScenarioError

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


@dataclass
class LidarConfig:
    n_laser: int = 130
    z_max: float = 4.0
    fov: float = 0.8 * math.pi
    sigma_z: float = 0.02

    def beam_angles(self):
        """Beam directions relative to heading: evenly spaced bin centers
        across the field of view (no duplicate endpoint at fov=2*pi)."""
        n = self.n_laser
        step = self.fov / n
        return -self.fov / 2.0 + step * (np.arange(n) + 0.5)


@dataclass
class Obstacle:
    kind: str                 # "circle" | "square" | "stadium"
    x: float
    y: float
    theta: float = 0.0
    r: float = 0.5            # circle / stadium cap radius
    half: float = 0.5         # square half side
    half_len: float = 1.0     # stadium core half length

    def footprint(self):
        if self.kind == "circle":
            return ("circle", self.x, self.y, self.r)
        if self.kind == "square":
            return ("rect", self.x, self.y, self.theta, self.half, self.half)
        if self.kind == "stadium":
            return ("stadium", self.x, self.y, self.theta, self.half_len, self.r)
        raise ConfigError(f"unknown obstacle kind {self.kind!r}")

    def surface_distance(self, px, py):
        if self.kind == "circle":
            return geometry.point_circle_distance(px, py, self.x, self.y, self.r)
        if self.kind == "square":
            return geometry.point_rect_distance(px, py, self.x, self.y, self.theta,
                                                self.half, self.half)
        return geometry.point_stadium_distance(px, py, self.x, self.y, self.theta,
                                               self.half_len, self.r)

    def raycast(self, ox, oy, dx, dy):
        if self.kind == "circle":
            return geometry.ray_circle(ox, oy, dx, dy, self.x, self.y, self.r)
        if self.kind == "square":
            return geometry.ray_rect(ox, oy, dx, dy, self.x, self.y, self.theta,
                                     self.half, self.half)
        return geometry.ray_stadium(ox, oy, dx, dy, self.x, self.y, self.theta,
                                    self.half_len, self.r)

    def to_dict(self):
        d = {"kind": self.kind, "x": self.x, "y": self.y, "theta": self.theta}
        if self.kind == "circle":
            d["r"] = self.r
        elif self.kind == "square":
            d["half"] = self.half
        else:
            d["r"] = self.r
            d["half_len"] = self.half_len
        return d

    @classmethod
    def from_dict(cls, d):
        allowed = {"kind", "x", "y", "theta", "r", "half", "half_len"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown obstacle keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ScenarioConfig:
    arena: tuple = (10.0, 10.0)
    n_obstacles: int = 35
    n_agents: int = 10
    dt: float = 1.0 / 60.0
    sigma_slip: float = 0.05
    lidar: LidarConfig = field(default_factory=LidarConfig)
    agent_radius: float = 0.105
    clearance: float = 0.1
    goal_min_dist: float = 1.0
    arrival_threshold: float = 0.1
    collision_threshold: float = 0.01
    n_replay: int = 300
    c_max: int = 3
    t_episode: int = 2500
    stack: int = 5
    max_place_attempts: int = 10000
    obstacles: list | None = None   # explicit obstacle dicts (hand-authored)
    agents: list | None = None      # explicit [{"start":[x,y,theta], "goal":[x,y]}]

    def __post_init__(self):
        if self.arena[0] <= 0 or self.arena[1] <= 0:
            raise ConfigError("arena extents must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    @property
    def bounds(self):
        w, h = self.arena
        return (-w / 2.0, w / 2.0, -h / 2.0, h / 2.0)

    def to_dict(self):
        return {
            "arena": list(self.arena),
            "n_obstacles": self.n_obstacles,
            "n_agents": self.n_agents,
            "dt": self.dt,
            "sigma_slip": self.sigma_slip,
            "lidar": {"n_laser": self.lidar.n_laser, "z_max": self.lidar.z_max,
                      "fov": self.lidar.fov, "sigma_z": self.lidar.sigma_z},
            "agent_radius": self.agent_radius,
            "clearance": self.clearance,
            "goal_min_dist": self.goal_min_dist,
            "arrival_threshold": self.arrival_threshold,
            "collision_threshold": self.collision_threshold,
            "n_replay": self.n_replay,
            "c_max": self.c_max,
            "t_episode": self.t_episode,
            "stack": self.stack,
            "max_place_attempts": self.max_place_attempts,
            "obstacles": self.obstacles,
            "agents": self.agents,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        if "lidar" in d and isinstance(d["lidar"], dict):
            lid = set(d["lidar"]) - {f for f in LidarConfig.__dataclass_fields__}
            if lid:
                raise ConfigError(f"unknown lidar keys: {sorted(lid)}")
            d["lidar"] = LidarConfig(**d["lidar"])
        if "arena" in d:
            d["arena"] = tuple(d["arena"])
        return cls(**d)


@dataclass
class Snapshot:
    step: int
    x: float
    y: float
    theta: float
    v_cmd: float = 0.0
    w_cmd: float = 0.0
    v_eff: float = 0.0
    w_eff: float = 0.0


class AgentState:
    """Kinematic state plus per-agent history rings."""

    def __init__(self, x, y, theta, goal, radius, n_replay, stack):
        self.x = x
        self.y = y
        self.theta = theta
        self.goal = np.asarray(goal, dtype=float)
        self.radius = radius
        self.v_cmd = 0.0
        self.w_cmd = 0.0
        self.v_eff = 0.0
        self.w_eff = 0.0
        self.collision_count = 0
        self.status = "active"   # active | arrived | collided | timed_out
        self.done_step = None
        self.pending_collision = False
        self.history = deque(maxlen=n_replay + 1)
        self.scans = deque(maxlen=stack)

    @property
    def position(self):
        return np.array([self.x, self.y])

    def goal_distance(self):
        return math.hypot(self.x - self.goal[0], self.y - self.goal[1])

    def snapshot(self, step):
        return Snapshot(step, self.x, self.y, self.theta,
                        self.v_cmd, self.w_cmd, self.v_eff, self.w_eff)

    def restore(self, snap: Snapshot):
        self.x, self.y, self.theta = snap.x, snap.y, snap.theta
        self.v_cmd, self.w_cmd = snap.v_cmd, snap.w_cmd
        self.v_eff, self.w_eff = snap.v_eff, snap.w_eff


@dataclass
class StepEvent:
    agent: int
    collided: bool = False
    hit: str | None = None     # "obstacle" | "agent" | "wall"
    arrived: bool = False


class WorldState:
    def __init__(self, cfg: ScenarioConfig, obstacles, agents, rng, training=True):
        self.cfg = cfg
        self.obstacles = obstacles
        self.agents = agents
        self.rng = rng
        self.training = training
        self.step_count = 0
        self._rel_angles = cfg.lidar.beam_angles()

    def active_indices(self):
        return [i for i, a in enumerate(self.agents) if a.status == "active"]

    def body_present(self, i):
        """Inactive agents are removed from collision geometry and scans."""
        return self.agents[i].status == "active"

    def to_dict(self):
        return {
            "scenario": self.cfg.to_dict(),
            "obstacles": [o.to_dict() for o in self.obstacles],
            "agents": [{"start": [a.x, a.y, a.theta], "goal": list(map(float, a.goal))}
                       for a in self.agents],
        }


def world_hash(world: WorldState) -> str:
    """Digest of the generated geometry (configuration + placements only)."""
    payload = {
        "arena": list(world.cfg.arena),
        "obstacles": [o.to_dict() for o in world.obstacles],
        "agents": [[a.x, a.y, a.theta, float(a.goal[0]), float(a.goal[1])]
                   for a in world.agents],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- generation ---------------------------------------------------------------

_SOLIDS = ("circle", "square", "stadium", "circle")  # sphere, cube, capsule, cylinder


def _footprint_inside(fp, bounds, margin=0.0):
    xmin, xmax, ymin, ymax = bounds
    kind = fp[0]
    if kind == "circle":
        _, cx, cy, r = fp
        return (cx - r >= xmin + margin and cx + r <= xmax - margin
                and cy - r >= ymin + margin and cy + r <= ymax - margin)
    if kind == "rect":
        for px, py in geometry._rect_corners(*fp[1:]):
            if not (xmin + margin <= px <= xmax - margin and ymin + margin <= py <= ymax - margin):
                return False
        return True
    _, cx, cy, theta, half_len, r = fp
    seg = geometry._stadium_segment(cx, cy, theta, half_len)
    for px, py in ((seg[0], seg[1]), (seg[2], seg[3])):
        if not (xmin + margin + r <= px <= xmax - margin - r
                and ymin + margin + r <= py <= ymax - margin - r):
            return False
    return True


def _place(rng, bounds, make_fp, placed, clearance, attempts, what):
    xmin, xmax, ymin, ymax = bounds
    for _ in range(attempts):
        x = rng.uniform(xmin, xmax)
        y = rng.uniform(ymin, ymax)
        fp = make_fp(x, y)
        if not _footprint_inside(fp, bounds):
            continue
        if all(geometry.footprint_distance(fp, other) >= clearance for other in placed):
            return fp
    raise InfeasibleScenarioError(
        f"could not place {what} after {attempts} attempts (density too high?)")


def generate_world(cfg: ScenarioConfig, rng, training=True) -> WorldState:
    """Sample a world: obstacles first (largest kinds first, which keeps dense
    configurations feasible), then agent starts, then goals.

    All placements keep pairwise surface clearance >= cfg.clearance; goals sit
    at least cfg.goal_min_dist from their own agent's start.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    bounds = cfg.bounds

    obstacles = []
    placed = []
    if cfg.obstacles is not None:
        obstacles = [Obstacle.from_dict(d) for d in cfg.obstacles]
        placed = [o.footprint() for o in obstacles]
    else:
        kinds = [ _SOLIDS[rng.integers(len(_SOLIDS))] for _ in range(cfg.n_obstacles) ]
        order = sorted(range(len(kinds)),
                       key=lambda i: {"stadium": 0, "square": 1, "circle": 2}[kinds[i]])
        sized = {}
        for i in order:
            kind = kinds[i]
            theta = float(rng.uniform(0.0, math.pi))

            def make(x, y, kind=kind, theta=theta):
                return Obstacle(kind, x, y, theta).footprint()

            fp = _place(rng, bounds, make, placed, cfg.clearance,
                        cfg.max_place_attempts, f"obstacle {i}")
            placed.append(fp)
            sized[i] = Obstacle(kind, fp[1], fp[2], theta)
        obstacles = [sized[i] for i in range(len(kinds))]

    agents = []
    if cfg.agents is not None:
        for spec in cfg.agents:
            sx, sy = spec["start"][0], spec["start"][1]
            theta = spec["start"][2] if len(spec["start"]) > 2 else 0.0
            agents.append(AgentState(sx, sy, theta, spec["goal"], cfg.agent_radius,
                                     cfg.n_replay, cfg.stack))
    else:
        starts = []
        for i in range(cfg.n_agents):
            fp = _place(rng, bounds,
                        lambda x, y: ("circle", x, y, cfg.agent_radius),
                        placed, cfg.clearance, cfg.max_place_attempts, f"agent {i}")
            placed.append(fp)
            starts.append((fp[1], fp[2], float(rng.uniform(-math.pi, math.pi))))
        for i, (sx, sy, theta) in enumerate(starts):
            for _ in range(cfg.max_place_attempts):
                gx = rng.uniform(bounds[0], bounds[1])
                gy = rng.uniform(bounds[2], bounds[3])
                fp = ("circle", gx, gy, cfg.agent_radius)
                if not _footprint_inside(fp, bounds):
                    continue
                if math.hypot(gx - sx, gy - sy) < cfg.goal_min_dist:
                    continue
                if all(geometry.footprint_distance(fp, other) >= cfg.clearance
                       for other in placed):
                    placed.append(fp)
                    agents.append(AgentState(sx, sy, theta, (gx, gy), cfg.agent_radius,
                                             cfg.n_replay, cfg.stack))
                    break
            else:
                raise InfeasibleScenarioError(
                    f"could not place goal {i} after {cfg.max_place_attempts} attempts")

    world = WorldState(cfg, obstacles, agents, rng, training=training)
    for i, agent in enumerate(agents):
        agent.scans.append(lidar_scan(world, i))
        agent.history.append(agent.snapshot(0))
    return world


# -- sensing ------------------------------------------------------------------


def lidar_scan(world: WorldState, i: int, noisy=None) -> np.ndarray:
    """Raw beam ranges in meters, capped at z_max. Training mode adds Gaussian
    range noise (override with noisy=True/False)."""
    agent = world.agents[i]
    cfg = world.cfg
    ang = agent.theta + world._rel_angles
    dx, dy = np.cos(ang), np.sin(ang)
    t = np.full(cfg.lidar.n_laser, np.inf)
    for ob in world.obstacles:
        t = np.minimum(t, ob.raycast(agent.x, agent.y, dx, dy))
    for j, other in enumerate(world.agents):
        if j != i and world.body_present(j):
            t = np.minimum(t, geometry.ray_circle(agent.x, agent.y, dx, dy,
                                                  other.x, other.y, other.radius))
    t = np.minimum(t, geometry.ray_walls(agent.x, agent.y, dx, dy, *cfg.bounds))
    ranges = np.minimum(t, cfg.lidar.z_max)
    if noisy is None:
        noisy = world.training
    if noisy and cfg.lidar.sigma_z > 0:
        ranges = ranges + world.rng.normal(0.0, cfg.lidar.sigma_z, ranges.shape)
        ranges = np.clip(ranges, 0.0, cfg.lidar.z_max)
    return ranges


def min_surface_distance(world: WorldState, i: int):
    """Closest surface separation to any obstacle, wall, or other agent body.

    Returns (distance, kind-of-nearest)."""
    agent = world.agents[i]
    xmin, xmax, ymin, ymax = world.cfg.bounds
    best = min(agent.x - xmin, xmax - agent.x, agent.y - ymin, ymax - agent.y) - agent.radius
    hit = "wall"
    for ob in world.obstacles:
        d = float(ob.surface_distance(agent.x, agent.y)) - agent.radius
        if d < best:
            best, hit = d, "obstacle"
    for j, other in enumerate(world.agents):
        if j != i and world.body_present(j):
            d = math.hypot(agent.x - other.x, agent.y - other.y) - agent.radius - other.radius
            if d < best:
                best, hit = d, "agent"
    return best, hit


# -- observation --------------------------------------------------------------


@dataclass
class Observation:
    o_s: np.ndarray   # [stack, n_laser], ranges / z_max
    o_g: np.ndarray   # [clipped goal distance / z_max, bearing / pi]
    o_v: np.ndarray   # [v, omega / pi]

    @property
    def o_gv(self):
        return np.concatenate([self.o_g, self.o_v])


def observe(world: WorldState, i: int) -> Observation:
    """Build the policy observation for one agent.

    o_s: the newest `stack` scans normalized by z_max (the first scan is
    replicated while history is shorter). o_g: goal distance clipped to z_max
    and divided by it, plus bearing/pi with positive = goal left of heading.
    o_v: previous commanded velocities, omega normalized by pi.
    """
    agent = world.agents[i]
    cfg = world.cfg
    z_max = cfg.lidar.z_max
    scans = list(agent.scans)
    if not scans:
        scans = [lidar_scan(world, i)]
    while len(scans) < cfg.stack:
        scans.insert(0, scans[0])
    o_s = np.stack(scans[-cfg.stack:]) / z_max

    d = agent.goal_distance()
    bearing = wrap_angle(math.atan2(agent.goal[1] - agent.y, agent.goal[0] - agent.x)
                         - agent.theta)
    o_g = np.array([min(d, z_max) / z_max, bearing / math.pi])
    o_v = np.array([agent.v_cmd, agent.w_cmd / math.pi])
    return Observation(o_s=o_s, o_g=o_g, o_v=o_v)


# -- dynamics -----------------------------------------------------------------


def integrate_unicycle(x, y, theta, v, w, dt):
    """Exact arc for constant (v, w) over dt; straight line for tiny |w|."""
    if abs(w) < 1e-6:
        return x + v * math.cos(theta) * dt, y + v * math.sin(theta) * dt, \
            wrap_angle(theta + w * dt)
    nt = theta + w * dt
    return (x + (v / w) * (math.sin(nt) - math.sin(theta)),
            y + (v / w) * (math.cos(theta) - math.cos(nt)),
            wrap_angle(nt))


def step(world: WorldState, actions) -> list[StepEvent]:
    """Advance every active agent one control period.

    `actions` holds one [v, omega] row per active agent, in active-index
    order, already clamped to the command bounds. Collision and arrival flags
    are evaluated after all agents have moved (simultaneous update).
    """
    active = world.active_indices()
    actions = np.asarray(actions, dtype=float)
    if actions.shape != (len(active), 2):
        raise ContractError(
            f"expected {len(active)} actions for active agents, got shape {actions.shape}")
    cfg = world.cfg

    for row, i in enumerate(active):
        agent = world.agents[i]
        v_cmd, w_cmd = float(actions[row, 0]), float(actions[row, 1])
        if world.training and cfg.sigma_slip > 0:
            eta = world.rng.normal(0.0, cfg.sigma_slip, 2)
            v_eff = v_cmd * (1.0 + eta[0])
            w_eff = w_cmd * (1.0 + eta[1])
        else:
            v_eff, w_eff = v_cmd, w_cmd
        agent.v_cmd, agent.w_cmd = v_cmd, w_cmd
        agent.v_eff, agent.w_eff = v_eff, w_eff
        agent.x, agent.y, agent.theta = integrate_unicycle(
            agent.x, agent.y, agent.theta, v_eff, w_eff, cfg.dt)

    world.step_count += 1

    events = []
    for i in active:
        agent = world.agents[i]
        d, hit = min_surface_distance(world, i)
        collided = d < cfg.collision_threshold
        arrived = agent.goal_distance() < cfg.arrival_threshold
        if collided:
            agent.pending_collision = True
        events.append(StepEvent(agent=i, collided=collided,
                                hit=hit if collided else None, arrived=arrived))

    for i in active:
        agent = world.agents[i]
        agent.scans.append(lidar_scan(world, i))
        agent.history.append(agent.snapshot(world.step_count))
    return events


# -- local replay ---------------------------------------------------------------


def apply_replay(world: WorldState, i: int):
    """Rewind a just-collided agent to its state n_replay steps earlier.

    Other agents are untouched. After more than c_max collisions in the
    current iteration the agent is respawned at a random collision-free pose
    instead (and its collision counter restarts).
    """
    agent = world.agents[i]
    if not world.training:
        raise ContractError("apply_replay is a training-mode operation")
    if not agent.pending_collision:
        raise ContractError(f"agent {i} has no pending collision")
    agent.pending_collision = False
    agent.collision_count += 1

    if agent.collision_count > world.cfg.c_max:
        _respawn(world, i)
        agent.collision_count = 0
    else:
        target = world.step_count - world.cfg.n_replay
        chosen = None
        for snap in agent.history:
            if snap.step <= target:
                chosen = snap
            else:
                break
        if chosen is None:
            chosen = agent.history[0]
        agent.restore(chosen)
        while agent.history and agent.history[-1].step > chosen.step:
            agent.history.pop()

    agent.scans.clear()
    agent.scans.append(lidar_scan(world, i))


def _respawn(world: WorldState, i: int):
    agent = world.agents[i]
    cfg = world.cfg
    placed = [ob.footprint() for ob in world.obstacles]
    for j, other in enumerate(world.agents):
        if j != i and world.body_present(j):
            placed.append(("circle", other.x, other.y, other.radius))
    fp = _place(world.rng, cfg.bounds,
                lambda x, y: ("circle", x, y, cfg.agent_radius),
                placed, cfg.clearance, cfg.max_place_attempts, f"respawn agent {i}")
    agent.x, agent.y = fp[1], fp[2]
    agent.theta = float(world.rng.uniform(-math.pi, math.pi))
    agent.v_cmd = agent.w_cmd = agent.v_eff = agent.w_eff = 0.0
    agent.history.clear()
    agent.history.append(agent.snapshot(world.step_count))


def resample_goal(world: WorldState, i: int):
    """Training helper: give an arrived agent a fresh goal so the rollout
    keeps producing navigation data for the full horizon."""
    agent = world.agents[i]
    cfg = world.cfg
    placed = [ob.footprint() for ob in world.obstacles]
    for j, other in enumerate(world.agents):
        if world.body_present(j):
            placed.append(("circle", other.x, other.y, other.radius))
    for _ in range(cfg.max_place_attempts):
        gx = world.rng.uniform(cfg.bounds[0], cfg.bounds[1])
        gy = world.rng.uniform(cfg.bounds[2], cfg.bounds[3])
        fp = ("circle", gx, gy, cfg.agent_radius)
        if not _footprint_inside(fp, cfg.bounds):
            continue
        if math.hypot(gx - agent.x, gy - agent.y) < cfg.goal_min_dist:
            continue
        if all(geometry.footprint_distance(fp, other) >= cfg.clearance for other in placed):
            agent.goal = np.array([gx, gy])
            return
    raise InfeasibleScenarioError(f"could not resample goal for agent {i}")


# -- termination ----------------------------------------------------------------


def check_termination(world: WorldState):
    """Per-agent status plus whether the episode is over.

    Collision beats arrival; the step limit marks remaining active agents
    timed_out. In training mode collisions trigger replay instead of
    termination, so this is primarily the evaluation-mode classifier.
    """
    statuses = []
    for i, agent in enumerate(world.agents):
        if agent.status != "active":
            statuses.append(agent.status)
            continue
        d, _ = min_surface_distance(world, i)
        if d < world.cfg.collision_threshold:
            statuses.append("collided")
        elif agent.goal_distance() < world.cfg.arrival_threshold:
            statuses.append("arrived")
        elif world.step_count >= world.cfg.t_episode:
            statuses.append("timed_out")
        else:
            statuses.append("active")
    done = all(s != "active" for s in statuses) or world.step_count >= world.cfg.t_episode
    return statuses, done


def mark_done(world: WorldState, i: int, status: str):
    agent = world.agents[i]
    agent.status = status
    agent.done_step = world.step_count


def reset_collision_counts(world: WorldState):
    """Called at the start of each training iteration; the respawn threshold
    counts collisions per iteration."""
    for agent in world.agents:
        agent.collision_count = 0
