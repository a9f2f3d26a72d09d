"""Recurrent-attention navigation policy.

Forward path: a stacked-frame LiDAR sequence goes through a two-layer GRU,
multi-head attention pools the per-frame hidden states with the newest frame
as query, the goal/velocity vector gets a residual encoding, and actor/critic
MLP heads read the concatenated features. Action noise is a diagonal Gaussian
whose log-std is a free trainable parameter per action dimension.

Variants: "lstp" (GRU + attention), "gru" (attention removed, last hidden
state used directly), "linear" (GRU replaced by a per-frame linear+ELU map,
attention kept).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Graph
from .errors import ConfigError, DimensionError, NumericError
from . import checkpoint

VARIANTS = ("lstp", "gru", "linear")

V_MIN, V_MAX = 0.0, 1.0
W_MIN, W_MAX = -math.pi, math.pi
ACTION_LOW = np.array([V_MIN, W_MIN])
ACTION_HIGH = np.array([V_MAX, W_MAX])


@dataclass(frozen=True)
class NetConfig:
    n_laser: int = 130
    stack: int = 5
    d_h: int = 256
    gru_layers: int = 2
    heads: int = 4
    variant: str = "lstp"
    actor_hidden: tuple = (256, 128)
    critic_hidden: tuple = (256, 128)
    action_dim: int = 2
    log_sigma_init: float = math.log(0.5)
    log_sigma_min: float = -5.0
    log_sigma_max: float = 2.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.d_h % self.heads != 0:
            raise ConfigError(f"d_h={self.d_h} not divisible by heads={self.heads}")
        if self.stack < 1 or self.n_laser < 1:
            raise ConfigError("stack and n_laser must be >= 1")

    @property
    def d_k(self):
        return self.d_h // self.heads

    @property
    def feature_dim(self):
        # attention context (d_h) + goal/velocity encoding (d_h)
        return 2 * self.d_h

    def to_dict(self):
        d = asdict(self)
        d["actor_hidden"] = list(self.actor_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("actor_hidden", "critic_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def param_shapes(cfg: NetConfig):
    """Single source of truth for every trainable array's shape."""
    shapes = {}
    if cfg.variant in ("lstp", "gru"):
        in_dim = cfg.n_laser
        for layer in range(cfg.gru_layers):
            p = f"gru.l{layer}."
            for gate in ("z", "r"):
                shapes[p + f"W_{gate}"] = (in_dim, cfg.d_h)
                shapes[p + f"U_{gate}"] = (cfg.d_h, cfg.d_h)
                shapes[p + f"b_{gate}"] = (cfg.d_h,)
            shapes[p + "W_n"] = (in_dim, cfg.d_h)
            shapes[p + "U_n"] = (cfg.d_h, cfg.d_h)
            shapes[p + "b_n_in"] = (cfg.d_h,)
            shapes[p + "b_n_h"] = (cfg.d_h,)
            in_dim = cfg.d_h
    else:
        shapes["lin.W"] = (cfg.n_laser, cfg.d_h)
        shapes["lin.b"] = (cfg.d_h,)
    if cfg.variant in ("lstp", "linear"):
        for name in ("W_q", "W_k", "W_v", "W_o"):
            shapes[f"attn.{name}"] = (cfg.d_h, cfg.d_h)
    shapes["enc.W"] = (4, cfg.d_h)
    shapes["enc.b"] = (cfg.d_h,)
    shapes["enc.W_res"] = (cfg.d_h, cfg.d_h)
    shapes["enc.b_res"] = (cfg.d_h,)
    for head, hidden, out in (("actor", cfg.actor_hidden, cfg.action_dim),
                              ("critic", cfg.critic_hidden, 1)):
        dims = (cfg.feature_dim,) + tuple(hidden) + (out,)
        for i in range(len(dims) - 1):
            shapes[f"{head}.W{i + 1}"] = (dims[i], dims[i + 1])
            shapes[f"{head}.b{i + 1}"] = (dims[i + 1],)
    shapes["log_sigma"] = (cfg.action_dim,)
    return shapes


def param_count(cfg: NetConfig) -> int:
    """Exact number of trainable scalars."""
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def init_params(cfg: NetConfig, rng, dtype=np.float32):
    """Weights uniform in +-1/sqrt(fan_in), biases zero, log_sigma at its
    configured init. Deterministic for a given Generator state."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name == "log_sigma":
            params[name] = np.full(shape, cfg.log_sigma_init, dtype=dtype)
        elif len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def clamp_log_sigma(params, cfg: NetConfig):
    np.clip(params["log_sigma"], cfg.log_sigma_min, cfg.log_sigma_max,
            out=params["log_sigma"])


# -- forward pieces -------------------------------------------------------


def gru_forward(g: Graph, params, cfg: NetConfig, seq):
    """Run the stacked GRU over seq [B,T,in]; returns top layer [B,T,d_h].

    Gate convention: z = sig(Wx + Uh + b); r likewise;
    n = tanh(Wx + b_in + r*(Uh + b_h)); h' = (1-z)*n + z*h. h0 = 0.
    """
    b, t, _ = seq.value.shape
    x_steps = [g.reshape(g.narrow(seq, 1, i, 1), (b, seq.value.shape[2])) for i in range(t)]
    for layer in range(cfg.gru_layers):
        p = f"gru.l{layer}."
        w_z = g.param(p + "W_z", params[p + "W_z"])
        u_z = g.param(p + "U_z", params[p + "U_z"])
        b_z = g.param(p + "b_z", params[p + "b_z"])
        w_r = g.param(p + "W_r", params[p + "W_r"])
        u_r = g.param(p + "U_r", params[p + "U_r"])
        b_r = g.param(p + "b_r", params[p + "b_r"])
        w_n = g.param(p + "W_n", params[p + "W_n"])
        u_n = g.param(p + "U_n", params[p + "U_n"])
        b_n_in = g.param(p + "b_n_in", params[p + "b_n_in"])
        b_n_h = g.param(p + "b_n_h", params[p + "b_n_h"])
        h = g.constant(np.zeros((b, cfg.d_h)))
        outs = []
        for xt in x_steps:
            z = g.sigmoid(g.add(g.add(g.matmul(xt, w_z), g.matmul(h, u_z)), b_z))
            r = g.sigmoid(g.add(g.add(g.matmul(xt, w_r), g.matmul(h, u_r)), b_r))
            n = g.tanh(g.add(g.add(g.matmul(xt, w_n), b_n_in),
                             g.mul(r, g.add(g.matmul(h, u_n), b_n_h))))
            one_minus_z = g.add(g.constant(1.0), g.scalar_mul(z, -1.0))
            h = g.add(g.mul(one_minus_z, n), g.mul(z, h))
            outs.append(h)
        x_steps = outs
    return g.concat([g.reshape(h, (b, 1, cfg.d_h)) for h in x_steps], axis=1)


def attention(g: Graph, params, cfg: NetConfig, h_seq):
    """Multi-head scaled dot-product pooling of h_seq [B,T,d_h] -> [B,d_h].

    The newest frame is the query; keys and values are the full sequence.
    """
    b, t, d_h = h_seq.value.shape
    if d_h % cfg.heads != 0:
        raise ConfigError(f"d_h={d_h} not divisible by heads={cfg.heads}")
    d_k = d_h // cfg.heads
    w_q = g.param("attn.W_q", params["attn.W_q"])
    w_k = g.param("attn.W_k", params["attn.W_k"])
    w_v = g.param("attn.W_v", params["attn.W_v"])
    w_o = g.param("attn.W_o", params["attn.W_o"])
    query = g.narrow(h_seq, 1, t - 1, 1)  # [B,1,d_h]
    scale = 1.0 / math.sqrt(d_k)
    heads = []
    for i in range(cfg.heads):
        q_i = g.matmul(query, g.narrow(w_q, 1, i * d_k, d_k))  # [B,1,d_k]
        k_i = g.matmul(h_seq, g.narrow(w_k, 1, i * d_k, d_k))  # [B,T,d_k]
        v_i = g.matmul(h_seq, g.narrow(w_v, 1, i * d_k, d_k))
        scores = g.scalar_mul(g.matmul(q_i, g.transpose_last2(k_i)), scale)  # [B,1,T]
        weights = g.softmax_last(scores)
        heads.append(g.matmul(weights, v_i))  # [B,1,d_k]
    ctx = g.matmul(g.concat(heads, axis=-1), w_o)
    return g.reshape(ctx, (b, d_h))


def encode_state(g: Graph, params, cfg: NetConfig, o_gv):
    """Residual goal/velocity encoding: u = W x + b; out = W_res (elu(u) + u) + b_res."""
    w = g.param("enc.W", params["enc.W"])
    bias = g.param("enc.b", params["enc.b"])
    w_res = g.param("enc.W_res", params["enc.W_res"])
    b_res = g.param("enc.b_res", params["enc.b_res"])
    u = g.add(g.matmul(o_gv, w), bias)
    return g.add(g.matmul(g.add(g.elu(u), u), w_res), b_res)


def _mlp(g, params, prefix, n_layers, x):
    for i in range(1, n_layers + 1):
        w = g.param(f"{prefix}.W{i}", params[f"{prefix}.W{i}"])
        b = g.param(f"{prefix}.b{i}", params[f"{prefix}.b{i}"])
        x = g.add(g.matmul(x, w), b)
        if i < n_layers:
            x = g.elu(x)
    return x


def forward(g: Graph, params, cfg: NetConfig, o_s, o_gv):
    """Full forward pass on already-batched observations.

    o_s: Tensor [B, stack, n_laser]; o_gv: Tensor [B, 4].
    Returns (mu [B,2], value [B], log_sigma [2]) tensors.
    """
    b, t, n = o_s.value.shape
    if t != cfg.stack or n != cfg.n_laser:
        raise DimensionError(f"o_s shape {o_s.value.shape} vs config "
                             f"(stack={cfg.stack}, n_laser={cfg.n_laser})")
    if o_gv.value.shape != (b, 4):
        raise DimensionError(f"o_gv shape {o_gv.value.shape}, expected ({b}, 4)")

    if cfg.variant == "linear":
        w = g.param("lin.W", params["lin.W"])
        bias = g.param("lin.b", params["lin.b"])
        h_seq = g.elu(g.add(g.matmul(o_s, w), bias))
        ctx = attention(g, params, cfg, h_seq)
    else:
        h_seq = gru_forward(g, params, cfg, o_s)
        if cfg.variant == "gru":
            ctx = g.reshape(g.narrow(h_seq, 1, t - 1, 1), (b, cfg.d_h))
        else:
            ctx = attention(g, params, cfg, h_seq)

    s_enc = encode_state(g, params, cfg, o_gv)
    data = g.concat([ctx, s_enc], axis=-1)
    mu = _mlp(g, params, "actor", len(cfg.actor_hidden) + 1, data)
    value = g.reshape(_mlp(g, params, "critic", len(cfg.critic_hidden) + 1, data), (b,))
    log_sigma = g.param("log_sigma", params["log_sigma"])
    return mu, value, log_sigma


@dataclass
class PolicyOutput:
    mu: np.ndarray      # [B, 2]
    sigma: np.ndarray   # [2]
    value: np.ndarray   # [B]


def policy_outputs(params, cfg: NetConfig, o_s, o_gv) -> PolicyOutput:
    """Inference-mode forward on plain arrays (no tape)."""
    dtype = params["log_sigma"].dtype
    g = Graph(dtype=dtype, record=False)
    mu, value, log_sigma = forward(g, params, cfg,
                                   g.constant(o_s), g.constant(o_gv))
    if not (np.all(np.isfinite(mu.value)) and np.all(np.isfinite(value.value))):
        raise NumericError("non-finite policy output")
    return PolicyOutput(mu=mu.value, sigma=np.exp(log_sigma.value), value=value.value)


def logp_np(mu, sigma, raw):
    """Diagonal-Gaussian log density of raw actions, summed over dims."""
    z = (raw - mu) / sigma
    return (-0.5 * z * z - np.log(sigma)).sum(axis=-1) - 0.5 * raw.shape[-1] * math.log(2 * math.pi)


def sample_action(out: PolicyOutput, rng=None, deterministic=False):
    """Sample (or take the mean of) the action Gaussian.

    The log-prob is evaluated on the raw sample; the returned action is the
    raw sample clamped to v in [0,1] m/s, omega in [-pi,pi] rad/s.
    """
    if deterministic:
        raw = out.mu
    else:
        raw = out.mu + out.sigma * rng.standard_normal(out.mu.shape)
    logp = logp_np(out.mu, out.sigma, raw)
    action = np.clip(raw, ACTION_LOW, ACTION_HIGH)
    return action, logp


# -- checkpoints -----------------------------------------------------------


def save_policy(path, params, cfg: NetConfig, extra_meta=None):
    meta = {"kind": "policy", "net": cfg.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    checkpoint.save_arrays(path, params, meta)


def load_policy(path):
    arrays, meta = checkpoint.load_arrays(path)
    if meta.get("kind") != "policy":
        raise checkpoint.CheckpointError(f"{path}: not a policy checkpoint")
    cfg = NetConfig.from_dict(meta["net"])
    expected = param_shapes(cfg)
    for name, shape in expected.items():
        if name not in arrays:
            raise checkpoint.CheckpointError(f"{path}: missing array {name!r}")
        if tuple(arrays[name].shape) != tuple(shape):
            raise checkpoint.CheckpointError(
                f"{path}: array {name!r} has shape {arrays[name].shape}, expected {shape}")
    return arrays, cfg
