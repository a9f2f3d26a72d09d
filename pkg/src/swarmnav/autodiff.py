"""Minimal dense-array reverse-mode autodiff with an Adam optimizer.

Define-by-run: every primitive op computes its value eagerly and (when the
graph is recording) appends one node to the tape, so insertion order is a
topological order and backward() is a single reverse sweep. Broadcasting is
restricted to leading batch dimensions plus scalar constants; anything else
is a DimensionError at op time.

Two precision modes: float32 for training throughput, float64 for
finite-difference gradient checks (unreliable at float32).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ContractError, NumericError

LOG_2PI = math.log(2.0 * math.pi)


class Node:
    """One recorded primitive op: inputs by node id, cached output value."""

    __slots__ = ("op", "inputs", "value", "ctx")

    def __init__(self, op, inputs, value, ctx=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.ctx = ctx


class Tensor:
    """Handle to a node's value. Immutable once created."""

    __slots__ = ("graph", "nid", "value")

    def __init__(self, graph, nid, value):
        self.graph = graph
        self.nid = nid
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(nid={self.nid}, shape={self.value.shape})"


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    if grad.shape != tuple(shape):
        grad = grad.reshape(shape)
    return grad


def _check_broadcast(a_shape, b_shape, op):
    """Allow scalars, equal shapes, and leading-batch/bias style broadcasts."""
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a_shape} and {b_shape} do not broadcast")


class Graph:
    """Tape of primitive ops. One graph per execution context.

    With record=False the same op methods run value-only (no tape, no
    backward); rollout inference uses that mode.
    """

    def __init__(self, dtype=np.float32, record=True):
        self.dtype = np.dtype(dtype)
        self.record = record
        self.nodes: list[Node] = []
        self._param_nodes: dict[str, int] = {}

    # -- leaves ------------------------------------------------------------

    def constant(self, value):
        value = np.asarray(value, dtype=self.dtype)
        if not np.all(np.isfinite(value)):
            raise NumericError("constant holds non-finite entries")
        return self._emit("constant", (), value)

    def param(self, name, value):
        """Register a trainable leaf. Repeated names share one node so the
        gradient accumulates across every use site."""
        if name in self._param_nodes:
            nid = self._param_nodes[name]
            return Tensor(self, nid, self.nodes[nid].value)
        value = np.asarray(value)
        if value.dtype != self.dtype:
            raise DimensionError(
                f"param {name!r} has dtype {value.dtype}, graph expects {self.dtype}"
            )
        t = self._emit("param", (), value, ctx=name)
        if self.record:
            self._param_nodes[name] = t.nid
        return t

    def _emit(self, op, inputs, value, ctx=None):
        if not self.record:
            return Tensor(self, -1, value)
        nid = len(self.nodes)
        self.nodes.append(Node(op, tuple(t.nid for t in inputs), value, ctx))
        return Tensor(self, nid, value)

    # -- primitive ops -----------------------------------------------------

    def matmul(self, a, b):
        if a.value.ndim < 2 or b.value.ndim < 2:
            raise DimensionError("matmul requires ndim >= 2 operands")
        if a.value.shape[-1] != b.value.shape[-2]:
            raise DimensionError(
                f"matmul inner dimensions differ: {a.value.shape} @ {b.value.shape}"
            )
        try:
            value = a.value @ b.value
        except ValueError:
            raise DimensionError(
                f"matmul batch dimensions differ: {a.value.shape} @ {b.value.shape}"
            )
        return self._emit("matmul", (a, b), value)

    def add(self, a, b):
        _check_broadcast(a.value.shape, b.value.shape, "add")
        return self._emit("add", (a, b), a.value + b.value)

    def mul(self, a, b):
        _check_broadcast(a.value.shape, b.value.shape, "mul")
        return self._emit("mul", (a, b), a.value * b.value)

    def scalar_mul(self, a, c):
        return self._emit("scalar_mul", (a,), a.value * self.dtype.type(c), ctx=float(c))

    def sigmoid(self, a):
        x = a.value
        value = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                         np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return self._emit("sigmoid", (a,), value.astype(self.dtype, copy=False))

    def tanh(self, a):
        return self._emit("tanh", (a,), np.tanh(a.value))

    def elu(self, a):
        x = a.value
        value = x.copy()
        neg = x < 0
        value[neg] = np.expm1(x[neg])
        return self._emit("elu", (a,), value)

    def exp(self, a):
        return self._emit("exp", (a,), np.exp(a.value))

    def softmax_last(self, a):
        if a.value.shape[-1] < 1:
            raise DimensionError("softmax over an empty axis")
        shifted = a.value - a.value.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        value = e / e.sum(axis=-1, keepdims=True)
        return self._emit("softmax_last", (a,), value)

    def concat(self, tensors, axis=-1):
        if not tensors:
            raise DimensionError("concat of zero tensors")
        try:
            value = np.concatenate([t.value for t in tensors], axis=axis)
        except ValueError:
            raise DimensionError(
                f"concat shapes incompatible: {[t.value.shape for t in tensors]}"
            )
        return self._emit("concat", tuple(tensors), value, ctx=axis)

    def narrow(self, a, axis, start, length):
        dim = a.value.shape[axis]
        if start < 0 or start + length > dim:
            raise DimensionError(f"narrow [{start}:{start + length}] out of axis size {dim}")
        idx = [slice(None)] * a.value.ndim
        idx[axis] = slice(start, start + length)
        return self._emit("narrow", (a,), a.value[tuple(idx)], ctx=(axis, start, length))

    def transpose_last2(self, a):
        if a.value.ndim < 2:
            raise DimensionError("transpose_last2 requires ndim >= 2")
        return self._emit("transpose_last2", (a,), np.swapaxes(a.value, -1, -2))

    def reshape(self, a, shape):
        if int(np.prod(shape)) != a.value.size:
            raise DimensionError(f"cannot reshape {a.value.shape} to {shape}")
        return self._emit("reshape", (a,), a.value.reshape(shape), ctx=a.value.shape)

    def reduce_sum(self, a, axis=None):
        return self._emit("reduce_sum", (a,), np.asarray(a.value.sum(axis=axis)), ctx=axis)

    def reduce_mean(self, a, axis=None):
        return self._emit("reduce_mean", (a,), np.asarray(a.value.mean(axis=axis)), ctx=axis)

    def minimum(self, a, b):
        _check_broadcast(a.value.shape, b.value.shape, "minimum")
        return self._emit("minimum", (a, b), np.minimum(a.value, b.value))

    def maximum(self, a, b):
        _check_broadcast(a.value.shape, b.value.shape, "maximum")
        return self._emit("maximum", (a, b), np.maximum(a.value, b.value))

    def clip(self, a, lo, hi):
        return self._emit("clip", (a,), np.clip(a.value, lo, hi), ctx=(float(lo), float(hi)))

    def gaussian_logp(self, mu, log_sigma, x):
        """Diagonal-Gaussian log density of constant samples x, summed over
        the last axis. mu: [B,D]; log_sigma: [D] or [B,D]; x: ndarray [B,D]."""
        x = np.asarray(x, dtype=self.dtype)
        if x.shape != mu.value.shape:
            raise DimensionError(f"gaussian_logp: x {x.shape} vs mu {mu.value.shape}")
        _check_broadcast(mu.value.shape, log_sigma.value.shape, "gaussian_logp")
        z = (x - mu.value) * np.exp(-log_sigma.value)
        d = x.shape[-1]
        value = -0.5 * (z * z).sum(axis=-1) - log_sigma.value.sum(axis=-1) - 0.5 * d * LOG_2PI
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != x.shape[:-1]:
            value = np.broadcast_to(value, x.shape[:-1]).copy()
        return self._emit("gaussian_logp", (mu, log_sigma), value, ctx=(x, z))

    def gaussian_entropy(self, log_sigma):
        """Total entropy of a diagonal Gaussian: sum_d (1/2 ln(2*pi*e) + log sigma_d)."""
        d = log_sigma.value.size
        value = self.dtype.type(0.5 * d * (LOG_2PI + 1.0) + log_sigma.value.sum())
        return self._emit("gaussian_entropy", (log_sigma,), np.asarray(value, dtype=self.dtype))

    # -- compositions (no new backward rules) -------------------------------

    def sub(self, a, b):
        return self.add(a, self.scalar_mul(b, -1.0))

    def square(self, a):
        return self.mul(a, a)

    # -- backward ------------------------------------------------------------

    def backward(self, loss):
        """Gradient of a scalar loss w.r.t. every registered param.

        Params registered in the graph but not feeding the loss get zero
        gradients. NaN/Inf in any gradient raises NumericError naming the node.
        """
        if not self.record:
            raise ContractError("backward on a non-recording graph")
        if loss.nid < 0 or loss.nid >= len(self.nodes):
            raise ContractError("loss tensor does not belong to this graph")
        if np.asarray(loss.value).size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")

        grads: list = [None] * (loss.nid + 1)
        grads[loss.nid] = np.ones_like(np.asarray(loss.value))

        for nid in range(loss.nid, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = self.nodes[nid]
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient at node #{nid} op {node.op!r}")
            in_grads = self._vjp(node, g)
            for inp_id, ig in zip(node.inputs, in_grads):
                if ig is None:
                    continue
                if grads[inp_id] is None:
                    grads[inp_id] = ig
                else:
                    # `+` rather than `+=`: the first contribution may be a view
                    # of a node value and must not be written through.
                    grads[inp_id] = grads[inp_id] + ig

        out = {}
        for name, nid in self._param_nodes.items():
            g = grads[nid] if nid <= loss.nid else None
            out[name] = np.zeros_like(self.nodes[nid].value) if g is None else g
        return out

    def _vjp(self, node, g):
        op = node.op
        nodes = self.nodes
        if op in ("constant", "param"):
            return ()
        if op == "matmul":
            a = nodes[node.inputs[0]].value
            b = nodes[node.inputs[1]].value
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
        if op == "add":
            a = nodes[node.inputs[0]].value
            b = nodes[node.inputs[1]].value
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
        if op == "mul":
            a = nodes[node.inputs[0]].value
            b = nodes[node.inputs[1]].value
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)
        if op == "scalar_mul":
            return (g * self.dtype.type(node.ctx),)
        if op == "sigmoid":
            y = node.value
            return (g * y * (1.0 - y),)
        if op == "tanh":
            y = node.value
            return (g * (1.0 - y * y),)
        if op == "elu":
            x = nodes[node.inputs[0]].value
            return (g * np.where(x >= 0, 1.0, node.value + 1.0),)
        if op == "exp":
            return (g * node.value,)
        if op == "softmax_last":
            y = node.value
            dot = (g * y).sum(axis=-1, keepdims=True)
            return (y * (g - dot),)
        if op == "concat":
            axis = node.ctx
            sizes = [nodes[i].value.shape[axis] for i in node.inputs]
            splits = np.cumsum(sizes)[:-1]
            return tuple(np.split(g, splits, axis=axis))
        if op == "narrow":
            axis, start, length = node.ctx
            full = np.zeros_like(nodes[node.inputs[0]].value)
            idx = [slice(None)] * full.ndim
            idx[axis] = slice(start, start + length)
            full[tuple(idx)] = g
            return (full,)
        if op == "transpose_last2":
            return (np.swapaxes(g, -1, -2),)
        if op == "reshape":
            return (g.reshape(node.ctx),)
        if op == "reduce_sum":
            x = nodes[node.inputs[0]].value
            return (_spread(g, x.shape, node.ctx),)
        if op == "reduce_mean":
            x = nodes[node.inputs[0]].value
            n = x.size if node.ctx is None else x.shape[node.ctx]
            return (_spread(g, x.shape, node.ctx) / n,)
        if op == "minimum":
            a = nodes[node.inputs[0]].value
            b = nodes[node.inputs[1]].value
            mask = a <= b
            return _unbroadcast(g * mask, a.shape), _unbroadcast(g * ~mask, b.shape)
        if op == "maximum":
            a = nodes[node.inputs[0]].value
            b = nodes[node.inputs[1]].value
            mask = a >= b
            return _unbroadcast(g * mask, a.shape), _unbroadcast(g * ~mask, b.shape)
        if op == "clip":
            x = nodes[node.inputs[0]].value
            lo, hi = node.ctx
            return (g * ((x >= lo) & (x <= hi)),)
        if op == "gaussian_logp":
            x, z = node.ctx
            mu = nodes[node.inputs[0]].value
            log_sigma = nodes[node.inputs[1]].value
            inv_sigma = np.exp(-np.broadcast_to(log_sigma, x.shape))
            ge = g[..., None]
            gmu = ge * z * inv_sigma
            gls = ge * (z * z - 1.0)
            return _unbroadcast(gmu, mu.shape), _unbroadcast(gls, log_sigma.shape)
        if op == "gaussian_entropy":
            ls = nodes[node.inputs[0]].value
            return (np.full_like(ls, float(g)),)
        raise ContractError(f"unknown op {op!r}")


def _spread(g, shape, axis):
    """Broadcast a reduced gradient back to the pre-reduction shape."""
    if axis is None:
        return np.full(shape, np.asarray(g).item(), dtype=np.asarray(g).dtype)
    g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on the parameter arrays.

    Parameters missing from `grads` are treated as zero-gradient.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise DimensionError(f"adam_step: shape mismatch for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
