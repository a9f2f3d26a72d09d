import math

import numpy as np
import pytest

from swarmnav.autodiff import AdamState, Graph, adam_step
from swarmnav.errors import ContractError, DimensionError, NumericError

from conftest import check_grads


def g64():
    return Graph(dtype=np.float64)


# -- forward anchors ----------------------------------------------------------


def test_matmul_identity():
    g = g64()
    a = g.constant(np.eye(2))
    b = g.constant([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(g.matmul(a, b).value, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_hand_value():
    g = g64()
    out = g.matmul(g.constant([[1.0, 2.0], [3.0, 4.0]]), g.constant([[5.0], [6.0]]))
    # 1*5+2*6 = 17, 3*5+4*6 = 39
    assert np.array_equal(out.value, [[17.0], [39.0]])


def test_matmul_shape_mismatch():
    g = g64()
    a = g.constant(np.zeros((2, 3)))
    b = g.constant(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        g.matmul(a, b)


def test_softmax_equal_logits():
    g = g64()
    out = g.softmax_last(g.constant([0.0, 0.0, 0.0]))
    assert np.allclose(out.value, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


@pytest.mark.parametrize("c", [0.0, -3.5, 7.25])
def test_softmax_two_logit_closed_form(c):
    g = g64()
    out = g.softmax_last(g.constant([c, c + math.log(2.0)]))
    assert np.allclose(out.value, [1 / 3, 2 / 3], atol=1e-12)


def test_softmax_shift_invariance_exact():
    # dyadic logits and a dyadic shift make the float additions exact,
    # so the outputs must be bit-identical
    v = np.array([0.25, -1.5, 0.125, 2.0])
    g = g64()
    a = g.softmax_last(g.constant(v)).value
    b = g.softmax_last(g.constant(v + 4.0)).value
    assert np.array_equal(a, b)


def test_softmax_rows_sum_to_one(rng):
    g = g64()
    x = rng.normal(size=(7, 5, 9)) * 10
    y = g.softmax_last(g.constant(x)).value
    assert np.all(y >= 0) and np.all(y <= 1)
    assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-9)


def test_softmax_empty_axis():
    g = g64()
    with pytest.raises(DimensionError):
        g.softmax_last(g.constant(np.zeros((3, 0))))


def test_elu_values():
    g = g64()
    out = g.elu(g.constant([0.0, 2.5, -1.0]))
    assert out.value[0] == 0.0
    assert out.value[1] == 2.5
    assert abs(out.value[2] - (math.exp(-1.0) - 1.0)) < 1e-15  # -0.6321205588...


def test_constant_rejects_nan():
    g = g64()
    with pytest.raises(NumericError):
        g.constant([1.0, float("nan")])


# -- backward anchors ---------------------------------------------------------


def test_backward_sum_of_squares():
    g = g64()
    x = g.param("x", np.array([3.0]))
    loss = g.reduce_sum(g.mul(x, x))
    grads = g.backward(loss)
    assert np.allclose(grads["x"], [6.0])  # d/dx x^2 = 2x


def test_backward_unused_param_zero():
    g = g64()
    x = g.param("x", np.array([3.0]))
    p = g.param("p", np.array([1.0, 2.0]))
    g.reduce_sum(p)  # p participates in the graph but not in the loss
    loss = g.reduce_sum(g.mul(x, x))
    grads = g.backward(loss)
    assert np.array_equal(grads["p"], [0.0, 0.0])


def test_backward_nonscalar_loss_rejected():
    g = g64()
    x = g.param("x", np.array([1.0, 2.0]))
    with pytest.raises(ContractError):
        g.backward(g.mul(x, x))


def test_backward_nonfinite_gradient_named():
    g = g64()
    x = g.param("x", np.array([1000.0]))
    with np.errstate(over="ignore"):
        loss = g.reduce_sum(g.exp(x))  # exp overflows to inf
        with pytest.raises(NumericError, match="node"):
            g.backward(loss)


def test_graph_determinism(rng):
    x = rng.normal(size=(4, 6))
    w = rng.normal(size=(6, 3))
    outs = []
    for _ in range(2):
        g = g64()
        y = g.softmax_last(g.matmul(g.constant(x), g.param("w", w)))
        outs.append(g.reduce_mean(y).value)
    assert outs[0] == outs[1]


# -- per-op gradient checks vs central differences ----------------------------


def _loss_builder(op_fn, proj):
    """Wrap an op into a scalar loss via a fixed random projection."""

    def build(params):
        g = g64()
        out = op_fn(g, {k: g.param(k, v) for k, v in params.items()})
        return float(g.reduce_sum(g.mul(out, g.constant(proj))).value)

    return build


def _grads_of(op_fn, proj, params):
    g = g64()
    out = op_fn(g, {k: g.param(k, v) for k, v in params.items()})
    loss = g.reduce_sum(g.mul(out, g.constant(proj)))
    return g.backward(loss)


OP_CASES = {
    "matmul": (lambda g, p: g.matmul(p["a"], p["b"]),
               {"a": (3, 4), "b": (4, 2)}, (3, 2)),
    "matmul_batched": (lambda g, p: g.matmul(p["a"], p["b"]),
                       {"a": (2, 3, 4), "b": (2, 4, 5)}, (2, 3, 5)),
    "matmul_shared_weight": (lambda g, p: g.matmul(p["a"], p["b"]),
                             {"a": (2, 3, 4), "b": (4, 5)}, (2, 3, 5)),
    "add_bias": (lambda g, p: g.add(p["a"], p["b"]), {"a": (3, 4), "b": (4,)}, (3, 4)),
    "mul": (lambda g, p: g.mul(p["a"], p["b"]), {"a": (3, 4), "b": (3, 4)}, (3, 4)),
    "scalar_mul": (lambda g, p: g.scalar_mul(p["a"], -2.5), {"a": (3, 4)}, (3, 4)),
    "sigmoid": (lambda g, p: g.sigmoid(p["a"]), {"a": (3, 4)}, (3, 4)),
    "tanh": (lambda g, p: g.tanh(p["a"]), {"a": (3, 4)}, (3, 4)),
    "elu": (lambda g, p: g.elu(p["a"]), {"a": (3, 4)}, (3, 4)),
    "exp": (lambda g, p: g.exp(p["a"]), {"a": (3, 4)}, (3, 4)),
    "softmax": (lambda g, p: g.softmax_last(p["a"]), {"a": (3, 5)}, (3, 5)),
    "concat": (lambda g, p: g.concat([p["a"], p["b"]], axis=-1),
               {"a": (3, 2), "b": (3, 4)}, (3, 6)),
    "narrow": (lambda g, p: g.narrow(p["a"], 1, 1, 2), {"a": (3, 5)}, (3, 2)),
    "transpose": (lambda g, p: g.transpose_last2(p["a"]), {"a": (3, 4)}, (4, 3)),
    "reshape": (lambda g, p: g.reshape(p["a"], (2, 6)), {"a": (3, 4)}, (2, 6)),
    "reduce_sum_axis": (lambda g, p: g.reduce_sum(p["a"], axis=1), {"a": (3, 4)}, (3,)),
    "reduce_mean": (lambda g, p: g.reshape(g.reduce_mean(p["a"]), (1,)),
                    {"a": (3, 4)}, (1,)),
    "minimum": (lambda g, p: g.minimum(p["a"], p["b"]), {"a": (3, 4), "b": (3, 4)}, (3, 4)),
    "maximum": (lambda g, p: g.maximum(p["a"], p["b"]), {"a": (3, 4), "b": (3, 4)}, (3, 4)),
    "clip": (lambda g, p: g.clip(p["a"], -0.5, 0.5), {"a": (3, 4)}, (3, 4)),
    "gaussian_entropy": (lambda g, p: g.reshape(g.gaussian_entropy(p["ls"]), (1,)),
                         {"ls": (2,)}, (1,)),
}


@pytest.mark.parametrize("case", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(case, rng):
    op_fn, shapes, out_shape = OP_CASES[case]
    params = {k: rng.normal(size=s) for k, s in shapes.items()}
    proj = rng.normal(size=out_shape)
    build = _loss_builder(op_fn, proj)
    grads = _grads_of(op_fn, proj, params)
    check_grads(build, grads, params, rng, n_points=20)


def test_gaussian_logp_gradients(rng):
    x = rng.normal(size=(4, 2))

    def op(g, p):
        return g.gaussian_logp(p["mu"], p["ls"], x)

    params = {"mu": rng.normal(size=(4, 2)), "ls": rng.normal(size=(2,)) * 0.3}
    proj = rng.normal(size=(4,))
    build = _loss_builder(op, proj)
    grads = _grads_of(op, proj, params)
    check_grads(build, grads, params, rng, n_points=20)


def test_gaussian_logp_peak_value():
    # at the mean: logp = -sum_d ln(sigma_d * sqrt(2*pi))
    g = g64()
    mu = g.param("mu", np.array([[0.3, -0.2]]))
    ls = g.param("ls", np.log(np.array([0.5, 1.5])))
    out = g.gaussian_logp(mu, ls, np.array([[0.3, -0.2]]))
    expect = -(math.log(0.5 * math.sqrt(2 * math.pi))
               + math.log(1.5 * math.sqrt(2 * math.pi)))
    assert abs(out.value[0] - expect) < 1e-12


def test_gaussian_entropy_closed_form():
    g = g64()
    ls = g.param("ls", np.zeros(2))  # sigma = [1, 1]
    out = g.gaussian_entropy(ls)
    assert abs(float(out.value) - math.log(2 * math.pi * math.e)) < 1e-9


# -- Adam ----------------------------------------------------------------------


def test_adam_zero_gradient_fixed_point():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState.for_params(params, lr=0.1)
    before = params["w"].copy()
    adam_step(params, {"w": np.zeros(3)}, state)
    assert np.array_equal(params["w"], before)
    assert state.t == 1


def test_adam_first_step_is_signed_lr():
    # with eps << |g|, the bias-corrected first step is -lr * sign(g)
    params = {"w": np.array([0.0, 0.0])}
    state = AdamState.for_params(params, lr=1e-3)
    adam_step(params, {"w": np.array([0.7, -0.002])}, state)
    assert np.allclose(params["w"], [-1e-3, 1e-3], rtol=1e-4)


def test_adam_constant_gradient_monotone():
    params = {"w": np.array([0.5])}
    state = AdamState.for_params(params, lr=0.01)
    history = [params["w"][0]]
    for _ in range(5):
        adam_step(params, {"w": np.array([2.0])}, state)
        history.append(params["w"][0])
    assert all(b < a for a, b in zip(history, history[1:]))


def test_adam_matches_scalar_reference():
    # independent textbook implementation, scalar, carried alongside
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    grads = [1.3, -0.4, 0.9, 0.02, -2.0]
    theta, m, v = 0.7, 0.0, 0.0
    ref = []
    for t, gval in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * gval
        v = b2 * v + (1 - b2) * gval * gval
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta -= lr * m_hat / (math.sqrt(v_hat) + eps)
        ref.append(theta)

    params = {"w": np.array([0.7])}
    state = AdamState.for_params(params, lr=lr, beta1=b1, beta2=b2, eps=eps)
    for gval, expect in zip(grads, ref):
        adam_step(params, {"w": np.array([gval])}, state)
        assert abs(params["w"][0] - expect) < 1e-12


def test_adam_shape_mismatch():
    params = {"w": np.zeros(3)}
    state = AdamState.for_params(params)
    with pytest.raises(DimensionError):
        adam_step(params, {"w": np.zeros(4)}, state)
