import numpy as np
import pytest


def finite_diff(build_loss, params, name, flat_idx, eps=1e-6):
    """Central-difference derivative of a scalar loss w.r.t. one parameter
    entry. `build_loss(params) -> float` must rebuild the computation from
    scratch; this stays independent of any backward pass."""
    plus = {k: v.copy() for k, v in params.items()}
    minus = {k: v.copy() for k, v in params.items()}
    plus[name].flat[flat_idx] += eps
    minus[name].flat[flat_idx] -= eps
    return (build_loss(plus) - build_loss(minus)) / (2.0 * eps)


def check_grads(build_loss, grads, params, rng, n_points=20, rel_tol=1e-4,
                abs_floor=1e-7, eps=1e-6):
    """Compare analytic grads against central differences at random entries.

    Only parameters the graph actually registered are sampled; anything else
    has an (unrepresented) zero gradient by construction."""
    names = sorted(set(params) & set(grads))
    for _ in range(n_points):
        name = names[rng.integers(len(names))]
        idx = int(rng.integers(params[name].size))
        num = finite_diff(build_loss, params, name, idx, eps=eps)
        ana = grads[name].flat[idx]
        err = abs(num - ana)
        assert err <= abs_floor + rel_tol * max(abs(num), abs(ana)), (
            f"{name}[{idx}]: analytic {ana}, numeric {num}, err {err}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
