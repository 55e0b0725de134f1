"""Central finite-difference checks for every differentiable op.

The oracle side never touches the autodiff graph: it re-evaluates the forward
function through plain numpy while nudging one element at a time.
"""

import numpy as np
import pytest

from starlknet.engine import Tensor, functional as F

from oracles import finite_difference_gradients, gradients_close

SEEDS = range(20)


def gradcheck(make_loss, arrays, tol=1e-4, eps=1e-5):
    """Compare backward() gradients of make_loss against finite differences.

    ``make_loss(list_of_tensors) -> Tensor scalar``.  ``arrays`` are float64
    numpy arrays treated as the differentiable inputs.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = make_loss(tensors)
    loss.backward()
    analytic = [t.grad.copy() for t in tensors]

    def numeric_fn(arrs):
        frozen = [Tensor(a.copy()) for a in arrs]
        return make_loss(frozen).item()

    numeric = finite_difference_gradients(numeric_fn, [a.copy() for a in arrays], eps=eps)
    for a, n in zip(analytic, numeric):
        assert gradients_close(a, n, tol=tol), (
            f"gradient mismatch: max abs diff {np.abs(a - n).max()}"
        )


def weighted_sum(out, seed):
    """Project a tensor to a scalar with a fixed random weighting.

    Plain sums can hide sign errors that cancel; a random projection cannot.
    """
    w = Tensor(np.random.default_rng(seed ^ 0x5EED).standard_normal(out.data.shape))
    return (out * w).sum()


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_basic_grad(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    gradcheck(
        lambda ts: weighted_sum(F.conv2d(ts[0], ts[1], padding="same"), seed),
        [x, w],
    )


@pytest.mark.parametrize("seed", range(10))
def test_conv2d_strided_dilated_grad(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.standard_normal((1, 2, 9, 9))
    w = rng.standard_normal((2, 2, 3, 3))
    gradcheck(
        lambda ts: weighted_sum(
            F.conv2d(ts[0], ts[1], stride=2, dilation=2, padding=2), seed
        ),
        [x, w],
    )


@pytest.mark.parametrize("seed", range(10))
def test_conv2d_depthwise_grad(seed):
    rng = np.random.default_rng(200 + seed)
    x = rng.standard_normal((2, 4, 7, 7))
    w = rng.standard_normal((4, 1, 5, 5))
    gradcheck(
        lambda ts: weighted_sum(F.conv2d(ts[0], ts[1], groups=4, padding="same"), seed),
        [x, w],
    )


@pytest.mark.parametrize("seed", range(10))
def test_conv2d_depthwise_strided_grad(seed):
    rng = np.random.default_rng(250 + seed)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((3, 1, 3, 3))
    gradcheck(
        lambda ts: weighted_sum(
            F.conv2d(ts[0], ts[1], groups=3, stride=2, padding="same"), seed
        ),
        [x, w],
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_batchnorm_train_grad(seed):
    rng = np.random.default_rng(300 + seed)
    x = rng.standard_normal((2, 3, 4, 4)) * 2.0 + 0.5
    gamma = rng.standard_normal(3) + 1.5
    beta = rng.standard_normal(3)

    def make(ts):
        rm = np.zeros(3)
        rv = np.ones(3)
        out = F.batchnorm2d(ts[0], ts[1], ts[2], rm, rv, training=True)
        return weighted_sum(out, seed)

    gradcheck(make, [x, gamma, beta])


@pytest.mark.parametrize("seed", range(10))
def test_batchnorm_eval_grad(seed):
    rng = np.random.default_rng(400 + seed)
    x = rng.standard_normal((2, 3, 4, 4))
    gamma = rng.standard_normal(3) + 1.0
    beta = rng.standard_normal(3)
    rm = rng.standard_normal(3) * 0.1
    rv = rng.random(3) + 0.5

    def make(ts):
        out = F.batchnorm2d(ts[0], ts[1], ts[2], rm.copy(), rv.copy(), training=False)
        return weighted_sum(out, seed)

    gradcheck(make, [x, gamma, beta])


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_grad(seed):
    rng = np.random.default_rng(500 + seed)
    x = rng.standard_normal((3, 7))
    x[np.abs(x) < 1e-3] += 0.1  # keep clear of the kink
    gradcheck(lambda ts: weighted_sum(F.relu(ts[0]), seed), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_silu_grad(seed):
    rng = np.random.default_rng(600 + seed)
    x = rng.standard_normal((3, 7)) * 2.0
    gradcheck(lambda ts: weighted_sum(F.silu(ts[0]), seed), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_linear_grad(seed):
    rng = np.random.default_rng(700 + seed)
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((3, 6))
    b = rng.standard_normal(3)
    gradcheck(lambda ts: weighted_sum(F.linear(ts[0], ts[1], ts[2]), seed), [x, w, b])


@pytest.mark.parametrize("seed", SEEDS)
def test_global_avg_pool_grad(seed):
    rng = np.random.default_rng(800 + seed)
    x = rng.standard_normal((2, 4, 5, 5))
    gradcheck(lambda ts: weighted_sum(F.global_avg_pool(ts[0]), seed), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_soft_cross_entropy_grad(seed):
    rng = np.random.default_rng(900 + seed)
    z = rng.standard_normal((4, 5))
    labels = rng.integers(0, 5, size=4)
    y = np.eye(5)[labels]
    gradcheck(lambda ts: F.soft_cross_entropy(ts[0], Tensor(y)), [z])


@pytest.mark.parametrize("seed", SEEDS)
def test_elementwise_add_mul_grad(seed):
    rng = np.random.default_rng(1000 + seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    gradcheck(lambda ts: weighted_sum(ts[0] * ts[1] + ts[0], seed), [a, b])
