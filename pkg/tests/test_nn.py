import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samplecnn import nn
from samplecnn.errors import ShapeError
from oracles import numeric_grad, rel_error

TOL = 1e-6


def conv(w, b=None, stride=1, zero_pad=False):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, None, :]
    b = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
    return nn.ConvParams(w, b, stride, zero_pad)


def test_conv_hand_example():
    y = nn.conv1d_forward(np.arange(1.0, 7.0)[None, :], conv([1, 1, 1], stride=3))
    assert y.shape == (1, 1, 2) and list(y[0, 0]) == [6, 15]


def test_conv_hand_gradient():
    x = np.array([[[1.0, 2.0, 3.0]]])
    p = conv([2.0])
    g = nn.conv1d_backward(x, p, np.ones((1, 1, 3)))
    assert g.weight.item() == 6 and g.bias.item() == 3
    assert list(g.x[0, 0]) == [2, 2, 2]


@pytest.mark.parametrize("time, k, s", [(9, 3, 1), (10, 3, 1), (9, 3, 3), (8, 2, 2), (7, 3, 2)])
def test_same_padding_lengths(time, k, s):
    left, right, out = nn.conv_padding(time, k, s, True)
    assert out == -(-time // s)
    y = nn.conv1d_forward(np.ones((1, 1, time)), conv(np.ones(k), stride=s, zero_pad=True))
    assert y.shape[-1] == out


def test_conv_shape_errors():
    with pytest.raises(ShapeError):
        nn.conv1d_forward(np.ones((1, 2, 9)), conv(np.ones(3)))
    with pytest.raises(ShapeError):
        nn.conv1d_forward(np.ones((1, 1, 2)), conv(np.ones(3)))


def test_maxpool_hand_example():
    y, idx = nn.maxpool1d_forward(np.array([[3.0, 1, 4, 1, 5, 9]]), 3)
    assert list(y[0, 0]) == [4, 9]
    dx = nn.maxpool1d_backward(idx, np.ones((1, 1, 2)), 3)
    assert list(dx[0, 0]) == [0, 0, 1, 0, 0, 1]


def test_maxpool_tie_goes_to_first():
    _, idx = nn.maxpool1d_forward(np.array([[2.0, 2.0, 1.0]]), 3)
    assert idx.item() == 0
    with pytest.raises(ShapeError):
        nn.maxpool1d_forward(np.ones((1, 1, 7)), 3)


def test_batchnorm_hand_example():
    p = nn.BatchNormParams.identity(1, np.float64, eps=1e-12)
    y, _ = nn.batchnorm_forward(np.array([[[1.0, 2.0, 3.0]]]), p, train=True)
    assert np.allclose(y[0, 0], [-1.2247, 0, 1.2247], atol=1e-3)
    assert np.isclose(p.running_mean[0], 0.1 * 2)
    assert np.isclose(p.running_var[0], 0.9 + 0.1 * 2 / 3)


def test_batchnorm_infer_uses_running_stats():
    p = nn.BatchNormParams(np.array([2.0]), np.array([1.0]), np.array([3.0]), np.array([4.0]), eps=0.0)
    y, _ = nn.batchnorm_forward(np.array([[[5.0]]]), p, train=False)
    assert y.item() == 2.0 * (5 - 3) / 2 + 1


def test_sigmoid_stable():
    s = nn.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(s)) and s[1] == 0.5 and s[0] == 0.0 and s[2] == 1.0


def test_dropout_inverted_and_identity_at_inference():
    rng = np.random.default_rng(0)
    x = np.ones((200, 50))
    y, mask = nn.dropout(x, 0.5, True, rng)
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1) < 0.05
    assert np.array_equal(nn.dropout_backward(mask, x), mask)
    y, mask = nn.dropout(x, 0.5, False, rng)
    assert y is x and mask is None


def test_bce_values():
    loss, grad = nn.bce_loss(np.array([[0.5]]), np.array([[1.0]]))
    assert np.isclose(loss, np.log(2))
    assert np.isclose(grad.item(), -0.5)
    loss, _ = nn.bce_loss(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]))
    assert np.isfinite(loss) and np.isclose(loss, -np.log(1e-7))


def test_nesterov_two_steps():
    theta, v = [np.zeros(1)], [np.zeros(1)]
    nn.nesterov_step(theta, [np.ones(1)], v, 0.1, 0.9)
    assert np.isclose(v[0].item(), -0.1) and np.isclose(theta[0].item(), -0.19)
    nn.nesterov_step(theta, [np.ones(1)], v, 0.1, 0.9)
    assert np.isclose(v[0].item(), -0.19) and np.isclose(theta[0].item(), -0.461)


def test_nesterov_shape_checks():
    with pytest.raises(ShapeError):
        nn.nesterov_step([np.zeros(2)], [np.zeros(3)], [np.zeros(2)], 0.1, 0.9)
    with pytest.raises(ValueError):
        nn.nesterov_step([np.zeros(1)], [np.zeros(1)], [np.zeros(1)], 0.1, 1.0)


# --------------------------------------------------------------------------
# finite-difference checks, one random instance per seed


SEEDS = range(20)


def _probe(rng, shape):
    return rng.standard_normal(shape)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("k, s, pad", [(3, 1, True), (3, 3, False), (2, 1, True), (3, 2, True)])
def test_conv_gradients(seed, k, s, pad):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 8))
    p = conv(rng.standard_normal((3, 2, k)), rng.standard_normal(3), s, pad)
    r = _probe(rng, nn.conv1d_forward(x, p).shape)
    f = lambda: float(np.sum(nn.conv1d_forward(x, p) * r))
    g = nn.conv1d_backward(x, p, r)
    assert rel_error(g.x, numeric_grad(f, x)) < TOL
    assert rel_error(g.weight, numeric_grad(f, p.weight)) < TOL
    assert rel_error(g.bias, numeric_grad(f, p.bias)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_maxpool_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 9))
    y, idx = nn.maxpool1d_forward(x, 3)
    r = _probe(rng, y.shape)
    f = lambda: float(np.sum(nn.maxpool1d_forward(x, 3)[0] * r))
    assert rel_error(nn.maxpool1d_backward(idx, r, 3), numeric_grad(f, x)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradients(seed, train):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 4)) * 2 + 1
    p = nn.BatchNormParams(rng.standard_normal(3), rng.standard_normal(3),
                           rng.standard_normal(3), rng.uniform(0.5, 2, 3))

    def f():
        q = nn.BatchNormParams(p.gamma, p.beta, p.running_mean.copy(), p.running_var.copy())
        return float(np.sum(nn.batchnorm_forward(x, q, train)[0] * r))

    y, cache = nn.batchnorm_forward(x, nn.BatchNormParams(p.gamma, p.beta, p.running_mean.copy(),
                                                          p.running_var.copy()), train)
    r = _probe(rng, y.shape)
    g = nn.batchnorm_backward(cache, r, p)
    assert rel_error(g.x, numeric_grad(f, x)) < TOL
    assert rel_error(g.gamma, numeric_grad(f, p.gamma)) < TOL
    assert rel_error(g.beta, numeric_grad(f, p.beta)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_pointwise_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 5))
    r = _probe(rng, x.shape)
    f = lambda: float(np.sum(nn.relu(x) * r))
    assert rel_error(nn.relu_backward(x, r), numeric_grad(f, x)) < TOL
    f = lambda: float(np.sum(nn.sigmoid(x) * r))
    assert rel_error(nn.sigmoid_backward(nn.sigmoid(x), r), numeric_grad(f, x)) < TOL
    mask = nn.dropout(x, 0.3, True, np.random.default_rng(seed))[1]
    f = lambda: float(np.sum(x * mask * r))
    assert rel_error(nn.dropout_backward(mask, r), numeric_grad(f, x)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_bce_logit_gradient(seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((4, 5))
    y = (rng.random((4, 5)) > 0.5).astype(np.float64)
    f = lambda: nn.bce_loss(nn.sigmoid(z), y)[0]
    assert rel_error(nn.bce_loss(nn.sigmoid(z), y)[1], numeric_grad(f, z)) < TOL


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(1, 5), st.integers(1, 4), st.booleans())
def test_conv_output_length_property(time, k, s, pad):
    if not pad and time < k:
        return
    y = nn.conv1d_forward(np.ones((1, 1, time)), conv(np.ones(k), stride=s, zero_pad=pad))
    expected = -(-time // s) if pad else (time - k) // s + 1
    assert y.shape == (1, 1, expected)
