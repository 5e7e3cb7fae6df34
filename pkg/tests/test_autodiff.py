"""Finite-difference and contract tests for the autodiff kernels."""

import numpy as np
import pytest

from modgraph import autodiff as ad
from modgraph.autodiff import Tensor, grad_check


def t64(arr, requires_grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=requires_grad)


def rand(rng, *shape, margin=0.0):
    """Random float64 array, optionally pushed away from zero so kernels with
    a kink (relu, leaky_relu, max) are differentiable at the sample point."""
    x = rng.standard_normal(shape)
    if margin:
        bump = np.where(x >= 0, margin, -margin)
        x = np.where(np.abs(x) < margin, x + 2 * bump, x)
    return x


def check(fn, tensors, names=None, tol=1e-4):
    res = grad_check(fn, tensors, eps=1e-5, tol=tol, names=names)
    assert res.passed, str(res)
    return res


# ---------------------------------------------------------------------------
# elementwise, activations, reductions
# ---------------------------------------------------------------------------

def test_add_mul_sub_div_with_broadcasting():
    rng = np.random.default_rng(0)
    a = t64(rand(rng, 3, 4))
    b = t64(rand(rng, 4) + 3.0)  # keep divisor away from zero
    check(lambda a, b: ad.reduce_sum(ad.mul(ad.add(a, b), ad.sub(a, b))), [a, b])
    check(lambda a, b: ad.reduce_sum(ad.div(a, b)), [a, b])


def test_power_neg_sqrt_exp_log():
    rng = np.random.default_rng(1)
    a = t64(np.abs(rand(rng, 5, 2)) + 0.5)
    check(lambda a: ad.reduce_sum(ad.power(a, -0.5)), [a])
    check(lambda a: ad.reduce_sum(ad.neg(ad.sqrt(a))), [a])
    check(lambda a: ad.reduce_sum(ad.exp(ad.log(a))), [a])


@pytest.mark.parametrize("op", ["relu", "leaky_relu", "gelu", "sigmoid", "tanh"])
def test_activation_gradients(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    a = t64(rand(rng, 4, 7, margin=0.05))
    fn = {
        "relu": lambda a: ad.reduce_sum(ad.relu(a)),
        "leaky_relu": lambda a: ad.reduce_sum(ad.leaky_relu(a, 0.2)),
        "gelu": lambda a: ad.reduce_sum(ad.gelu(a)),
        "sigmoid": lambda a: ad.reduce_sum(ad.sigmoid(a)),
        "tanh": lambda a: ad.reduce_sum(ad.tanh(a)),
    }[op]
    check(fn, [a])


def test_reductions():
    rng = np.random.default_rng(2)
    a = t64(rand(rng, 3, 5, 2))
    check(lambda a: ad.reduce_sum(ad.reduce_mean(a, axis=1)), [a])
    check(lambda a: ad.reduce_sum(ad.reduce_mean(a, axis=(0, 2), keepdims=True)), [a])
    a2 = t64(rand(rng, 4, 6, margin=0.05))
    check(lambda a: ad.reduce_sum(ad.reduce_max(a, axis=1)), [a2])


def test_reduce_max_routes_gradient_to_lowest_index_on_ties():
    a = t64([[2.0, 5.0, 5.0, 1.0]])
    y = ad.reduce_sum(ad.reduce_max(a, axis=1))
    y.backward()
    assert np.array_equal(a.grad, [[0.0, 1.0, 0.0, 0.0]])


# ---------------------------------------------------------------------------
# matmul / shape surgery
# ---------------------------------------------------------------------------

def test_matmul_plain_and_batched():
    rng = np.random.default_rng(3)
    a = t64(rand(rng, 4, 3))
    b = t64(rand(rng, 3, 5))
    check(lambda a, b: ad.reduce_sum(ad.matmul(a, b)), [a, b])
    # batched lhs against shared rhs
    a3 = t64(rand(rng, 2, 4, 3))
    check(lambda a, b: ad.reduce_sum(ad.matmul(a, b)), [a3, b])
    # fully batched
    b3 = t64(rand(rng, 2, 3, 5))
    check(lambda a, b: ad.reduce_sum(ad.matmul(a, b)), [a3, b3])


def test_matmul_shape_error_names_kernel():
    a = t64(np.zeros((2, 3)))
    b = t64(np.zeros((4, 2)))
    with pytest.raises(ad.ShapeError, match="matmul"):
        ad.matmul(a, b)


def test_transpose_reshape_concat_stack_slice():
    rng = np.random.default_rng(4)
    a = t64(rand(rng, 2, 3, 4))
    b = t64(rand(rng, 2, 3, 4))
    check(lambda a: ad.reduce_sum(ad.mul(ad.transpose(a, (2, 0, 1)), 1.5)), [a])
    check(lambda a: ad.reduce_sum(ad.reshape(a, (6, 4))), [a])
    check(lambda a, b: ad.reduce_sum(ad.mul(ad.concat([a, b], axis=1), 0.5)), [a, b])
    check(lambda a, b: ad.reduce_sum(ad.mul(ad.stack([a, b], axis=2), 2.0)), [a, b])
    check(lambda a: ad.reduce_sum(a[:, 1:3, ::2]), [a])


def test_slice_rejects_advanced_indexing():
    a = t64(np.zeros((3, 3)))
    with pytest.raises(TypeError):
        a[np.array([0, 1])]


# ---------------------------------------------------------------------------
# convolutions and pooling
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (3, 2)])
def test_conv1d_gradients(stride, padding):
    rng = np.random.default_rng(10 * stride + padding)
    x = t64(rand(rng, 2, 3, 11))
    w = t64(rand(rng, 4, 3, 3))
    b = t64(rand(rng, 4))
    check(lambda x, w, b: ad.reduce_sum(ad.conv1d(x, w, b, stride=stride, padding=padding)),
          [x, w, b], names=["x", "w", "b"])


def test_conv1d_matches_manual_correlation():
    rng = np.random.default_rng(7)
    x = rand(rng, 1, 2, 9)
    w = rand(rng, 3, 2, 3)
    out = ad.conv1d(t64(x, False), t64(w, False)).data
    for o in range(3):
        for l in range(7):
            ref = sum(x[0, c, l + k] * w[o, c, k] for c in range(2) for k in range(3))
            assert abs(out[0, o, l] - ref) < 1e-12


@pytest.mark.parametrize("stride,padding", [((1, 1), (0, 0)), ((2, 1), (1, 0))])
def test_conv2d_gradients(stride, padding):
    rng = np.random.default_rng(11)
    x = t64(rand(rng, 2, 2, 7, 6))
    w = t64(rand(rng, 3, 2, 3, 2))
    b = t64(rand(rng, 3))
    check(lambda x, w, b: ad.reduce_sum(ad.conv2d(x, w, b, stride=stride, padding=padding)),
          [x, w, b], names=["x", "w", "b"])


def test_conv2d_full_height_kernel():
    # the spectrogram branch uses a kernel spanning the whole frequency axis
    rng = np.random.default_rng(12)
    x = t64(rand(rng, 2, 1, 8, 5))
    w = t64(rand(rng, 2, 1, 8, 1))
    y = ad.conv2d(x, w)
    assert y.shape == (2, 2, 1, 5)
    check(lambda x, w: ad.reduce_sum(y := ad.conv2d(x, w)), [x, w])


def test_maxpool1d_gradients_and_argmax_routing():
    rng = np.random.default_rng(13)
    x = t64(rand(rng, 2, 3, 8, margin=0.05))
    check(lambda x: ad.reduce_sum(ad.maxpool1d(x, 2, 2)), [x])

    x2 = t64([[1.0, 4.0, 4.0, 2.0]])
    y = ad.maxpool1d(x2, 2, 2)
    y.backward(np.array([[1.0, 1.0]]))
    # both windows route to their first maximum
    assert np.array_equal(x2.grad, [[0.0, 1.0, 1.0, 0.0]])


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------

def test_softmax_rows_sum_to_one_and_gradients():
    rng = np.random.default_rng(14)
    x = t64(rand(rng, 6, 9) * 3)
    y = ad.softmax(x, axis=-1)
    assert np.all(np.abs(y.data.sum(axis=-1) - 1.0) < 1e-12)
    check(lambda x: ad.reduce_sum(ad.mul(ad.softmax(x, axis=-1), rand(np.random.default_rng(1), 6, 9))), [x])


def test_log_softmax_gradients():
    rng = np.random.default_rng(15)
    x = t64(rand(rng, 4, 5) * 2)
    w = rand(np.random.default_rng(2), 4, 5)
    check(lambda x: ad.reduce_sum(ad.mul(ad.log_softmax(x, axis=-1), w)), [x])


def test_masked_softmax_zeroes_masked_entries():
    rng = np.random.default_rng(16)
    x = t64(rand(rng, 3, 5))
    mask = np.zeros((3, 5))
    mask[0, :2] = 1
    mask[1, 2] = 1
    mask[2, :] = 1
    y = ad.masked_softmax(x, mask)
    assert np.all(y.data[mask == 0] == 0.0)
    assert np.all(np.abs(y.data.sum(axis=-1) - 1.0) < 1e-12)
    assert y.data[1, 2] == 1.0
    w = rand(np.random.default_rng(3), 3, 5)
    check(lambda x: ad.reduce_sum(ad.mul(ad.masked_softmax(x, mask), w)), [x])


# ---------------------------------------------------------------------------
# band embedding
# ---------------------------------------------------------------------------

def test_band_embed_structure_and_gradients():
    rng = np.random.default_rng(17)
    n = 6
    d1 = t64(rand(rng, 2, n - 1))
    d2 = t64(rand(rng, 2, n - 2))
    a = ad.band_embed([d1, d2], n)
    assert a.shape == (2, n, n)
    m = a.data
    assert np.array_equal(m, np.swapaxes(m, -1, -2))
    assert np.all(np.diagonal(m, axis1=-2, axis2=-1) == 0)
    assert np.all(m[:, 0, 3:] == 0)
    w = rand(np.random.default_rng(4), 2, n, n)
    check(lambda d1, d2: ad.reduce_sum(ad.mul(ad.band_embed([d1, d2], n), w)), [d1, d2])


def test_band_diagonal_roundtrip():
    rng = np.random.default_rng(18)
    n = 5
    d1 = t64(rand(rng, n - 1))
    a = ad.band_embed([d1], n)
    back = ad.band_diagonal(a, 1)
    assert np.allclose(back.data, d1.data)
    w = rand(np.random.default_rng(5), n - 1)
    check(lambda d1: ad.reduce_sum(ad.mul(ad.band_diagonal(ad.band_embed([d1], n), 1), w)), [d1])


# ---------------------------------------------------------------------------
# engine behaviour
# ---------------------------------------------------------------------------

def test_every_kernel_records_an_adjoint():
    rng = np.random.default_rng(19)
    x = t64(rand(rng, 2, 3, 8, margin=0.05))
    m = t64(rand(rng, 8, 8))
    outputs = [
        ad.add(x, x), ad.sub(x, x), ad.mul(x, x), ad.div(x, ad.add(ad.mul(x, x), 1.0)),
        ad.neg(x), ad.power(ad.add(ad.mul(x, x), 1.0), 0.5),
        ad.relu(x), ad.leaky_relu(x), ad.gelu(x), ad.sigmoid(x), ad.tanh(x),
        ad.exp(x), ad.log(ad.add(ad.mul(x, x), 1.0)), ad.sqrt(ad.add(ad.mul(x, x), 1.0)),
        ad.reduce_sum(x), ad.reduce_mean(x, axis=1), ad.reduce_max(x, axis=2),
        ad.matmul(m, m), ad.transpose(x, (1, 0, 2)), ad.swapaxes(x, 0, 1),
        ad.reshape(x, (6, 8)), ad.concat([x, x], axis=1), ad.stack([x, x]),
        x[:, :, :4],
        ad.conv1d(x, t64(rand(rng, 2, 3, 3))),
        ad.conv2d(ad.reshape(x, (2, 1, 3, 8)), t64(rand(rng, 2, 1, 3, 1))),
        ad.maxpool1d(x, 2),
        ad.softmax(m), ad.log_softmax(m), ad.masked_softmax(m, np.ones((8, 8))),
        ad.band_embed([t64(rand(rng, 7))], 8), ad.band_diagonal(m, 1),
    ]
    for out in outputs:
        assert out.requires_grad and out._vjp is not None, out._op


def test_no_grad_suppresses_taping():
    x = t64(np.ones((2, 2)))
    with ad.no_grad():
        y = ad.mul(x, 3.0)
    assert not y.requires_grad and y._vjp is None


def test_backward_requires_scalar_or_explicit_gradient():
    x = t64(np.ones((2, 2)))
    y = ad.mul(x, 2.0)
    with pytest.raises(ValueError):
        y.backward()
    y.backward(np.ones((2, 2)))
    assert np.array_equal(x.grad, 2 * np.ones((2, 2)))


def test_gradient_accumulates_across_backward_calls():
    x = t64(np.array([1.0, 2.0]))
    ad.reduce_sum(ad.mul(x, x)).backward()
    first = x.grad.copy()
    ad.reduce_sum(ad.mul(x, x)).backward()
    assert np.allclose(x.grad, 2 * first)


def test_grad_check_reports_failure_for_wrong_gradient():
    # a deliberately broken function: value of x*x but gradient taped as 3
    def broken(x):
        y = ad.mul(x, x)

        def vjp(g):
            return (3.0 * np.ones_like(g),)

        forged = ad._from_op(y.data, (x,), vjp, "broken")
        return ad.reduce_sum(forged)

    x = t64(np.array([0.7, -1.2]))
    res = grad_check(broken, [x], eps=1e-5, tol=1e-4)
    assert not res.passed


def test_grad_check_rejects_float32():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda x: ad.reduce_sum(x), [x])
