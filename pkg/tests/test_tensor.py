import numpy as np
import pytest

from modkit.tensor import NumericsError, Tensor, concat, gelu, layer_norm, mse, softmax, tensor


def test_matmul_identity():
    a = tensor(np.eye(2))
    b = tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ b).data, [[1, 2], [3, 4]])


def test_matmul_1x1():
    out = tensor([[2.0]]) @ tensor([[3.0]])
    np.testing.assert_array_equal(out.data, [[6.0]])


def test_matmul_hand_computed():
    # independent hand computation: rows of A dotted with columns of B
    a = tensor([[1.0, 2.0], [3.0, 4.0]])
    b = tensor([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal((a @ b).data, [[19, 22], [43, 50]])


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        tensor(np.ones((2, 3))) @ tensor(np.ones((2, 3)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matmul_associativity(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (tensor(rng.standard_normal((4, 4))) for _ in range(3))
    left = ((a @ b) @ c).data
    right = (a @ (b @ c)).data
    np.testing.assert_allclose(left, right, atol=1e-10)


def test_softmax_symmetry():
    np.testing.assert_allclose(softmax(tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_ln2():
    out = softmax(tensor([np.log(2.0), 0.0])).data
    np.testing.assert_allclose(out, [2 / 3, 1 / 3], atol=1e-15)


def test_softmax_stability():
    out = softmax(tensor([1000.0, 0.0])).data
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    x = tensor(rng.uniform(-1e3, 1e3, size=(8, 16)))
    sums = softmax(x, axis=-1).data.sum(axis=-1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_softmax_empty_axis():
    with pytest.raises(ValueError):
        softmax(tensor(np.zeros((2, 0))))


def test_layer_norm_constant_row():
    out = layer_norm(tensor([5.0, 5.0, 5.0])).data
    np.testing.assert_allclose(out, 0.0, atol=1e-3)


def test_layer_norm_closed_form():
    # mean 0, population variance 1: output is x / sqrt(1 + eps)
    eps = 1e-6
    expected = np.array([1.0, -1.0]) / np.sqrt(1.0 + eps)
    out = layer_norm(tensor([1.0, -1.0]), eps=eps).data
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_layer_norm_shift_invariance():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 8))
    for c in (1.0, -4.5, 1e2):
        np.testing.assert_allclose(
            layer_norm(tensor(x + c)).data, layer_norm(tensor(x)).data, atol=1e-9
        )


def test_backward_square():
    x = tensor(3.0, requires_grad=True)
    (x * x).backward()
    np.testing.assert_allclose(x.grad, 6.0)


def test_backward_softmax_sum_is_zero():
    # softmax rows sum to 1 identically, so the gradient vanishes
    x = tensor(np.random.default_rng(0).standard_normal(5), requires_grad=True)
    softmax(x).sum().backward()
    np.testing.assert_allclose(x.grad, 0.0, atol=1e-15)


def test_backward_non_scalar_loss():
    x = tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * x).backward()


def test_backward_unused_param_grad_is_zero():
    used = tensor(np.ones(2), requires_grad=True)
    unused = tensor(np.ones(2), requires_grad=True)
    (used * used).sum().backward()
    assert unused.grad is None  # never touched: exactly zero contribution


def test_backward_accumulates_over_reuse():
    x = tensor(2.0, requires_grad=True)
    ((x * x) + (x * 3.0)).backward()
    np.testing.assert_allclose(x.grad, 7.0)


def test_graph_freed_after_backward():
    x = tensor(2.0, requires_grad=True)
    y = x * x
    y.backward()
    assert y._parents == () and y._backward is None
    # the tape is consumed: a second pass cannot reach x any more
    x.grad = None
    y.backward()
    assert x.grad is None


def test_nan_rejected_on_creation():
    with pytest.raises(NumericsError):
        tensor([1.0, np.nan])


def test_inf_rejected_from_op():
    x = tensor([1e308])
    with np.errstate(over="ignore"), pytest.raises(NumericsError):
        x + x


def test_bias_broadcast_gradient():
    x = tensor(np.ones((4, 3)), requires_grad=True)
    b = tensor(np.zeros(3), requires_grad=True)
    ((x + b) * 2.0).sum().backward()
    np.testing.assert_array_equal(b.grad, [8.0, 8.0, 8.0])
    np.testing.assert_array_equal(x.grad, np.full((4, 3), 2.0))


def test_concat_and_narrow_roundtrip():
    a = tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    joined = concat([a, b], axis=1)
    np.testing.assert_array_equal(joined.narrow(1, 0, 3).data, a.data)
    np.testing.assert_array_equal(joined.narrow(1, 3, 2).data, b.data)
    joined.narrow(1, 3, 2).sum().backward()
    np.testing.assert_array_equal(a.grad, np.zeros((2, 3)))
    np.testing.assert_array_equal(b.grad, np.ones((2, 2)))


def test_transpose_reshape():
    x = tensor(np.arange(24.0).reshape(2, 3, 4), requires_grad=True)
    y = x.transpose((2, 0, 1)).reshape(4, 6)
    assert y.shape == (4, 6)
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_mse_zero_on_equal():
    x = tensor(np.ones((3, 3)))
    assert mse(x, x).item() == 0.0


def test_gelu_values():
    # GELU(0) = 0 and GELU is odd-symmetric about x -> large |x| asymptotes
    out = gelu(tensor([0.0, 10.0, -10.0])).data
    np.testing.assert_allclose(out, [0.0, 10.0, 0.0], atol=1e-6)


def test_item_requires_scalar():
    with pytest.raises(ValueError):
        tensor(np.ones(2)).item()
