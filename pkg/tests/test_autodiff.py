import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoshape import autodiff as ad
from oracles import central_difference, rel_err, xent_grad_oracle


def test_add_elementwise():
    assert ad.forward(ad.add([1.0, 2.0], [3.0, 4.0])).tolist() == [4.0, 6.0]


def test_matmul_identity():
    a = np.random.default_rng(0).standard_normal((3, 3))
    assert np.array_equal(ad.matmul(np.eye(3), a).value, a)


def test_softmax_uniform():
    assert np.allclose(ad.softmax(np.zeros((1, 4))), 0.25)


def test_scalar_ops():
    assert float(ad.abs2_pairs([3.0, 4.0]).value[0]) == 25.0
    assert float(ad.reduce_mean([2.0, 4.0, 6.0]).value) == 4.0
    assert float(ad.exp(0.0).value) == 1.0


def test_power_rule():
    w = ad.leaf(3.0, trainable=True)
    grads = ad.backward(ad.square(w))
    assert float(grads[w]) == 6.0


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.ShapeError) as err:
        ad.add(np.zeros((2, 3)), np.zeros((4,)))
    assert "(2, 3)" in str(err.value) and "(4,)" in str(err.value)
    with pytest.raises(ad.ShapeError):
        ad.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_domain_errors_are_raised_not_nan():
    with pytest.raises(ad.DomainError):
        ad.log([1.0, 0.0])
    with pytest.raises(ad.DomainError):
        ad.sqrt([-1.0])


def test_backward_needs_scalar():
    x = ad.leaf(np.ones(3), trainable=True)
    with pytest.raises(ad.AutodiffError):
        ad.backward(ad.mul(x, 2.0))


def test_tensor_invariant():
    t = ad.Tensor([1, 2, 3, 4, 5, 6], shape=(2, 3))
    assert t.shape == (2, 3) and t.data.tolist() == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ad.ShapeError):
        ad.Tensor([1, 2, 3], shape=(2, 2))


def test_fourth_moment_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    x0 = rng.uniform(-2, 2, size=(8, 2))

    def f(x):
        return float(np.mean((x[:, 0] ** 2 + x[:, 1] ** 2) ** 2))

    x = ad.leaf(x0.copy(), trainable=True)
    loss = ad.reduce_mean(ad.square(ad.abs2_pairs(x)))
    g = ad.backward(loss)[x]
    assert rel_err(g, central_difference(f, x0)) < 1e-5


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(1)
    z0 = rng.standard_normal((5, 6)) * 3
    t = np.eye(6)[rng.integers(0, 6, 5)]
    z = ad.leaf(z0, trainable=True)
    g = ad.backward(ad.softmax_cross_entropy(z, t))[z]
    assert np.allclose(g, xent_grad_oracle(z0, t), rtol=1e-12, atol=1e-15)
    assert np.allclose(g * 5, ad.softmax(z0) - t, atol=1e-14)


def test_cross_entropy_confident_logits_do_not_overflow():
    z = ad.leaf(np.array([[1000.0, -1000.0, 0.0]]), trainable=True)
    loss = ad.softmax_cross_entropy(z, np.array([[1.0, 0.0, 0.0]]))
    assert np.isfinite(loss.value) and float(loss.value) == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(ad.backward(loss)[z]))


def _random_graph(op, rng):
    """Scalar graph exercising ``op`` plus the leaves to check."""
    shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)) * 2)
    a = ad.leaf(rng.uniform(-2, 2, shape), trainable=True)
    b = ad.leaf(rng.uniform(-2, 2, shape), trainable=True)
    pos = ad.leaf(rng.uniform(0.5, 2, shape), trainable=True)
    w = rng.standard_normal(shape)
    row = ad.leaf(rng.uniform(-2, 2, (shape[1],)), trainable=True)
    if op == "add":
        out, leaves = ad.add(a, row), [a, row]
    elif op == "sub":
        out, leaves = ad.sub(a, b), [a, b]
    elif op == "mul":
        out, leaves = ad.mul(a, b), [a, b]
    elif op == "div":
        out, leaves = ad.div(a, pos), [a, pos]
    elif op == "matmul":
        c = ad.leaf(rng.uniform(-2, 2, (shape[1], shape[0])), trainable=True)
        out, leaves = ad.matmul(a, c), [a, c]
        w = rng.standard_normal((shape[0], shape[0]))
    elif op == "exp":
        out, leaves = ad.exp(a), [a]
    elif op == "log":
        out, leaves = ad.log(pos), [pos]
    elif op == "square":
        out, leaves = ad.square(a), [a]
    elif op == "sqrt":
        out, leaves = ad.sqrt(pos), [pos]
    elif op == "abs2_pairs":
        out, leaves = ad.abs2_pairs(a), [a]
        w = rng.standard_normal((shape[0], shape[1] // 2))
    elif op == "reduce_mean":
        out, leaves = ad.reduce_mean(a, axis=0), [a]
        w = rng.standard_normal(shape[1])
    elif op == "reduce_sum":
        out, leaves = ad.reduce_sum(a, axis=1), [a]
        w = rng.standard_normal(shape[0])
    elif op == "broadcast":
        out, leaves = ad.broadcast(row, shape), [row]
    elif op == "relu":
        # keep entries away from the kink so central differences are valid
        vals = rng.uniform(0.1, 2, shape) * rng.choice([-1, 1], shape)
        a = ad.leaf(vals, trainable=True)
        out, leaves = ad.relu(a), [a]
    elif op == "softmax_xent":
        t = np.eye(shape[1])[rng.integers(0, shape[1], shape[0])]
        return ad.softmax_cross_entropy(a, t), [a]
    else:
        raise KeyError(op)
    return ad.reduce_sum(ad.mul(out, w)), leaves


OPS = ["add", "sub", "mul", "div", "matmul", "exp", "log", "square", "sqrt", "abs2_pairs",
       "reduce_mean", "reduce_sum", "broadcast", "relu", "softmax_xent"]


@pytest.mark.parametrize("op", OPS)
@pytest.mark.parametrize("seed", range(3))
def test_op_gradients(op, seed):
    root, leaves = _random_graph(op, np.random.default_rng(seed))
    assert ad.check_gradients(root, leaves) < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(OPS))
def test_op_gradients_property(seed, op):
    root, leaves = _random_graph(op, np.random.default_rng(seed))
    assert ad.check_gradients(root, leaves) < 1e-5


def test_repeat_passes_are_bit_identical():
    root, leaves = _random_graph("matmul", np.random.default_rng(7))
    first = ad.forward(root).copy()
    g1 = {k: v.copy() for k, v in ad.backward(root).items()}
    second = ad.forward(root)
    g2 = ad.backward(root)
    assert np.array_equal(first, second)
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_softmax_rows_sum_to_one(seed):
    z = np.random.default_rng(seed).standard_normal((4, 9)) * 20
    assert np.all(np.abs(ad.softmax(z).sum(axis=1) - 1) < 1e-12)


def test_shared_subexpression_accumulates():
    x = ad.leaf(2.0, trainable=True)
    y = ad.mul(x, x)
    z = ad.add(y, y)  # 2 x^2
    assert float(ad.backward(z)[x]) == 8.0


def test_gradient_check_restores_float64_values():
    root, leaves = _random_graph("softmax_xent", np.random.default_rng(9))
    before = [leaf.value.copy() for leaf in leaves]
    assert ad.check_gradients(root, leaves) < 1e-7
    assert all(leaf.value.dtype == np.float64 for leaf in leaves)
    assert all(np.array_equal(b, leaf.value) for b, leaf in zip(before, leaves))
    assert root.value.dtype == np.float64
