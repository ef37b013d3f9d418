import math

import numpy as np
import pytest
from scipy.stats import norm

from issuebert import nncore
from issuebert.errors import ConfigError, ShapeError
from issuebert.nncore import AttentionParams, Parameter

import gradcheck
from oracles import attention_oracle


def P(name, value, dtype=np.float64):
    return Parameter(name, np.asarray(value, dtype=dtype))


def test_affine_identity():
    y, _ = nncore.affine_forward(np.array([[1.0, 2.0]]), P("W", np.eye(2)), P("b", [0.0, 0.0]))
    np.testing.assert_array_equal(y, [[1.0, 2.0]])


def test_affine_hand_multiply():
    y, _ = nncore.affine_forward(np.array([[1.0, 0.0]]), P("W", [[3, 4], [5, 6]]), P("b", [1, 1]))
    np.testing.assert_array_equal(y, [[4.0, 5.0]])


def test_affine_bias_grad_is_batch_size():
    W, b = P("W", np.ones((3, 2))), P("b", np.zeros(2))
    x = np.random.default_rng(0).standard_normal((5, 3))
    _, cache = nncore.affine_forward(x, W, b)
    nncore.affine_backward(np.ones((5, 2)), cache, W, b)
    np.testing.assert_array_equal(b.grad, [5.0, 5.0])


def test_affine_shape_error():
    with pytest.raises(ShapeError, match=r"\(1, 3\).*\(2, 2\)"):
        nncore.affine_forward(np.ones((1, 3)), P("W", np.eye(2)), P("b", [0, 0]))


def test_grads_accumulate_until_zeroed():
    W, b = P("W", np.eye(2)), P("b", [0.0, 0.0])
    x = np.array([[1.0, 2.0]])
    for _ in range(2):
        _, c = nncore.affine_forward(x, W, b)
        nncore.affine_backward(np.ones((1, 2)), c, W, b)
    np.testing.assert_array_equal(b.grad, [2.0, 2.0])
    W.zero_grad()
    assert not W.grad.any() and W.grad.shape == W.value.shape


def test_layer_norm_examples():
    one, zero = P("g", np.ones(3)), P("b", np.zeros(3))
    y, _ = nncore.layer_norm_forward(np.array([[5.0, 5.0, 5.0]]), one, zero)
    np.testing.assert_array_equal(y, [[0.0, 0.0, 0.0]])
    y, _ = nncore.layer_norm_forward(np.array([[1.0, -1.0]]), P("g", [1, 1]), P("b", [0, 0]), eps=0.0)
    np.testing.assert_array_equal(y, [[1.0, -1.0]])
    beta = P("b", [0.5, -2.0, 3.0])
    y, _ = nncore.layer_norm_forward(np.random.default_rng(1).standard_normal((4, 3)), P("g", np.zeros(3)), beta)
    np.testing.assert_array_equal(y, np.broadcast_to(beta.value, (4, 3)))


def test_gelu_examples():
    y, _ = nncore.gelu_forward(np.array([0.0, 10.0, 1.0]))
    assert y[0] == 0.0
    assert abs(y[1] - 10.0) < 1e-4
    # 1 * Phi(1) from the Gaussian CDF.
    assert y[2] == pytest.approx(norm.cdf(1.0), abs=1e-12)
    assert y[2] == pytest.approx(0.8413, abs=5e-5)


def test_gelu_keeps_float32():
    y, _ = nncore.gelu_forward(np.ones(3, dtype=np.float32))
    assert y.dtype == np.float32


def test_cross_entropy_examples():
    loss, p, _ = nncore.softmax_cross_entropy(np.zeros((1, 3)), np.array([1]))
    np.testing.assert_allclose(p, [[1 / 3] * 3], rtol=1e-15)
    assert loss == pytest.approx(math.log(3), abs=1e-12)
    assert loss == pytest.approx(1.0986, abs=1e-4)

    loss, p, _ = nncore.softmax_cross_entropy(np.array([[1000.0, 0.0, 0.0]]), np.array([0]))
    assert np.isfinite(loss) and loss == pytest.approx(0.0, abs=1e-12)

    loss, _, _ = nncore.softmax_cross_entropy(np.array([[1.0, 2.0, 3.0]]), np.array([2]))
    direct = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    assert loss == pytest.approx(direct, rel=1e-12)
    assert loss == pytest.approx(0.4076, abs=5e-5)


def test_cross_entropy_label_range():
    with pytest.raises(ValueError):
        nncore.softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))


def test_cross_entropy_backward_formula():
    logits = np.array([[0.5, -1.0, 2.0], [0.0, 0.0, 0.0]])
    labels = np.array([2, 0])
    _, p, cache = nncore.softmax_cross_entropy(logits, labels)
    expected = (p - np.eye(3)[labels]) / 2
    np.testing.assert_allclose(nncore.softmax_cross_entropy_backward(cache), expected)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        logits = (rng.standard_normal((2, 3)) * rng.uniform(0.1, 50)).astype(np.float32)
        p = nncore.softmax(logits)
        assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-6)


def _identity_attention(h, dtype=np.float64):
    eye, z = np.eye(h, dtype=dtype), np.zeros(h, dtype=dtype)
    return AttentionParams(*(Parameter(n, (eye if n.startswith("w") else z).copy()) for n in
                             ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")))


def test_attention_singleton_sequence():
    x = np.array([[[0.3, -1.2, 2.0, 0.7]]])
    y, _ = nncore.attention_forward(x, np.ones((1, 1)), _identity_attention(4), heads=2)
    np.testing.assert_allclose(y, x, rtol=1e-15)


def test_attention_identical_tokens():
    row = np.array([0.1, 0.2, -0.3, 0.4])
    x = np.stack([row, row])[None]
    y, _ = nncore.attention_forward(x, np.ones((1, 2)), _identity_attention(4), heads=2)
    np.testing.assert_allclose(y[0], np.stack([row, row]), rtol=1e-12)


def test_attention_matches_loop_oracle():
    rng = np.random.default_rng(11)
    for trial in range(10):
        s, h, heads = 2 + trial % 3, 8, 2
        x = rng.standard_normal((1, s, h))
        mask = np.ones((1, s), dtype=int)
        if trial % 2:
            mask[0, -1] = 0
        ps = [Parameter(n, rng.standard_normal((h, h) if n.startswith("w") else (h,)))
              for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]
        y, _ = nncore.attention_forward(x, mask, AttentionParams(*ps), heads)
        ref = attention_oracle(x[0].tolist(), mask[0].tolist(), *[p.value.tolist() for p in ps], heads)
        np.testing.assert_allclose(y[0], ref, atol=1e-5)


def test_attention_all_masked_but_one():
    rng = np.random.default_rng(5)
    h = 8
    ps = [Parameter(n, rng.standard_normal((h, h) if n.startswith("w") else (h,)))
          for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]
    ap = AttentionParams(*ps)
    x = rng.standard_normal((1, 5, h))
    mask = np.array([[0, 0, 1, 0, 0]])
    y, _ = nncore.attention_forward(x, mask, ap, heads=4)
    value = x[0, 2] @ ap.wv.value + ap.bv.value
    expected = value @ ap.wo.value + ap.bo.value
    np.testing.assert_allclose(y[0], np.broadcast_to(expected, (5, h)), rtol=1e-12)


def test_attention_heads_must_divide():
    with pytest.raises(ConfigError):
        nncore.attention_forward(np.zeros((1, 2, 6)), np.ones((1, 2)), _identity_attention(6), heads=4)


@pytest.mark.parametrize("dtype", [np.float32, np.float64], ids=["f32", "f64"])
@pytest.mark.parametrize("layer", sorted(gradcheck.LAYER_CASES))
def test_layer_gradients(layer, dtype):
    _, tol = gradcheck.TOLERANCES[dtype]
    errs = [gradcheck.check_layer(gradcheck.LAYER_CASES[layer], seed, dtype) for seed in range(20)]
    assert max(errs) < tol


@pytest.mark.parametrize("dtype", [np.float32, np.float64], ids=["f32", "f64"])
def test_cross_entropy_gradient(dtype):
    _, tol = gradcheck.TOLERANCES[dtype]
    assert max(gradcheck.check_cross_entropy(seed, dtype) for seed in range(20)) < tol


@pytest.mark.parametrize("dtype", [np.float32, np.float64], ids=["f32", "f64"])
def test_two_layer_stack_gradient(dtype):
    # Composition of backwards checked end to end on a 2-block encoder.
    _, tol = gradcheck.TOLERANCES[dtype]
    assert max(gradcheck.check_model(seed, dtype, layers=2) for seed in range(5)) < tol


def test_dump_tensor():
    text = nncore.dump_tensor(np.array([[1.0, 2.0], [3.0, 4.5]]))
    assert text.splitlines() == ["shape 2 2", "1.0 2.0", "3.0 4.5"]


def test_check_finite():
    nncore.check_finite(np.ones(3), "x")
    with pytest.raises(FloatingPointError):
        nncore.check_finite(np.array([1.0, np.nan]), "x")
