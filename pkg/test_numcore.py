"""
test_numcore.py
---------------
Testes do núcleo de diferenciação automática (core.numcore).

Gradientes conferidos contra diferenças finitas centrais no perfil
"check" (float64), passo 1e-6.
"""

import numpy as np
import pytest

from core import numcore as nc
from core.errors import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    NumericError,
    ParameterError,
    StateError,
)
from core.numcore import Tape, Tensor, backward, gradient_check, precision

GRAD_TOL = 1e-4


# ----------------------------------------------------------------------
# Precisão
# ----------------------------------------------------------------------
def test_precision_profiles():
    with precision("check"):
        assert Tensor([1.0]).data.dtype == np.float64
    with precision("fast"):
        assert Tensor([1.0]).data.dtype == np.float32


def test_invalid_precision_profile():
    with pytest.raises(ParameterError):
        nc.set_precision("quad")


# ----------------------------------------------------------------------
# matmul
# ----------------------------------------------------------------------
def test_matmul_identity(check_precision):
    out = nc.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3, 4], [5, 6]]))
    np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])


def test_matmul_row_by_column(check_precision):
    out = nc.matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
    np.testing.assert_array_equal(out.data, [[11]])


def test_matmul_dimension_error_names_shapes(check_precision):
    with pytest.raises(DimensionError) as info:
        nc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)


@pytest.mark.parametrize("seed", range(10))
def test_matmul_gradients(check_precision, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w = rng.normal(size=(4, 5))
    err = gradient_check(lambda: nc.reduce_sum(nc.matmul(a, b) * w), [a, b])
    assert err < GRAD_TOL


# ----------------------------------------------------------------------
# row_softmax
# ----------------------------------------------------------------------
def test_softmax_uniform_logits(check_precision):
    out = nc.row_softmax(Tensor([[0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-12)


def test_softmax_large_logit_does_not_overflow(check_precision):
    out = nc.row_softmax(Tensor([[1000.0, 0.0]]))
    assert out.data[0, 0] == 1.0
    assert out.data[0, 1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_rows_sum_to_one_and_shift_invariance(check_precision, rng):
    x = rng.normal(size=(5, 7))
    out = nc.row_softmax(Tensor(x)).data
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert (out >= 0).all()
    shifted = nc.row_softmax(Tensor(x + rng.normal(size=(5, 1)) * 10)).data
    np.testing.assert_allclose(shifted, out, atol=1e-6)


def test_softmax_non_finite_input(check_precision):
    with pytest.raises(NumericError):
        nc.row_softmax(Tensor([[np.nan, 0.0]]))


def test_softmax_gradient(check_precision, rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    assert gradient_check(lambda: nc.reduce_sum(nc.row_softmax(x) * w), [x]) < GRAD_TOL


# ----------------------------------------------------------------------
# layer_norm
# ----------------------------------------------------------------------
def _affine(n):
    return Tensor(np.ones(n)), Tensor(np.zeros(n))


def test_layer_norm_constant_row(check_precision):
    out = nc.layer_norm(Tensor([[1.0, 1.0, 1.0, 1.0]]), *_affine(4))
    np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0, 0.0]])


def test_layer_norm_symmetric_row(check_precision):
    out = nc.layer_norm(Tensor([[1.0, -1.0]]), *_affine(2))
    np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-5)


def test_layer_norm_moments(check_precision, rng):
    x = rng.normal(loc=3.0, scale=50.0, size=(3, 8))
    out = nc.layer_norm(Tensor(x), *_affine(8)).data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-6)


def test_layer_norm_needs_two_features(check_precision):
    with pytest.raises(DegenerateInputError):
        nc.layer_norm(Tensor([[1.0], [2.0]]), *_affine(1))


def test_layer_norm_gradient(check_precision, rng):
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    gain = Tensor(rng.normal(size=5), requires_grad=True)
    bias = Tensor(rng.normal(size=5), requires_grad=True)
    w = rng.normal(size=(3, 5))
    err = gradient_check(lambda: nc.reduce_sum(nc.layer_norm(x, gain, bias) * w), [x, gain, bias])
    assert err < GRAD_TOL


# ----------------------------------------------------------------------
# dropout
# ----------------------------------------------------------------------
def test_dropout_eval_is_identity(check_precision, rng):
    x = Tensor(rng.normal(size=(4, 4)))
    np.testing.assert_array_equal(nc.dropout(x, 0.5, training=False).data, x.data)


def test_dropout_zero_rate_is_identity(check_precision, rng):
    x = Tensor(rng.normal(size=(4, 4)))
    np.testing.assert_array_equal(nc.dropout(x, 0.0, training=True, rng=rng).data, x.data)


def test_dropout_inverted_scaling_keeps_expectation(check_precision, rng):
    out = nc.dropout(Tensor(np.ones(100_000)), 0.5, training=True, rng=rng).data
    assert 0.98 <= out.mean() <= 1.02
    assert set(np.unique(out)) <= {0.0, 2.0}


@pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
def test_dropout_invalid_rate(rate):
    with pytest.raises(ParameterError):
        nc.dropout(Tensor(np.ones(3)), rate, training=True, rng=np.random.default_rng(0))


def test_dropout_training_requires_rng():
    with pytest.raises(ContractError):
        nc.dropout(Tensor(np.ones(3)), 0.5, training=True)


# ----------------------------------------------------------------------
# backward / Tape
# ----------------------------------------------------------------------
def test_backward_sum_gives_ones(check_precision, rng):
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    with Tape():
        loss = nc.reduce_sum(x)
    backward(loss)
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_half_square_gives_x(check_precision, rng):
    x = Tensor(rng.normal(size=(5,)), requires_grad=True)
    with Tape():
        loss = nc.reduce_sum(x * x) / 2
    backward(loss)
    np.testing.assert_allclose(x.grad, x.data, atol=1e-12)


def test_backward_replays_in_reverse_order(check_precision):
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = nc.reduce_sum(nc.exp(nc.tanh(x)))
    recorded = tape.ops
    backward(loss)
    assert tape.replayed == list(reversed(recorded))


def test_double_backward_raises(check_precision):
    x = Tensor([1.0], requires_grad=True)
    with Tape():
        loss = nc.reduce_sum(x * 3)
    backward(loss)
    with pytest.raises(StateError):
        backward(loss)


def test_backward_non_scalar_raises(check_precision):
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        y = x * 2
    with pytest.raises(ContractError):
        backward(y)


def test_untracked_tensors_untouched(check_precision):
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([3.0, 4.0])
    with Tape():
        loss = nc.reduce_sum(x * c)
    backward(loss)
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, [3.0, 4.0])


def test_gradients_accumulate_across_uses(check_precision):
    x = Tensor([2.0], requires_grad=True)
    for _ in range(2):
        with Tape():
            loss = nc.reduce_sum(x * 5)
        backward(loss)
    np.testing.assert_array_equal(x.grad, [10.0])


def test_no_grad_suspends_recording(check_precision):
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        with nc.no_grad():
            y = x * 2
        z = x * 3
    assert not y.requires_grad
    assert z.requires_grad
    assert len(tape) == 1


def test_non_finite_forward_raises(check_precision):
    with pytest.raises(NumericError):
        nc.log(Tensor([0.0]))


# ----------------------------------------------------------------------
# Gradientes das demais primitivas
# ----------------------------------------------------------------------
UNARY_OPS = {
    "exp": nc.exp,
    "tanh": nc.tanh,
    "softplus": nc.softplus,
    "square": nc.square,
    "neg": nc.neg,
    "log": lambda t: nc.log(nc.exp(t) + 1.0),
}


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
def test_unary_gradients(check_precision, rng, name):
    op = UNARY_OPS[name]
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    assert gradient_check(lambda: nc.reduce_sum(op(x) * w), [x]) < GRAD_TOL


def test_broadcast_binary_gradients(check_precision, rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.uniform(1.0, 2.0, size=(4,)), requires_grad=True)
    w = rng.normal(size=(3, 4))

    def loss():
        return nc.reduce_sum(((a + b) * (a - b) / b) * w)

    assert gradient_check(loss, [a, b]) < GRAD_TOL


def test_shape_ops_gradients(check_precision, rng):
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    w = rng.normal(size=(3, 2))

    def loss():
        s = nc.stack([a, b], axis=-1)  # [2, 3, 2]
        c = nc.concat([nc.transpose(s, (1, 0, 2)), nc.reshape(a, (3, 2, 1))], axis=-1)  # [3, 2, 3]
        return nc.reduce_sum(nc.reduce_mean(nc.square(c), axis=-1) * w)

    assert gradient_check(loss, [a, b]) < GRAD_TOL


def test_reduce_min_gradient_goes_to_argmin(check_precision):
    x = Tensor([[3.0, 1.0, 2.0], [0.5, 4.0, 9.0]], requires_grad=True)
    with Tape():
        loss = nc.reduce_sum(nc.reduce_min(x, axis=1))
    backward(loss)
    np.testing.assert_array_equal(x.grad, [[0, 1, 0], [1, 0, 0]])


def test_relu_and_clip_masks(check_precision):
    x = Tensor([-1.0, 0.5, 3.0], requires_grad=True)
    with Tape():
        loss = nc.reduce_sum(nc.relu(x) + nc.clip(x, -0.5, 1.0))
    backward(loss)
    np.testing.assert_array_equal(x.grad, [0.0, 2.0, 1.0])


def test_determinism_same_seed(check_precision):
    def run():
        rng = np.random.default_rng(7)
        x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        with Tape():
            loss = nc.reduce_sum(nc.dropout(nc.tanh(x), 0.3, True, rng))
        backward(loss)
        return x.data.copy(), x.grad.copy()

    (d1, g1), (d2, g2) = run(), run()
    assert np.array_equal(d1, d2) and np.array_equal(g1, g2)
