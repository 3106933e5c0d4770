"""
test_optim.py
-------------
Testes do Adam e da norma global de gradientes.
"""

import math

import numpy as np
import pytest

import core.numcore as nc
from core.errors import ParameterError
from core.numcore import Tape, Tensor, backward
from core.optim import Adam, global_grad_norm


def _quadratic_step(x: Tensor, target: np.ndarray, opt: Adam) -> float:
    opt.zero_grad()
    with Tape():
        loss = nc.reduce_sum(nc.square(nc.sub(x, target)))
    backward(loss)
    opt.step()
    return float(loss.data)


def test_zero_gradient_leaves_params(check_precision, rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    before = x.data.copy()
    opt = Adam([x], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(x.data, before)


def test_first_step_moves_by_lr(check_precision, rng):
    x = Tensor(rng.normal(size=5), requires_grad=True)
    before = x.data.copy()
    x.grad[...] = rng.normal(size=5) * 10
    sign = np.sign(x.grad)
    Adam([x], lr=0.01).step()
    np.testing.assert_allclose(before - x.data, 0.01 * sign, rtol=1e-6)


def test_untouched_param(check_precision, rng):
    a = Tensor(rng.normal(size=3), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    b_before = b.data.copy()
    a.grad[...] = 1.0
    b.grad[...] = 1.0
    Adam([a], lr=0.1).step()
    np.testing.assert_array_equal(b.data, b_before)


def test_converges_on_quadratic(check_precision, rng):
    x = Tensor(np.zeros(4), requires_grad=True)
    target = np.array([3.0, -1.0, 0.5, 2.0])
    opt = Adam([x], lr=0.05)
    for _ in range(2000):
        loss = _quadratic_step(x, target, opt)
    assert loss < 1e-6
    np.testing.assert_allclose(x.data, target, atol=1e-3)


def test_global_norm_and_clipping(check_precision):
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    a.grad[...] = [3.0, 0.0]
    b.grad[...] = [4.0]
    assert global_grad_norm([a, b]) == 5.0

    # com clipping o primeiro passo de Adam continua sendo ±lr por coordenada
    Adam([a, b], lr=0.1, clip_norm=1.0).step()
    np.testing.assert_allclose(a.data, [-0.1, 0.0], atol=1e-9)
    np.testing.assert_allclose(b.data, [-0.1], atol=1e-9)


def test_zero_grad(check_precision, rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    x.grad[...] = 2.0
    Adam([x]).zero_grad()
    np.testing.assert_array_equal(x.grad, 0.0)


def test_fast_profile_keeps_dtype(rng):
    with nc.precision("fast"):
        x = Tensor(rng.normal(size=3), requires_grad=True)
        x.grad[...] = 1.0
        Adam([x]).step()
        assert x.data.dtype == np.float32


@pytest.mark.parametrize(
    "params, lr",
    [([], 1e-3), ([Tensor(np.zeros(2))], 1e-3), ([Tensor(np.zeros(2), requires_grad=True)], 0.0)],
)
def test_invalid_arguments(params, lr):
    with pytest.raises(ParameterError):
        Adam(params, lr=lr)


def test_norm_of_empty_list():
    assert math.isclose(global_grad_norm([]), 0.0)
