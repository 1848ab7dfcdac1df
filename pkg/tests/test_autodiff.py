import numpy as np
import pytest

from pinnbench.autodiff import Tape


def _grad_of(fn, x0):
    tape = Tape()
    x = tape.leaf(np.asarray(x0, dtype=np.float64))
    out = fn(x)
    tape.backward(out)
    return out.value, x.grad


def test_linear_chain():
    val, grad = _grad_of(lambda x: ((x * 2.0 + 1.0) ** 2).mean(), np.array([1.0, -0.5]))
    # d/dx mean((2x+1)^2) = 4(2x+1)/n
    assert np.allclose(grad, 4 * (2 * np.array([1.0, -0.5]) + 1) / 2)
    assert val == pytest.approx(((2 * np.array([1.0, -0.5]) + 1) ** 2).mean())


def test_sub_neg_rsub():
    x0 = np.array([3.0, 4.0])
    _, g = _grad_of(lambda x: (1.0 - x).sum(), x0)
    assert np.allclose(g, -1.0)
    _, g = _grad_of(lambda x: (-x).sum(), x0)
    assert np.allclose(g, -1.0)
    _, g = _grad_of(lambda x: (x - 2.0).sum(), x0)
    assert np.allclose(g, 1.0)


def test_product_of_vars():
    x0 = np.array([2.0, 3.0])
    def fn(x):
        return (x * x * x).sum()   # x^3
    _, g = _grad_of(fn, x0)
    assert np.allclose(g, 3 * x0 ** 2)


def test_division_by_scalar_and_pow():
    x0 = np.array([2.0, -1.0])
    _, g = _grad_of(lambda x: ((x / 4.0) ** 3).sum(), x0)
    assert np.allclose(g, 3 * (x0 / 4.0) ** 2 / 4.0)


def test_var_division_unsupported():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(TypeError):
        _ = x / x


def test_mean_and_sum_agree():
    x0 = np.arange(6.0)
    _, g_mean = _grad_of(lambda x: (x ** 2).mean(), x0)
    _, g_sum = _grad_of(lambda x: (x ** 2).sum(), x0)
    assert np.allclose(g_sum, g_mean * x0.size)


def test_fan_out_accumulates():
    x0 = np.array([1.5])
    def fn(x):
        a = x * 2.0
        b = x * 3.0
        return (a + b).sum()
    _, g = _grad_of(fn, x0)
    assert np.allclose(g, 5.0)


def test_broadcast_unbroadcast_scalar_term():
    # array - broadcast scalar Var: grad of the scalar sums over the batch
    tape = Tape()
    arr = tape.leaf(np.array([1.0, 2.0, 3.0]))
    scale = tape.leaf(np.array(2.0))
    out = ((arr * scale) ** 2).sum()
    tape.backward(out)
    expect_scale = (2 * (np.array([1., 2., 3.]) * 2.0) * np.array([1., 2., 3.])).sum()
    assert scale.grad == pytest.approx(expect_scale)


def test_backward_requires_scalar():
    tape = Tape()
    x = tape.leaf(np.ones(4))
    y = x * 2.0
    with pytest.raises(ValueError):
        tape.backward(y)


def test_numeric_gradient_spotcheck():
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal(5)
    def fn(x):
        return ((x ** 2 - x * 0.5 + 1.0) ** 2).mean()
    _, g = _grad_of(fn, x0)
    h = 1e-6
    for i in range(5):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        fd = (fn_value(fn, xp) - fn_value(fn, xm)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def fn_value(fn, x0):
    tape = Tape()
    return float(fn(tape.leaf(x0)).value)
